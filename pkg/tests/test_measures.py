import math
import time

import numpy as np
import pytest
from scipy import sparse

from conftest import BIG, arclength_weights, cloud, semigroup
from semithermo import Potential
from semithermo.measures import (
    LeakError,
    ReducibleOperatorError,
    UlamOperator,
    build_grid,
    build_ulam,
    equilibrium_from,
    invariance_residual,
    jacobian_residual,
    leading_triple,
    total_variation,
)


@pytest.fixture(scope="module")
def z2_setup():
    G = semigroup("z2")
    psi = Potential.zero(1)
    grid = build_grid(cloud("z2", BIG), 1024)
    op = build_ulam(G, psi, grid)
    return G, psi, grid, op, leading_triple(op)


def test_grid_on_circle():
    c = cloud("z2")
    grid = build_grid(c, 256)
    assert 0 < grid.size < 256
    # retained cells hug the circle
    assert np.max(np.abs(np.abs(grid.centers) - 1)) <= grid.side * math.sqrt(2) / 2 + 1e-12
    cells = grid.locate(c.points)
    assert np.all(cells >= 0)
    assert np.array_equal(grid.locate(grid.centers), np.arange(grid.size))
    # half-open cells: a point on a lower-left corner belongs to that cell
    corner = grid.corners()[0, 0]
    assert grid.locate(corner) == 0


def test_grid_degenerate_inputs():
    g = build_grid(np.array([0.3 + 0.2j]), 10)
    assert g.size == 1
    with pytest.raises(ValueError):
        build_grid(cloud("z2"), 0)


def test_grid_basilica_count():
    g = build_grid(cloud("basilica"), 4096)
    assert 1 < g.size < 4096


def test_row_sums_z2(z2_setup):
    G, psi, grid, op, _ = z2_setup
    assert np.allclose(op.row_sums() + op.row_leak, 2.0, rtol=1e-12)
    assert op.leak < 0.05


def test_row_sums_z2z3():
    G = semigroup("z2_z3")
    op = build_ulam(G, Potential.zero(2), build_grid(cloud("z2_z3", BIG), 512))
    assert np.allclose(op.row_sums() + op.row_leak, 5.0, rtol=1e-12)
    assert op.leak < 0.05


def test_shift_scales_matrix(z2_setup):
    G, psi, grid, op, triple = z2_setup
    op_c = build_ulam(G, psi + 0.7, grid)
    diff = op_c.matrix - math.exp(0.7) * op.matrix
    # entries are sums of up to 512 terms, so equality holds to rounding only
    assert abs(diff).max() <= 1e-13 * math.exp(0.7) * abs(op.matrix).max()
    triple_c = leading_triple(op_c)
    assert triple_c.lam == pytest.approx(math.exp(0.7) * triple.lam, rel=1e-12)
    assert jacobian_residual(G, psi + 0.7, op_c, triple_c, grid) == pytest.approx(
        jacobian_residual(G, psi, op, triple, grid), abs=1e-12
    )


def test_leak_error():
    # 40 circle points on a fine grid: most preimages land in empty cells
    sparse_cloud = np.exp(2j * np.pi * np.arange(40) / 40)
    with pytest.raises(LeakError):
        build_ulam(semigroup("z2"), Potential.zero(1), build_grid(sparse_cloud, 4000), max_leak=0.2)


def test_triple_z2(z2_setup):
    G, psi, grid, op, triple = z2_setup
    lam, h, m = triple
    # Perron bracket: lam lies between the smallest and largest row sums
    rs = op.row_sums()
    assert rs.min() - 1e-12 <= lam <= rs.max() + 1e-12
    assert 2 - lam <= 2 * op.max_row_leak + 1e-6
    assert np.max(np.abs(h.values - 1)) < 0.05
    assert total_variation(m.masses, arclength_weights(grid)) < 0.05
    assert triple.residual_h < 1e-9 and triple.residual_m < 1e-9
    assert m.masses.sum() == pytest.approx(1, abs=1e-12)
    assert np.dot(m.masses, h.values) == pytest.approx(1, abs=1e-12)


def test_triple_z2z3():
    G = semigroup("z2_z3")
    op = build_ulam(G, Potential.zero(2), build_grid(cloud("z2_z3", BIG), 1024))
    lam = leading_triple(op).lam
    assert abs(lam - 5) <= 1e-3 + 5 * op.max_row_leak


def test_equilibrium(z2_setup):
    G, psi, grid, op, triple = z2_setup
    lam, h, m = triple
    mu = equilibrium_from(h, m)
    assert mu.masses.sum() == pytest.approx(1, abs=1e-12)
    assert np.all(mu.masses >= 0)
    assert total_variation(mu.masses, arclength_weights(grid)) < 0.05
    assert np.array_equal(equilibrium_from(np.ones(grid.size), m).masses, m.masses)


def test_random_starts_agree(z2_setup):
    *_, op, triple = z2_setup
    base = equilibrium_from(triple.h, triple.m).masses
    for seed in range(3):
        t = leading_triple(op, rng=np.random.default_rng(seed))
        assert total_variation(equilibrium_from(t.h, t.m).masses, base) < 1e-9


def test_jacobian_and_invariance_z2():
    G = semigroup("z2")
    psi = Potential.zero(1)
    grid = build_grid(cloud("z2", BIG), 512)
    op = build_ulam(G, psi, grid)
    triple = leading_triple(op)
    mu = equilibrium_from(triple.h, triple.m)
    assert jacobian_residual(G, psi, op, triple, grid) < 0.1
    assert jacobian_residual(G, psi, op, triple, grid, sample_size=100) < 0.1
    assert invariance_residual(G, mu, grid, op=op, m=triple.m) < 0.1
    mc = invariance_residual(G, mu, grid, sample_size=200_000, rng=np.random.default_rng(0))
    assert 0 <= mc < 0.1


def test_jacobian_needs_injective_cells():
    G = semigroup("z2")
    grid = build_grid(cloud("z2"), 1)
    op = build_ulam(G, Potential.zero(1), grid)
    triple = leading_triple(op)
    with pytest.raises(ValueError):
        jacobian_residual(G, Potential.zero(1), op, triple, grid)


def test_invariance_trivial_cases():
    G = semigroup("z2")
    # the fixed point 1 of z^2 as a one-cell cloud
    grid = build_grid(np.array([1 + 0j]), 1)
    assert invariance_residual(G, np.array([1.0]), grid) == 0
    grid = build_grid(cloud("z2"), 256)
    rng = np.random.default_rng(4)
    for _ in range(5):
        mu = rng.random(grid.size)
        r = invariance_residual(G, mu / mu.sum(), grid)
        assert 0 <= r <= 2


def test_reducible_matrix_rejected():
    M = sparse.csr_matrix(np.diag([1.0, 1.0]))
    op = UlamOperator(M, (M,), (M,), np.ones(2), np.zeros(2))
    with pytest.raises(ReducibleOperatorError):
        leading_triple(op)


def test_dominant_block_with_transient_cells():
    # a transient cell feeding an aperiodic block of radius 2, plus a weaker self loop
    M = sparse.csr_matrix(np.array([[1.0, 1.0, 0, 0], [1.0, 1.0, 0, 0], [1.0, 0, 0, 0], [0, 0, 0, 0.5]]))
    op = UlamOperator(M, (M,), (M,), np.ones(4), np.zeros(4))
    t = leading_triple(op)
    assert t.lam == pytest.approx(2.0)
    assert t.residual_h < 1e-9
