import math

import numpy as np
import pytest

from conftest import semigroup
from semithermo.branches import (
    Ball,
    ContinuationError,
    CriticalValueError,
    InverseBranch,
    build_family,
    continue_branch,
    decay_slope,
    distortion_ratio,
    symbol_tail,
    word_critical_values,
)
from semithermo.sphere import chordal_distance


def test_ball():
    b = Ball(1 + 0j, 0.3)
    assert b.chordal_radius == pytest.approx(chordal_distance(1, 1.3))
    pts = b.polar_points(8, 4)
    assert pts.shape == (8, 5)
    assert np.all(pts[:, 0] == 1)
    assert np.allclose(np.abs(pts[:, -1] - 1), 0.3)
    with pytest.raises(ValueError):
        Ball(0, 0)


@pytest.mark.parametrize("root,sign", [(1, 1), (-1, -1)])
def test_square_root_branches(z2, root, sign):
    ball = Ball(1 + 0j, 0.3)
    b = continue_branch(z2, (0,), ball, root)
    assert b.alive
    assert b.center_value == root
    assert np.max(np.abs(b.track - sign * np.sqrt(ball.polar_points(16, 64)))) < 1e-12
    assert b.forward_residual(z2) < 1e-8


def test_collision_near_critical_value(z2):
    b = continue_branch(z2, (0,), Ball(0.05 + 0j, 0.2), math.sqrt(0.05))
    assert b.status == "collided"
    with pytest.raises(CriticalValueError):
        continue_branch(z2, (0,), Ball(0j, 0.2), 0)


def test_root_must_be_a_preimage(z2):
    with pytest.raises(ValueError):
        continue_branch(z2, (0,), Ball(1 + 0j, 0.1), 0.5)


def test_word_branch_and_chain(z2z3):
    # inverse of z -> (z^2)^3 through 1, i.e. the principal sixth root
    ball = Ball(1 + 0j, 0.2)
    b = continue_branch(z2z3, (0, 1), ball, 1)
    assert b.alive
    assert np.max(np.abs(b.track - ball.polar_points(16, 64) ** (1 / 6))) < 1e-12
    assert b.evaluate_at(z2z3, 1.1) == pytest.approx(1.1 ** (1 / 6), abs=1e-12)
    assert b.forward_residual(z2z3) < 1e-8


def test_word_critical_values(basilica):
    cv = word_critical_values(basilica, (0, 0))
    finite = sorted(c.real for c in cv if np.isfinite(c))
    assert finite == pytest.approx([-1, 0])  # -1 and f(-1) = 0


def test_distortion_examples(z2):
    b = continue_branch(z2, (0,), Ball(1 + 0j, 0.3), 1)
    assert distortion_ratio(b, 0) == 1
    r = distortion_ratio(b, 0.5)
    assert 1 <= r < 2
    ts = [0, 0.1, 0.25, 0.5, 0.75, 0.9]
    vals = [distortion_ratio(b, t) for t in ts]
    assert all(a <= c for a, c in zip(vals, vals[1:]))
    assert distortion_ratio(b, 0.5, sample_pairs=200) <= r
    with pytest.raises(ValueError):
        distortion_ratio(b, 1.0)


def test_distortion_matches_closed_form(z2):
    # |(sqrt)'|_sph(y) = |1/(2 sqrt y)| (1 + |y|^2) / (1 + |y|)
    b = continue_branch(z2, (0,), Ball(1 + 0j, 0.3), 1)
    y = b.ball.polar_points(16, 64)[:, :33].ravel()
    d = (1 + np.abs(y) ** 2) / (2 * np.sqrt(np.abs(y)) * (1 + np.abs(y)))
    assert distortion_ratio(b, 0.5) == pytest.approx(d.max() / d.min(), rel=1e-9)


def test_family_level_zero(z2):
    fams = build_family(z2, 1, 0.1, 0.5, 1, 0)
    assert len(fams) == 1
    assert fams[0].level == 0 and len(fams[0].survivors) == 1 and fams[0].survivors[0].word == ()


def test_family_z2(z2):
    fams = build_family(z2, 1, 0.1, 0.5, 1, 6)
    assert [len(f.survivors) for f in fams] == [2**n for n in range(7)]
    for f in fams[1:]:
        assert f.pruned <= f.pruning_bound(z2.d, 0.5)
        for b in f.survivors:
            assert b.forward_residual(z2) < 1e-8
    assert decay_slope(fams) <= 0.5 * math.log(0.5) + 0.1
    d1 = fams[1].distortion_t50
    assert max(f.distortion_t50 for f in fams[1:]) <= 1.5 * d1


def test_family_basilica(basilica):
    fams = build_family(basilica, -1.618033988749895, 0.05, 0.5, 2, 4)
    assert decay_slope(fams) <= 0.5 * math.log(0.5) + 0.1
    for f in fams[1:]:
        assert f.pruned <= f.pruning_bound(basilica.d, 0.5)
    assert max(f.distortion_t50 for f in fams[1:]) <= 1.5 * fams[1].distortion_t50


def test_family_prunes_near_critical_values(basilica):
    # the ball around the fixed point -0.618 is close to the critical value -1;
    # large R forces critical-value pruning and the count is still bounded
    fams = build_family(basilica, -0.6180339887498949, 0.25, 0.9, 1, 4)
    assert sum(f.pruned_cv for f in fams) > 0
    for f in fams:
        assert f.pruned <= f.pruning_bound(basilica.d, 0.9)


def test_area_pruning(z2):
    # lam tiny: the first level is already too large
    fams = build_family(z2, 1, 0.1, 1e-4, 1, 3)
    assert fams[1].pruned_area == 2 and not fams[1].survivors
    assert len(fams) == 2 and fams[-1].notes


def test_symbol_tail():
    t = symbol_tail(3, pattern=[0, 2])
    assert [next(t) for _ in range(5)] == [0, 2, 0, 2, 0]
    a = symbol_tail(3, seed=5)
    b = symbol_tail(3, seed=5)
    assert [next(a) for _ in range(20)] == [next(b) for _ in range(20)]


def test_family_argument_checks(z2):
    with pytest.raises(ValueError):
        build_family(z2, 1, 0.1, 1.5, 1, 2)
    with pytest.raises(ValueError):
        build_family(z2, 1, 0.1, 0.5, 0, 2)
