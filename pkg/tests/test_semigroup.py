import math

import numpy as np
import pytest

from conftest import cloud
from semithermo import GeneratorSet, Potential
from semithermo.rational import RationalMap, evaluate
from semithermo.semigroup import (
    DegenerateSeedError,
    SkewPoint,
    birkhoff_sum,
    check_conditions,
    julia_backward_sample,
    skew_step,
    word_apply,
)
from semithermo.sphere import chordal_distance


def test_generator_set_accessors(z2z3):
    assert z2z3.s == 2
    assert z2z3.degrees == (2, 3)
    assert z2z3.degree_sum == 5
    assert z2z3.d == 4


def test_degree_one_generator_rejected():
    with pytest.raises(ValueError):
        GeneratorSet.polynomials([0, 0, 1], [1, 1])


def test_json_round_trip(z2z3):
    G = GeneratorSet.from_json(z2z3.to_json())
    assert np.allclose(word_apply(G, (0, 1), 1.1), word_apply(z2z3, (0, 1), 1.1))


def test_skew_step_examples(z2, z2z3):
    p = skew_step(z2, SkewPoint((0, 0, 0), 2))
    assert p.prefix == (0, 0) and p.z == 4 and p.consumed == (0,)
    p = skew_step(z2z3, SkewPoint((1, 0), -1))
    assert p.prefix == (0,) and p.z == -1
    with pytest.raises(ValueError):
        skew_step(z2, SkewPoint((), 1))


def test_word_apply_examples(z2z3):
    assert word_apply(z2z3, (0, 1), 2) == 64
    assert word_apply(z2z3, (1, 0), 2) == 64
    G = GeneratorSet.polynomials([-1, 0, 1], [0, 0, 1])
    assert word_apply(G, (0, 1), 0) == 1
    with pytest.raises(ValueError):
        word_apply(z2z3, (2,), 1)


def test_skew_orbit_matches_word_apply():
    G = GeneratorSet.polynomials([-1, 0, 1], [0.3j, 0, 1], [0, 0, 0, 0.5])
    rng = np.random.default_rng(3)
    for _ in range(200):
        word = tuple(int(a) for a in rng.integers(0, 3, size=rng.integers(1, 6)))
        z = complex(*rng.normal(scale=0.7, size=2))
        p = SkewPoint(word, z)
        while p.prefix:
            p = skew_step(G, p)
        assert p.consumed == word
        assert chordal_distance(p.z, word_apply(G, word, z)) < 1e-10


def test_birkhoff_sum_examples(z2):
    c = Potential.constant(0.3, 1)
    assert birkhoff_sum(z2, c, (0, 0, 0), 1.7, 3) == pytest.approx(0.9)
    geo = Potential.geometric(z2, 1.0)
    assert birkhoff_sum(z2, geo, (0, 0), 1, 2) == pytest.approx(-2 * math.log(2))
    assert birkhoff_sum(z2, geo, (0,), 0.4, 0) == 0
    with pytest.raises(ValueError):
        birkhoff_sum(z2, c, (0,), 1, 2)


@pytest.mark.parametrize("name", ["z2", "z2_z3"])
def test_cloud_on_unit_circle(name):
    from conftest import semigroup

    pts = julia_backward_sample(semigroup(name), 2, burn_in=50, samples=1000, seed=5).points
    assert pts.size == 1000
    assert np.max(np.abs(np.abs(pts) - 1)) < 1e-6


def test_exceptional_seed_rejected(z2):
    with pytest.raises(DegenerateSeedError):
        julia_backward_sample(z2, 0, samples=100, seed=0)


def test_chains_do_not_change_the_law(z2):
    a = julia_backward_sample(z2, 2, samples=500, chains=1, seed=1)
    b = julia_backward_sample(z2, 2, samples=500, chains=50, seed=1)
    assert a.points.size == b.points.size == 500
    assert np.max(np.abs(np.abs(b.points) - 1)) < 1e-6


def test_seeded_runs_repeat(basilica):
    a = julia_backward_sample(basilica, 0.5 + 0.5j, samples=300, chains=10, seed=9)
    b = julia_backward_sample(basilica, 0.5 + 0.5j, samples=300, chains=10, seed=9)
    assert np.array_equal(a.points, b.points)


def test_basilica_cloud_has_bounded_orbits(basilica):
    # escape-radius oracle: points of the filled Julia set stay bounded
    # (30 steps: rounding errors off J grow like 2^n, 50 steps would lose them)
    z = cloud("basilica").points[::20].copy()
    for _ in range(30):
        z = z * z - 1
    assert np.all(np.abs(z) <= 2)


@pytest.mark.parametrize("name", ["z2", "z2_z3", "basilica"])
def test_cloud_forward_invariance(name):
    from conftest import semigroup

    G = semigroup(name)
    c = cloud(name)
    spacing = c.spacing("max")
    for f in G.maps:
        # skip the first step of every chain, whose predecessor was burnt in
        img = evaluate(f, c.points[500:])
        assert np.max(c.distance_to(img)) < 2 * spacing


@pytest.mark.parametrize("name", ["z2", "z2_z3"])
def test_seed_independence_hausdorff(name):
    from conftest import semigroup

    G = semigroup(name)
    a = julia_backward_sample(G, 2, samples=20000, chains=200, seed=1)
    b = julia_backward_sample(G, 0.3 - 0.1j, samples=20000, chains=200, seed=2)
    assert a.hausdorff(b) < 5 * max(a.spacing("max"), b.spacing("max"))


def test_conditions_z2(z2):
    rep = check_conditions(z2, cloud("z2"))
    assert rep.e1 == "holds"
    assert rep.e2_sufficient == "holds"
    assert rep.min_cv_distance == pytest.approx(math.sqrt(2), rel=1e-3)


def test_conditions_basilica(basilica):
    c = cloud("basilica")
    rep = check_conditions(basilica, c)
    assert rep.e2_sufficient == "holds"
    assert np.min(c.distance_to(np.array([0, -1]))) > rep.delta


def test_conditions_chebyshev_inconclusive():
    G = GeneratorSet.polynomials([-2, 0, 1])
    c = julia_backward_sample(G, 0.5 + 0.5j, samples=20000, chains=200, seed=0)
    assert np.max(np.abs(c.points.imag)) < 1e-3
    rep = check_conditions(G, c)
    assert rep.e2_sufficient == "inconclusive"
    assert rep.e1 == "holds"
