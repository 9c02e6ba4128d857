import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semithermo.sphere import (
    INFINITY,
    antipode,
    chordal_distance,
    near_infinity,
    spherical_area_of_disk,
    to_sphere,
)

finite = st.complex_numbers(max_magnitude=1e4, allow_nan=False, allow_infinity=False)
point = st.one_of(finite, st.just(INFINITY))


def test_examples():
    assert chordal_distance(0, 0) == 0
    assert chordal_distance(0, INFINITY) == 2
    assert chordal_distance(INFINITY, 0) == 2
    assert chordal_distance(1, -1) == pytest.approx(2, abs=1e-15)
    assert chordal_distance(INFINITY, INFINITY) == 0


def test_formula_against_hand_values():
    a, b = 1 + 2j, -0.5j
    want = 2 * abs(a - b) / math.sqrt((1 + abs(a) ** 2) * (1 + abs(b) ** 2))
    assert chordal_distance(a, b) == pytest.approx(want, rel=1e-15)
    assert chordal_distance(3, INFINITY) == pytest.approx(2 / math.sqrt(10), rel=1e-15)


def test_vectorized_matches_scalar():
    rng = np.random.default_rng(0)
    a = rng.normal(size=50) + 1j * rng.normal(size=50)
    b = rng.normal(size=50) + 1j * rng.normal(size=50)
    vec = chordal_distance(a, b)
    assert vec.shape == (50,)
    assert np.allclose(vec, [chordal_distance(x, y) for x, y in zip(a, b)], rtol=0, atol=1e-15)


def test_lift_realizes_metric():
    rng = np.random.default_rng(1)
    a = rng.normal(size=100) + 1j * rng.normal(size=100)
    b = rng.normal(size=100) * 10 + 1j * rng.normal(size=100)
    d = np.linalg.norm(to_sphere(a) - to_sphere(b), axis=-1)
    assert np.allclose(d, chordal_distance(a, b), atol=1e-14)
    assert np.allclose(np.linalg.norm(to_sphere(a), axis=-1), 1)


@settings(max_examples=1000, deadline=None)
@given(point, point, point)
def test_triangle_inequality(a, b, c):
    assert chordal_distance(a, c) <= chordal_distance(a, b) + chordal_distance(b, c) + 1e-12


@settings(max_examples=300, deadline=None)
@given(point, point)
def test_bounds_and_symmetry(a, b):
    d = chordal_distance(a, b)
    assert 0 <= d <= 2
    assert d == chordal_distance(b, a)


@settings(max_examples=300, deadline=None)
@given(finite.filter(lambda z: 1e-3 < abs(z) < 1e3))
def test_antipodes_at_diameter(z):
    assert chordal_distance(z, antipode(z)) == pytest.approx(2, abs=1e-12)


def test_near_infinity_threshold():
    assert near_infinity(INFINITY)
    assert near_infinity(2e8)
    assert not near_infinity(1e7)
    assert chordal_distance(1.0000001e8, INFINITY) < 2e-8


def test_area_normalization():
    # a cap of chordal radius 2 is the whole sphere
    assert spherical_area_of_disk(2.0) == pytest.approx(1.0)
    # hemisphere: chordal radius sqrt(2)
    assert spherical_area_of_disk(math.sqrt(2)) == pytest.approx(0.5)
