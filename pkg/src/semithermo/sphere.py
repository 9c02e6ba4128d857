"""Riemann-sphere arithmetic.

Points of the sphere are plain Python/numpy complex numbers; the point at
infinity is the canonical value ``INFINITY = complex(inf, 0)``.  Every
non-finite complex value is folded onto it by :func:`ext`.

The metric is the chordal metric of the unit sphere (diameter 2) and areas
are normalized so that the whole sphere has area 1.
"""

from __future__ import annotations

import cmath
import math

import numpy as np

INFINITY = complex(math.inf, 0.0)

#: chordal diameter of the sphere
DIAMETER = 2.0
#: total normalized spherical area
TOTAL_AREA = 1.0
#: moduli above this are treated as infinity in containment tests
INFINITY_RADIUS = 1e8


def is_infinite(z) -> bool:
    return not cmath.isfinite(z)


def ext(z) -> complex:
    """Fold a scalar onto the extended plane (non-finite -> ``INFINITY``)."""
    z = complex(z)
    return z if cmath.isfinite(z) else INFINITY


def ext_array(z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    out = z.copy()
    out[~np.isfinite(out)] = INFINITY
    return out


def near_infinity(z) -> np.ndarray | bool:
    """Containment-test notion of infinity: non-finite or huge modulus."""
    z = np.asarray(z, dtype=complex)
    res = ~np.isfinite(z) | (np.abs(np.where(np.isfinite(z), z, 0)) > INFINITY_RADIUS)
    return bool(res) if res.ndim == 0 else res


def chordal_distance(a, b):
    """Chordal distance on the unit sphere; vectorized over numpy input.

    ``2|a-b| / sqrt((1+|a|^2)(1+|b|^2))`` for finite points and
    ``2 / sqrt(1+|a|^2)`` against infinity.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    fa = np.isfinite(a)
    fb = np.isfinite(b)
    a0 = np.where(fa, a, 0)
    b0 = np.where(fb, b, 0)
    ha = np.hypot(1.0, np.abs(a0))
    hb = np.hypot(1.0, np.abs(b0))
    lo = np.minimum(ha, hb)
    hi = np.maximum(ha, hb)  # ordered so that d(a, b) == d(b, a) bitwise
    with np.errstate(over="ignore", invalid="ignore"):
        d = 2.0 * (np.abs(a0 - b0) / hi) / lo
    d = np.where(fa & fb, d, 0.0)
    d = np.where(fa & ~fb, 2.0 / ha, d)
    d = np.where(~fa & fb, 2.0 / hb, d)
    d = np.minimum(d, DIAMETER)
    return float(d) if d.ndim == 0 else d


def antipode(z) -> complex:
    """The antipodal point ``-1/conj(z)``."""
    z = ext(z)
    if is_infinite(z):
        return 0j
    if z == 0:
        return INFINITY
    return -1.0 / z.conjugate()


def to_sphere(z) -> np.ndarray:
    """Inverse stereographic projection onto the unit sphere in R^3.

    Euclidean distances between the images are chordal distances, which
    lets KD-trees answer chordal nearest-neighbour queries.
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    out = np.empty(z.shape + (3,))
    fin = np.isfinite(z) & (np.abs(np.where(np.isfinite(z), z, 0)) < 1e150)
    zf = np.where(fin, z, 0)
    r2 = np.abs(zf) ** 2
    out[..., 0] = 2 * zf.real / (1 + r2)
    out[..., 1] = 2 * zf.imag / (1 + r2)
    out[..., 2] = (r2 - 1) / (r2 + 1)
    out[~fin] = (0.0, 0.0, 1.0)
    return out


def spherical_area_of_disk(chordal_radius: float) -> float:
    """Normalized area of a chordal disk (whole sphere = 1)."""
    # cap of height h on the unit sphere has area 2*pi*h; r^2 = 2h
    r = min(float(chordal_radius), DIAMETER)
    return (math.pi * r * r) / (4 * math.pi)
