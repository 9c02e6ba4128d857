"""Rational maps of the Riemann sphere.

A map is stored as a reduced pair ``P/Q`` of complex polynomials with
coefficients listed lowest degree first.  Everything that other modules call
in a hot loop (evaluation, spherical derivative, preimages) is vectorized
over numpy arrays of points.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly

from .sphere import INFINITY, chordal_distance

#: preimages closer than this (chordal) are merged into one multiple root
CLUSTER_TOL = 1e-7
#: largest chordal residual |f(w) - z| accepted from the root solver
RESIDUAL_TOL = 1e-6
#: relative size below which a leading coefficient counts as a degree drop
DEGREE_DROP_TOL = 1e-14


class RootFindingError(ArithmeticError):
    """The preimage solver did not produce roots with a small residual."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


def _trim(c) -> np.ndarray:
    c = np.atleast_1d(np.asarray(c, dtype=complex))
    nz = np.flatnonzero(c != 0)
    if nz.size == 0:
        return np.zeros(1, dtype=complex)
    return c[: nz[-1] + 1].copy()


@dataclass(frozen=True, eq=False)
class Polynomial:
    """Complex polynomial, coefficients lowest degree first."""

    coef: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coef", _trim(self.coef))

    @property
    def degree(self) -> int:
        if self.is_zero:
            return -1
        return len(self.coef) - 1

    @property
    def is_zero(self) -> bool:
        return len(self.coef) == 1 and self.coef[0] == 0

    def __call__(self, z):
        return npoly.polyval(z, self.coef)

    def deriv(self) -> "Polynomial":
        if len(self.coef) == 1:
            return Polynomial([0])
        return Polynomial(npoly.polyder(self.coef))

    def padded(self, n: int) -> np.ndarray:
        """Coefficients padded with zeros to length ``n``."""
        out = np.zeros(n, dtype=complex)
        out[: len(self.coef)] = self.coef
        return out

    def __eq__(self, other):
        return isinstance(other, Polynomial) and np.array_equal(self.coef, other.coef)

    def __hash__(self):
        return hash(tuple(self.coef))

    def __repr__(self):
        return f"Polynomial({list(self.coef)})"


COPRIME_TOL = 1e-10


def _common_root_gap(p: np.ndarray, q: np.ndarray) -> float:
    """Smallest normalized value of each polynomial at the other's roots.

    ``|q(a)| / (|q|_2 (1 + |a|^2)^(deg q / 2))`` lies in [0, 1] and vanishes
    exactly at a common root; unlike the resultant it does not shrink
    geometrically with the degrees.
    """
    gaps = [math.inf]
    for a, b in ((p, q), (q, p)):
        if len(a) < 2:
            continue
        r = np.roots(a[::-1])
        val = np.abs(npoly.polyval(r, b)) / (np.linalg.norm(b) * np.hypot(1.0, np.abs(r)) ** (len(b) - 1))
        gaps.append(float(np.min(val)))
    return min(gaps)


@dataclass(frozen=True, eq=False)
class RationalMap:
    """Rational map ``num/den`` of the sphere of degree ``max(deg num, deg den)``.

    Coefficients are rescaled so the largest has modulus 1; the map itself is
    unchanged.  Construction rejects constant maps and pairs with a common
    root (see :func:`_common_root_gap`, tolerance ``1e-10``).
    """

    num: Polynomial
    den: Polynomial
    degree: int = field(init=False)

    def __post_init__(self):
        num = self.num if isinstance(self.num, Polynomial) else Polynomial(self.num)
        den = self.den if isinstance(self.den, Polynomial) else Polynomial(self.den)
        if den.is_zero:
            raise ValueError("denominator is the zero polynomial")
        scale = max(np.max(np.abs(num.coef)), np.max(np.abs(den.coef)))
        num = Polynomial(num.coef / scale)
        den = Polynomial(den.coef / scale)
        e = max(num.degree, den.degree)
        if e < 1:
            raise ValueError("rational map must be non-constant")
        if not num.is_zero:
            gap = _common_root_gap(num.coef, den.coef)
            if gap <= COPRIME_TOL:
                raise ValueError(f"numerator and denominator share a root (gap {gap:.3e})")
        else:
            raise ValueError("rational map must be non-constant")
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)
        object.__setattr__(self, "degree", e)
        # homogeneous data used at and near infinity
        pn = num.padded(e + 1)
        qn = den.padded(e + 1)
        wr = Polynomial(npoly.polysub(npoly.polymul(npoly.polyder(pn), qn), npoly.polymul(pn, npoly.polyder(qn))))
        prev = Polynomial(pn[::-1])
        qrev = Polynomial(qn[::-1])
        wrev = Polynomial(
            npoly.polysub(npoly.polymul(prev.deriv().coef, qrev.coef), npoly.polymul(prev.coef, qrev.deriv().coef))
        )
        object.__setattr__(self, "_pn", pn)
        object.__setattr__(self, "_qn", qn)
        object.__setattr__(self, "_wronskian", wr)
        object.__setattr__(self, "_rev", (prev, qrev, wrev))

    # ------------------------------------------------------------------ builders
    @classmethod
    def polynomial(cls, coef) -> "RationalMap":
        return cls(Polynomial(coef), Polynomial([1]))

    @classmethod
    def from_json(cls, record: dict) -> "RationalMap":
        def parse(items):
            # coefficients low to high, each ``[re, im]`` or a real number
            return [complex(c) if np.isscalar(c) else complex(c[0], c[1]) for c in items]

        return cls(Polynomial(parse(record["num"])), Polynomial(parse(record.get("den", [[1, 0]]))))

    def to_json(self) -> dict:
        return {
            "num": [[float(c.real), float(c.imag)] for c in self.num.coef],
            "den": [[float(c.real), float(c.imag)] for c in self.den.coef],
        }

    @property
    def is_polynomial(self) -> bool:
        return self.den.degree == 0

    @property
    def wronskian(self) -> Polynomial:
        """``P'Q - PQ'``; its roots are the finite critical points."""
        return self._wronskian

    def __repr__(self):
        return f"RationalMap(num={list(self.num.coef)}, den={list(self.den.coef)})"

    # ---------------------------------------------------------------- evaluation
    def __call__(self, z):
        return evaluate(self, z)

    def compose(self, inner: "RationalMap") -> "RationalMap":
        """``self o inner``."""
        e = self.degree
        p, q = inner.num.coef, inner.den.coef
        top = np.zeros(1, dtype=complex)
        bot = np.zeros(1, dtype=complex)
        for k in range(e + 1):
            term = npoly.polymul(npoly.polypow(p, k), npoly.polypow(q, e - k))
            top = npoly.polyadd(top, self._pn[k] * term)
            bot = npoly.polyadd(bot, self._qn[k] * term)
        return RationalMap(Polynomial(top), Polynomial(bot))


def _split(z):
    z = np.asarray(z, dtype=complex)
    fin = np.isfinite(z)
    inner = fin & (np.abs(np.where(fin, z, 0)) <= 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(fin, 1.0 / np.where(inner | ~fin, 1.0, z), 0.0)
    return z, inner, w


def evaluate(f: RationalMap, z):
    """Value of ``f`` on the sphere; poles and infinity map through the chart at infinity."""
    z, inner, w = _split(z)
    prev, qrev, _ = f._rev
    zi = np.where(inner, z, 0)
    top = np.where(inner, f.num(zi), prev(w))
    bot = np.where(inner, f.den(zi), qrev(w))
    with np.errstate(divide="ignore", invalid="ignore"):
        val = top / bot
    val = np.where(bot == 0, INFINITY, val)
    val = np.where(np.isfinite(val), val, INFINITY)
    return complex(val) if val.ndim == 0 else val


def derivative(f: RationalMap, z):
    """Euclidean derivative ``W/Q^2`` at finite points (infinite at poles)."""
    z = np.asarray(z, dtype=complex)
    q = f.den(z)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = f.wronskian(z) / (q * q)
    return complex(d) if d.ndim == 0 else d


def spherical_derivative(f: RationalMap, z):
    """Norm of the derivative with respect to the spherical metric.

    Uses the homogeneous form ``|W|(1+|z|^2)/(|P|^2+|Q|^2)``, which stays
    finite at poles; for ``|z| > 1`` (including infinity) the same formula is
    applied to ``w -> f(1/w)`` at ``w = 1/z``.
    """
    z, inner, w = _split(z)
    prev, qrev, wrev = f._rev
    zi = np.where(inner, z, 0)
    x = np.where(inner, zi, w)
    P = np.where(inner, f.num(zi), prev(w))
    Q = np.where(inner, f.den(zi), qrev(w))
    W = np.where(inner, f.wronskian(zi), wrev(w))
    d = np.abs(W) * (1.0 + np.abs(x) ** 2) / (np.abs(P) ** 2 + np.abs(Q) ** 2)
    return float(d) if d.ndim == 0 else d


# ------------------------------------------------------------------ root finding
def _companion_roots(c: np.ndarray) -> np.ndarray:
    """Roots of each row of ``c`` (low->high, full degree), shape (K, deg)."""
    K, n1 = c.shape
    deg = n1 - 1
    if deg == 1:
        return (-c[:, 0] / c[:, 1])[:, None]
    if deg == 2:
        a, b, cc = c[:, 2], c[:, 1], c[:, 0]
        disc = np.sqrt(b * b - 4 * a * cc)
        # pick the sign that avoids cancellation
        sgn = np.where((np.conj(b) * disc).real >= 0, 1.0, -1.0)
        qq = -0.5 * (b + sgn * disc)
        r1 = np.where(qq != 0, qq / a, 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            r2 = np.where(qq != 0, cc / qq, 0)
        return np.stack([r1, r2], axis=1)
    comp = np.zeros((K, deg, deg), dtype=complex)
    comp[:, np.arange(1, deg), np.arange(deg - 1)] = 1.0
    comp[:, :, -1] = -c[:, :deg] / c[:, deg : deg + 1]
    return np.linalg.eigvals(comp)


def _newton_polish(coef: np.ndarray, roots: np.ndarray) -> np.ndarray:
    """One guarded Newton step per root on the row polynomials."""
    deg = coef.shape[1] - 1
    dcoef = coef[:, 1:] * np.arange(1, deg + 1)
    val = np.zeros_like(roots)
    dval = np.zeros_like(roots)
    for k in range(deg, -1, -1):
        val = val * roots + coef[:, k : k + 1]
    for k in range(deg - 1, -1, -1):
        dval = dval * roots + dcoef[:, k : k + 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        cand = roots - val / dval
    newval = np.zeros_like(roots)
    for k in range(deg, -1, -1):
        newval = newval * cand + coef[:, k : k + 1]
    ok = np.isfinite(cand) & (np.abs(newval) < np.abs(val))
    return np.where(ok, cand, roots)


def preimages_batch(f: RationalMap, z) -> np.ndarray:
    """All ``f.degree`` preimages of each point of ``z``, with multiplicity.

    Returns an array of shape ``z.shape + (e,)``.  Roots of ``P - zQ`` are
    found from companion matrices and polished by one Newton step; when the
    degree of ``P - zQ`` drops the missing roots are placed at infinity.
    """
    z = np.asarray(z, dtype=complex)
    shape = z.shape
    zf = z.reshape(-1)
    e = f.degree
    out = np.empty((zf.size, e), dtype=complex)
    fin = np.isfinite(zf)
    with np.errstate(invalid="ignore"):
        coef = f._pn[None, :] - np.where(fin, zf, 0)[:, None] * f._qn[None, :]
    scale = np.max(np.abs(coef), axis=1, keepdims=True)
    scale[scale == 0] = 1.0
    coef = coef / scale
    full = fin & (np.abs(coef[:, e]) > DEGREE_DROP_TOL)
    if np.any(full):
        c = coef[full]
        r = _companion_roots(c)
        r = _newton_polish(c, r)
        out[full] = r
    for idx in np.flatnonzero(~full):
        out[idx] = _preimages_slow(f, zf[idx])
    bad = ~np.isfinite(out) & full[:, None]
    if np.any(bad):
        raise RootFindingError("root solver returned non-finite roots", float("inf"))
    if zf.size:
        img = evaluate(f, out)
        res = chordal_distance(img, np.broadcast_to(zf[:, None], out.shape))
        worst = float(np.max(res))
        if worst > RESIDUAL_TOL:
            raise RootFindingError("preimage residual too large", worst)
    return out.reshape(shape + (e,))


def _preimages_slow(f: RationalMap, z: complex) -> np.ndarray:
    e = f.degree
    if not np.isfinite(z):
        poly = f._qn
    else:
        poly = f._pn - z * f._qn
    poly = _trim(poly)
    deg = len(poly) - 1
    if poly.size == 1 and poly[0] == 0:
        raise RootFindingError("degenerate preimage equation")
    roots = np.full(e, INFINITY, dtype=complex)
    if deg > 0:
        poly = poly / np.max(np.abs(poly))
        # treat tiny leading coefficients as exact degree drops
        while deg > 0 and abs(poly[deg]) <= DEGREE_DROP_TOL:
            deg -= 1
        if deg > 0:
            c = poly[None, : deg + 1]
            r = _newton_polish(c, _companion_roots(c))
            roots[:deg] = r[0]
    return roots


def cluster_multiset(points, tol: float = CLUSTER_TOL) -> tuple[complex, ...]:
    """Merge points closer than ``tol`` (chordal) and sort deterministically.

    Each cluster is replaced by its mean repeated with the cluster's size,
    so the multiset keeps its cardinality.
    """
    pts = [complex(p) for p in points]
    n = len(pts)
    label = list(range(n))

    def find(i):
        while label[i] != i:
            label[i] = label[label[i]]
            i = label[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if chordal_distance(pts[i], pts[j]) < tol:
                label[find(i)] = find(j)
    groups: dict[int, list[complex]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(pts[i])
    out = []
    for members in groups.values():
        if any(not np.isfinite(m) for m in members):
            rep = INFINITY
        else:
            rep = complex(np.mean(members))
        out.extend([rep] * len(members))
    return tuple(sorted(out, key=lambda w: (not cmath.isfinite(w), w.real, w.imag)))


def preimages(f: RationalMap, z) -> tuple[complex, ...]:
    """Multiset ``f^{-1}(z)`` of size ``f.degree``."""
    return cluster_multiset(preimages_batch(f, np.asarray([z], dtype=complex))[0])


def critical_points(f: RationalMap) -> tuple[complex, ...]:
    """Critical points with multiplicity (``2e - 2`` of them)."""
    n = 2 * f.degree - 2
    w = f.wronskian
    roots = []
    if w.degree > 0:
        c = w.coef / np.max(np.abs(w.coef))
        r = _companion_roots(c[None, :])
        roots = list(_newton_polish(c[None, :], r)[0])
    roots += [INFINITY] * (n - len(roots))
    return cluster_multiset(roots)


def critical_values(f: RationalMap) -> tuple[complex, ...]:
    return tuple(evaluate(f, c) for c in critical_points(f))
