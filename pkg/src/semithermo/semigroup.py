"""Finitely generated rational semigroups and their skew product.

Symbols are 0-based generator indices.  A word is a tuple of symbols listed
in *application order*: ``word_apply(G, (a, b), z) == f_b(f_a(z))``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .rational import RationalMap, critical_points, critical_values, evaluate, preimages_batch
from .sphere import chordal_distance, near_infinity, to_sphere

Word = tuple[int, ...]


class DegenerateSeedError(ValueError):
    """The seed of a backward orbit is an exceptional point."""


@dataclass(frozen=True)
class GeneratorSet:
    """Ordered generators ``f_0..f_{s-1}``, each of degree at least 2."""

    maps: tuple[RationalMap, ...]

    def __post_init__(self):
        maps = tuple(self.maps)
        if not maps:
            raise ValueError("a generator set needs at least one map")
        for j, f in enumerate(maps):
            if f.degree < 2:
                raise ValueError(f"generator {j} has degree {f.degree}; degree >= 2 is required")
        object.__setattr__(self, "maps", maps)

    @classmethod
    def polynomials(cls, *coefs) -> "GeneratorSet":
        """``GeneratorSet.polynomials([-1, 0, 1])`` is <z^2 - 1>."""
        return cls(tuple(RationalMap.polynomial(c) for c in coefs))

    @classmethod
    def from_json(cls, record) -> "GeneratorSet":
        if isinstance(record, (str, Path)):
            record = json.loads(Path(record).read_text())
        return cls(tuple(RationalMap.from_json(g) for g in record["generators"]))

    def to_json(self) -> dict:
        return {"generators": [f.to_json() for f in self.maps]}

    def __len__(self):
        return len(self.maps)

    def __getitem__(self, j) -> RationalMap:
        return self.maps[j]

    @property
    def s(self) -> int:
        return len(self.maps)

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(f.degree for f in self.maps)

    @property
    def degree_sum(self) -> int:
        return sum(self.degrees)

    @property
    def d(self) -> int:
        """Bound ``max(2 e_j - 2)`` on the number of critical points of a generator."""
        return max(2 * e - 2 for e in self.degrees)

    def check_word(self, word: Sequence[int]) -> Word:
        word = tuple(int(a) for a in word)
        for a in word:
            if not 0 <= a < self.s:
                raise ValueError(f"symbol {a} out of range for {self.s} generators")
        return word


@dataclass(frozen=True)
class SkewPoint:
    """A point ``(omega, z)`` of the skew product, ``omega`` truncated to a prefix."""

    prefix: Word
    z: complex
    consumed: Word = ()


def skew_step(G: GeneratorSet, p: SkewPoint) -> SkewPoint:
    """``(omega, z) -> (shift(omega), f_{omega_1}(z))``."""
    if not p.prefix:
        raise ValueError("cannot apply the skew product to an empty prefix")
    j = p.prefix[0]
    return SkewPoint(p.prefix[1:], complex(evaluate(G[j], p.z)), p.consumed + (j,))


def word_apply(G: GeneratorSet, word: Sequence[int], z):
    """Compose generators over ``word`` in application order (vectorized in ``z``)."""
    word = G.check_word(word)
    if not word:
        raise ValueError("word must be nonempty")
    for j in word:
        z = evaluate(G[j], z)
    return z


def birkhoff_sum(G: GeneratorSet, psi, prefix: Sequence[int], z, n: int) -> float:
    """``S_n psi`` along the skew orbit of ``(prefix, z)``."""
    prefix = G.check_word(prefix)
    if n > len(prefix):
        raise ValueError(f"prefix of length {len(prefix)} is too short for {n} steps")
    total = 0.0
    for k in range(n):
        j = prefix[k]
        total += float(psi.evaluate(j, z))
        z = evaluate(G[j], z)
    return total


# ---------------------------------------------------------------- Julia clouds
@dataclass(frozen=True, eq=False)
class JuliaCloud:
    points: np.ndarray
    seed: object = None
    burn_in: int = 0
    samples: int = 0
    z0: complex = 0j
    _tree: cKDTree | None = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=complex).reshape(-1))

    def __len__(self):
        return self.points.size

    @property
    def tree(self) -> cKDTree:
        if self._tree is None:
            object.__setattr__(self, "_tree", cKDTree(to_sphere(self.points)))
        return self._tree

    def distance_to(self, z) -> np.ndarray:
        """Chordal distance from each query point to the nearest cloud point."""
        d, _ = self.tree.query(to_sphere(z))
        return d

    def spacing(self, stat: str = "median") -> float:
        """Chordal nearest-neighbour distance within the cloud.

        ``stat="median"`` gives the typical resolution, ``stat="max"`` the
        covering scale (largest distance from a point to its neighbour).
        """
        if len(self) < 2:
            return 0.0
        d, _ = self.tree.query(self.tree.data, k=2)
        if stat == "median":
            return float(np.median(d[:, 1]))
        if stat == "max":
            return float(np.max(d[:, 1]))
        raise ValueError(f"unknown statistic {stat!r}")

    def hausdorff(self, other: "JuliaCloud") -> float:
        return float(max(np.max(self.distance_to(other.points)), np.max(other.distance_to(self.points))))


def julia_backward_sample(
    G: GeneratorSet,
    z0,
    burn_in: int = 50,
    samples: int = 1000,
    rng: np.random.Generator | None = None,
    chains: int = 1,
    seed=None,
) -> JuliaCloud:
    """Backward chaos game for ``J(G) = f_1^{-1}(J(G)) u ... u f_s^{-1}(J(G))``.

    Each step picks a generator uniformly and then one of its preimages
    uniformly.  With ``chains > 1`` that many independent orbits start from
    ``z0`` and run in lockstep; points are returned step-major.

    Raises :class:`DegenerateSeedError` when an orbit sits for 20 steps on a
    point whose whole backward fiber collapses onto itself (an exceptional
    point such as 0 for z^2).
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if chains < 1:
        raise ValueError("chains must be >= 1")
    if rng is None:
        rng = np.random.default_rng(seed)
    steps = burn_in + -(-samples // chains)
    z = np.full(chains, complex(z0))
    stuck = np.zeros(chains, dtype=int)
    out = []
    degrees = np.array(G.degrees)
    for step in range(steps):
        js = rng.integers(0, G.s, size=chains)
        picks = rng.random(chains)
        new = np.empty_like(z)
        still = np.zeros(chains, dtype=bool)
        for j in np.unique(js):
            sel = np.flatnonzero(js == j)
            fib = preimages_batch(G[j], z[sel])
            k = np.minimum((picks[sel] * degrees[j]).astype(int), degrees[j] - 1)
            new[sel] = fib[np.arange(fib.shape[0]), k]
            idle = chordal_distance(new[sel], z[sel]) < 1e-12
            if idle.any():
                # stuck only if the whole fiber collapses onto the point
                spread = chordal_distance(fib[idle], z[sel[idle]][:, None])
                still[sel[idle]] = np.max(spread, axis=1) < 1e-12
        stuck = np.where(still, stuck + 1, 0)
        if np.any(stuck >= 20):
            raise DegenerateSeedError(f"seed {complex(z0)} is exceptional: its backward orbit does not move")
        z = new
        if step >= burn_in:
            out.append(z.copy())
    pts = np.concatenate(out)[:samples] if out else np.empty(0, dtype=complex)
    return JuliaCloud(pts, seed=seed, burn_in=burn_in, samples=samples, z0=complex(z0))


# ------------------------------------------------------------------ conditions
@dataclass
class ConditionReport:
    e1: str
    e2_sufficient: str
    e3_heuristic: str
    delta: float
    spacing: float
    min_cv_distance: float
    e3_words_checked: int
    notes: list[str] = field(default_factory=list)

    def rows(self) -> list[tuple[str, str, str]]:
        return [
            ("E1", self.e1, "all generators have degree >= 2"),
            ("E2_sufficient", self.e2_sufficient, f"min_cv_distance={self.min_cv_distance!r};delta={self.delta!r}"),
            ("E3_heuristic", self.e3_heuristic, f"words_checked={self.e3_words_checked};delta={self.delta!r}"),
        ]


def _words_up_to(s: int, L: int, first: int, rng: np.random.Generator, cap: int = 4096):
    for n in range(1, L + 1):
        if s ** (n - 1) <= cap:
            for tail in itertools.product(range(s), repeat=n - 1):
                yield (first,) + tail
        else:
            for _ in range(256):
                yield (first,) + tuple(int(a) for a in rng.integers(0, s, size=n - 1))


def check_conditions(G: GeneratorSet, cloud: JuliaCloud, orbit_length: int = 6, delta: float | None = None) -> ConditionReport:
    """Heuristic evidence for the E-conditions on a rendered cloud.

    E1 holds by construction.  E2 is reported ``holds`` when every finite
    critical value of every generator is farther than ``delta`` from the
    cloud.  E3 is reported ``holds`` when no critical point near the cloud
    returns within ``delta`` of itself along any checked word of length at
    most ``orbit_length``.  Neither is ever reported as failing.
    """
    if len(cloud) == 0:
        raise ValueError("cloud must be nonempty")
    spacing = cloud.spacing()
    if delta is None:
        delta = 3.0 * spacing
    notes = []
    cvs = [c for f in G.maps for c in critical_values(f) if not near_infinity(c)]
    min_cv = float(np.min(cloud.distance_to(np.array(cvs)))) if cvs else float("inf")
    e2 = "holds" if min_cv > delta else "inconclusive"

    rng = np.random.default_rng(0)
    e3 = "holds"
    checked = 0
    for j, f in enumerate(G.maps):
        for c in set(critical_points(f)):
            if near_infinity(c) or cloud.distance_to(np.array([c]))[0] > delta:
                continue
            for word in _words_up_to(G.s, orbit_length, j, rng):
                checked += 1
                z = c
                near = True
                for a in word:
                    z = evaluate(G[a], z)
                    if near_infinity(z) or cloud.distance_to(np.array([z]))[0] > delta:
                        near = False
                        break
                if near and chordal_distance(z, c) <= delta:
                    e3 = "inconclusive"
                    notes.append(f"critical point {c} of generator {j} returns along word {word}")
                    break
    notes.append(f"E3 checked on words of length <= {orbit_length} only")
    return ConditionReport("holds", e2, e3, float(delta), spacing, min_cv, checked, notes)
