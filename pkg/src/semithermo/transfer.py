"""The Perron-Frobenius operator and pressure estimation.

For a symbol-local potential the operator acts on functions of ``z`` alone::

    L g(z) = sum_j sum_{x in f_j^{-1}(z)} exp(psi_j(x)) g(x)

(preimages with multiplicity).  ``L^n 1(z)`` is a sum over the backward
tree of depth ``n`` rooted at ``z``; it is evaluated either by enumerating
the whole tree or by an importance-weighted Monte Carlo walk down it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .potential import Potential
from .rational import preimages_batch
from .semigroup import GeneratorSet

NODE_BUDGET = 10**7
CHUNK = 1 << 16


class BudgetExceededError(RuntimeError):
    """The exact backward tree is larger than the node budget."""


def apply_operator(G: GeneratorSet, psi: Potential, g, z):
    """``L_psi g(z)`` for a vectorized function ``g`` of the point."""
    z = np.asarray(z, dtype=complex)
    total = np.zeros(z.shape)
    for j, f in enumerate(G.maps):
        x = preimages_batch(f, z)
        total = total + np.sum(np.exp(psi.evaluate(j, x)) * np.asarray(g(x), dtype=float), axis=-1)
    return float(total) if total.ndim == 0 else total


def _children(G: GeneratorSet, psi: Potential, points: np.ndarray, logw: np.ndarray):
    pts, lws = [], []
    for j, f in enumerate(G.maps):
        x = preimages_batch(f, points)
        pts.append(x.reshape(-1))
        lws.append((logw[:, None] + psi.evaluate(j, x)).reshape(-1))
    return np.concatenate(pts), np.concatenate(lws)


def log_iterates_exact(
    G: GeneratorSet,
    psi: Potential,
    z,
    n: int,
    budget: int = NODE_BUDGET,
    chunk: int = CHUNK,
    collapse: bool = True,
) -> np.ndarray:
    """``log L^k 1(z)`` for ``k = 0..n`` from the full backward tree.

    The tree is walked depth first in slices of at most ``chunk`` nodes and
    every level is reduced with log-sum-exp; the result does not depend on
    ``chunk`` beyond rounding.  When ``psi`` does not depend on the point
    (and ``collapse`` is set) each level contributes the same factor
    ``sum_j e_j exp(c_j)`` and no node needs to be expanded.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if collapse and psi.is_constant:
        factor = math.log(float(np.dot(G.degrees, np.exp(psi.constant_values()))))
        return factor * np.arange(n + 1, dtype=float)
    leaves = G.degree_sum**n
    if leaves > budget:
        raise BudgetExceededError(
            f"backward tree has {leaves} leaves, above the budget of {budget}; use the Monte Carlo estimator"
        )
    parts: list[list[float]] = [[] for _ in range(n + 1)]
    parts[0].append(0.0)

    def walk(points, logw, level):
        if level == n:
            return
        cp, cl = _children(G, psi, points, logw)
        parts[level + 1].append(float(logsumexp(cl)))
        for start in range(0, cp.size, chunk):
            walk(cp[start : start + chunk], cl[start : start + chunk], level + 1)

    walk(np.array([complex(z)]), np.zeros(1), 0)
    return np.array([float(logsumexp(p)) for p in parts])


def iterate_indicator_exact(G: GeneratorSet, psi: Potential, z, n: int, budget: int = NODE_BUDGET, **kw) -> float:
    """``L^n 1(z)`` by full backward-tree enumeration."""
    return math.exp(log_iterates_exact(G, psi, z, n, budget=budget, **kw)[-1])


def _mc_log_weights(G: GeneratorSet, psi: Potential, z, n: int, paths: int, rng: np.random.Generator) -> np.ndarray:
    """Log path weights of shape (paths, n + 1) for the importance walk."""
    E = G.degree_sum
    offsets = np.concatenate([[0], np.cumsum(G.degrees)])
    logE = math.log(E)
    x = np.full(paths, complex(z))
    logw = np.zeros((paths, n + 1))
    for k in range(n):
        u = rng.integers(0, E, size=paths)
        js = np.searchsorted(offsets, u, side="right") - 1
        step = np.empty(paths)
        nxt = np.empty_like(x)
        for j in range(G.s):
            sel = js == j
            if not np.any(sel):
                continue
            fib = preimages_batch(G[j], x[sel])
            r = u[sel] - offsets[j]
            nxt[sel] = fib[np.arange(fib.shape[0]), r]
            step[sel] = logE + psi.evaluate(j, nxt[sel])
        x = nxt
        logw[:, k + 1] = logw[:, k] + step
    return logw


def _mean_and_se(logw: np.ndarray) -> tuple[float, float, float]:
    """Mean, standard error and log-mean of ``exp(logw)`` along axis 0."""
    m = np.max(logw, axis=0)
    w = np.exp(logw - m)
    mean = np.mean(w, axis=0)
    sd = np.std(w, axis=0, ddof=1) if logw.shape[0] > 1 else np.zeros_like(mean)
    se = sd / math.sqrt(logw.shape[0])
    return mean * np.exp(m), se * np.exp(m), np.log(mean) + m


def iterate_indicator_mc(
    G: GeneratorSet, psi: Potential, z, n: int, paths: int, rng: np.random.Generator | None = None
) -> tuple[float, float]:
    """Unbiased Monte Carlo estimate of ``L^n 1(z)`` and its standard error.

    Each path picks one of the ``sum e_j`` (generator, preimage) branches
    uniformly per step and carries the weight ``sum e_j * exp(psi_j(x))``.
    """
    if paths < 1:
        raise ValueError("paths must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    logw = _mc_log_weights(G, psi, z, n, paths, rng)[:, -1:]
    mean, se, _ = _mean_and_se(logw)
    return float(mean[0]), float(se[0])


@dataclass
class PressureEstimate:
    z: complex
    a: np.ndarray  # a_n = log(L^n 1)/n for n = 1..n_max
    b: np.ndarray  # b_n = log L^{n+1} 1 - log L^n 1 for n = 0..n_max-1
    estimate: float
    dispersion: float
    method: str
    samples: int
    log_iterates: np.ndarray = field(repr=False, default=None)

    @property
    def n_max(self) -> int:
        return len(self.a)

    def rows(self):
        """CSV rows ``(n, a_n, b_n)`` for ``n = 0..n_max`` plus the estimate row."""
        out = []
        for n in range(self.n_max + 1):
            a = self.a[n - 1] if n >= 1 else ""
            b = self.b[n] if n < self.n_max else ""
            out.append((n, a, b))
        out.append(("estimate", self.estimate, self.dispersion))
        return out


def _estimate_from_logs(z, logs: np.ndarray, method: str, samples: int) -> PressureEstimate:
    n_max = len(logs) - 1
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if not np.all(np.isfinite(logs)):
        raise FloatingPointError("non-finite iterate of the transfer operator")
    a = logs[1:] / np.arange(1, n_max + 1)
    b = np.diff(logs)
    tail = b[-math.ceil(n_max / 3) :]
    return PressureEstimate(
        complex(z), a, b, float(np.mean(tail)), float(np.std(tail)), method, samples, logs
    )


def pressure_pointwise(
    G: GeneratorSet,
    psi: Potential,
    z,
    n_max: int,
    mode: str = "exact",
    paths: int = 10**4,
    rng: np.random.Generator | None = None,
    budget: int = NODE_BUDGET,
    chunk: int = CHUNK,
    collapse: bool = True,
) -> PressureEstimate:
    """Growth rate of ``L^n 1(z)``, extracted from the increments ``b_n``.

    The estimate is the mean of the last third of the increments; their
    standard deviation is reported as ``dispersion`` so that a sequence that
    has not settled is visible.
    """
    if mode == "exact":
        logs = log_iterates_exact(G, psi, z, n_max, budget=budget, chunk=chunk, collapse=collapse)
        samples = 0 if (collapse and psi.is_constant) else G.degree_sum**n_max
    elif mode == "montecarlo":
        rng = np.random.default_rng() if rng is None else rng
        _, _, logs = _mean_and_se(_mc_log_weights(G, psi, z, n_max, paths, rng))
        samples = paths
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return _estimate_from_logs(z, logs, mode, samples)


@dataclass
class GlobalPressure:
    estimate: float
    spread: float
    dispersion: float
    pointwise: list[PressureEstimate]

    @property
    def points(self) -> np.ndarray:
        return np.array([p.z for p in self.pointwise])


def sample_points(cloud, M: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """``M`` distinct cloud points: evenly spaced indices, or random ones with ``rng``."""
    pts = cloud.points if hasattr(cloud, "points") else np.asarray(cloud, dtype=complex)
    if M < 1:
        raise ValueError("M must be >= 1")
    M = min(M, pts.size)
    if rng is None:
        idx = np.linspace(0, pts.size - 1, M).round().astype(int)
    else:
        idx = np.sort(rng.choice(pts.size, size=M, replace=False))
    return pts[idx]


def pressure_global(
    G: GeneratorSet,
    psi: Potential,
    cloud,
    M: int,
    n_max: int,
    mode: str = "exact",
    rng: np.random.Generator | None = None,
    **kw,
) -> GlobalPressure:
    """Maximum of pointwise estimates over ``M`` cloud points, with their spread."""
    pts = sample_points(cloud, M)
    ests = [pressure_pointwise(G, psi, z, n_max, mode=mode, rng=rng, **kw) for z in pts]
    vals = np.array([p.estimate for p in ests])
    return GlobalPressure(
        float(np.max(vals)),
        float(np.max(vals) - np.min(vals)),
        float(max(p.dispersion for p in ests)),
        ests,
    )
