"""Inverse branches of semigroup elements on small balls.

An inverse branch of ``f_w`` on a ball ``B(z, R)`` is represented by its
values on a polar sample of the ball: ``spokes`` radial segments, each cut
into ``steps`` equal pieces.  Values are obtained by analytic continuation
from the center, one generator at a time (the last symbol of the word is
inverted first): along each segment a tangent predictor is followed by
Newton correction of ``f_g(x) = y``.  At every sample point all other
preimages are computed as well so that a branch that passes close to a
critical point (two roots colliding) is flagged.

:func:`build_family` grows the pruned families of branches level by level:
survivors of level ``n`` are extended by every inverse branch of the next
block of the symbol tail, then dropped if their image is too large or
meets a critical value of the block that follows.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy.spatial.distance import pdist

from .rational import critical_values, derivative, evaluate, preimages_batch, spherical_derivative
from .semigroup import GeneratorSet, Word, word_apply
from .sphere import chordal_distance, near_infinity, spherical_area_of_disk, to_sphere

COLLISION_TOL = 1e-7
SAME_BRANCH_TOL = 1e-6
NEWTON_ITER = 30


class ContinuationError(ArithmeticError):
    """Newton correction failed to follow a branch."""


class CriticalValueError(ValueError):
    """The ball center is a critical value of the word being inverted."""


@dataclass(frozen=True)
class Ball:
    center: complex
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")

    @property
    def chordal_radius(self) -> float:
        return chordal_distance(self.center, self.center + self.radius)

    def polar_points(self, spokes: int, steps: int) -> np.ndarray:
        """Sample points of shape (spokes, steps + 1); column 0 is the center."""
        ang = np.exp(2j * np.pi * np.arange(spokes) / spokes)
        r = self.radius * np.arange(steps + 1) / steps
        return self.center + ang[:, None] * r[None, :]


@dataclass(eq=False)
class InverseBranch:
    word: Word  # application order
    ball: Ball
    center_value: complex
    track: np.ndarray  # (spokes, steps + 1) branch values on the polar sample
    log_derivative: np.ndarray  # log |branch'|_sph on the polar sample
    chain: tuple[complex, ...]  # center values after each inversion stage
    status: str = "alive"
    min_separation: float = math.inf

    @property
    def spokes(self) -> int:
        return self.track.shape[0]

    @property
    def steps(self) -> int:
        return self.track.shape[1] - 1

    @property
    def alive(self) -> bool:
        return self.status == "alive"

    def image(self, fraction: float = 1.0) -> np.ndarray:
        """Branch values on the sub-ball of radius ``fraction * ball.radius``."""
        k = int(math.floor(fraction * self.steps + 1e-9))
        return self.track[:, : k + 1]

    def image_diameter(self, fraction: float = 1.0) -> float:
        """Chordal diameter of the sampled image of the shrunk ball."""
        pts = self.image(fraction).ravel()
        if pts.size < 2:
            return 0.0
        # chordal distance is the euclidean distance of the lifts to the sphere
        return float(np.max(pdist(to_sphere(pts))))

    def forward_residual(self, G: GeneratorSet) -> float:
        """Largest chordal error of ``f_w(branch(y))`` against ``y`` on the track."""
        if not self.word:
            return 0.0
        base = self.ball.polar_points(self.spokes, self.steps)
        return float(np.max(chordal_distance(word_apply(G, self.word, self.track), base)))

    def evaluate_at(self, G: GeneratorSet, y: complex, steps: int | None = None) -> complex:
        """Continue the branch along the segment from the center to ``y``."""
        steps = self.steps if steps is None else steps
        path = (self.ball.center + (y - self.ball.center) * np.arange(steps + 1) / steps)[None, None, :]
        vals = path
        for g, start in zip(reversed(self.word), self.chain):
            vals, _ = _continue_stage(G[g], vals, np.array([start]))
        return complex(vals[0, 0, -1])

    def contains(self, G: GeneratorSet, v: complex, tol: float = 1e-6) -> bool:
        """Whether ``v`` lies in the image of the ball under the branch."""
        if near_infinity(v):
            return False
        y = word_apply(G, self.word, v) if self.word else v
        if near_infinity(y) or abs(y - self.ball.center) >= self.ball.radius:
            return False
        try:
            return chordal_distance(self.evaluate_at(G, y), v) < tol
        except ContinuationError:
            return True  # the segment to y runs into a critical value: treat as a hit


def _continue_stage(g, targets: np.ndarray, starts: np.ndarray, strict: bool = True):
    """Continue preimages under ``g`` along ``targets`` (shape (B, M, T+1)).

    ``starts[b]`` is a root of ``g(x) = targets[b, :, 0]``.  Returns the
    continued values and, per branch, the smallest chordal distance to any
    other root of the same fiber seen along the way.  When the corrector
    fails, ``strict`` raises; otherwise the branch gets separation 0 and
    its remaining values are frozen.
    """
    B, M, T1 = targets.shape
    out = np.empty_like(targets)
    w = np.repeat(np.asarray(starts, dtype=complex)[:, None], M, axis=1)
    out[:, :, 0] = w
    failed = np.zeros(B, dtype=bool)
    for t in range(1, T1):
        y_prev = targets[:, :, t - 1]
        y = targets[:, :, t]
        w_prev = w
        with np.errstate(divide="ignore", invalid="ignore"):
            w = w + (y - y_prev) / derivative(g, w)
            for _ in range(NEWTON_ITER):
                dw = (evaluate(g, w) - y) / derivative(g, w)
                w = w - dw
                if np.all(np.isfinite(w)) and np.all(np.abs(dw) <= 1e-15 * (1 + np.abs(w))):
                    break
            err = chordal_distance(evaluate(g, w), y)
        bad = ~np.isfinite(w) | ~(err <= 1e-10)
        if np.any(bad):
            if strict:
                b, m = np.argwhere(bad)[0]
                raise ContinuationError(f"corrector failed on spoke {m} at step {t} (branch {b}, residual {err[b, m]:.2e})")
            failed |= bad.any(axis=1)
        w = np.where(failed[:, None], w_prev, w)
        out[:, :, t] = w
    roots = preimages_batch(g, targets)
    d = chordal_distance(roots, out[..., None])
    if d.shape[-1] > 1:
        d.sort(axis=-1)
        sep = d[..., 1].reshape(B, -1).min(axis=1)
    else:
        sep = np.full(B, math.inf)
    return out, np.where(failed, 0.0, sep)


def word_critical_values(G: GeneratorSet, word: Sequence[int]) -> list[complex]:
    """Critical values of ``f_w`` (application order), with repetitions."""
    word = G.check_word(word)
    out = []
    for k, a in enumerate(word):
        vals = np.array(critical_values(G[a]), dtype=complex)
        for b in word[k + 1 :]:
            vals = evaluate(G[b], vals)
        out.extend(complex(v) for v in np.atleast_1d(vals))
    return out


def _log_sph_derivative(g, x) -> np.ndarray:
    """``log |(g^{-1})'|_sph`` at ``g(x)`` for the branch through ``x``."""
    return -np.log(np.maximum(spherical_derivative(g, x), 1e-300))


def continue_branch(
    G: GeneratorSet,
    word: Sequence[int],
    ball: Ball,
    root: complex,
    spokes: int = 16,
    steps: int = 64,
    collision_tol: float = COLLISION_TOL,
) -> InverseBranch:
    """Inverse branch of ``f_w`` on ``ball`` through ``root`` at the center."""
    word = G.check_word(word)
    cvs = [v for v in word_critical_values(G, word) if not near_infinity(v)]
    if any(chordal_distance(v, ball.center) < 1e-9 for v in cvs):
        raise CriticalValueError(f"ball center {ball.center} is a critical value of the word {word}")
    root = complex(root)
    if word and chordal_distance(word_apply(G, word, root), ball.center) > 1e-8:
        raise ValueError(f"{root} is not a preimage of the ball center under the word")
    # stage values at the center, in inversion order
    forward = [root]
    for a in word[:-1]:
        forward.append(complex(evaluate(G[a], forward[-1])))
    chain = tuple(reversed(forward))
    cv_inside = any(abs(v - ball.center) < ball.radius for v in cvs)
    vals = ball.polar_points(spokes, steps)[None]
    logd = np.zeros(vals.shape)
    sep = math.inf
    for g, start in zip(reversed(word), chain):
        # a corrector failure is expected, and reported as a collision, when
        # the ball contains a critical value
        vals, s = _continue_stage(G[g], vals, np.array([start]), strict=not cv_inside)
        logd = logd + _log_sph_derivative(G[g], vals)
        sep = min(sep, float(s[0]))
    collided = sep < collision_tol or cv_inside
    return InverseBranch(
        word, ball, complex(vals[0, 0, 0]), vals[0], logd[0], chain, "collided" if collided else "alive", sep
    )


def distortion_ratio(
    branch: InverseBranch,
    t: float,
    radius: float | None = None,
    sample_pairs: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Largest ratio of spherical derivatives of the branch over ``B(z, t r)``.

    ``r`` defaults to the ball radius.  All track points inside the shrunk
    ball are used, or ``sample_pairs`` random pairs of them.
    """
    if not 0 <= t < 1:
        raise ValueError("t must lie in [0, 1)")
    r = branch.ball.radius if radius is None else radius
    logd = branch.log_derivative[:, : int(math.floor(t * r / branch.ball.radius * branch.steps + 1e-9)) + 1].ravel()
    if sample_pairs is None:
        return float(math.exp(logd.max() - logd.min()))
    rng = np.random.default_rng(0) if rng is None else rng
    i = rng.integers(0, logd.size, size=sample_pairs)
    k = rng.integers(0, logd.size, size=sample_pairs)
    return float(math.exp(np.max(np.abs(logd[i] - logd[k]))))


# ----------------------------------------------------------------- families
@dataclass
class BranchFamily:
    level: int
    q: int
    survivors: list[InverseBranch]
    candidates: int
    pruned_area: int
    pruned_cv: int
    max_diam: float
    distortion_t50: float
    notes: list[str] = field(default_factory=list)

    @property
    def pruned(self) -> int:
        return self.pruned_area + self.pruned_cv

    def pruning_bound(self, d: int, lam: float) -> float:
        """``d q + lam^{-n}``, the bound on the number of pruned candidates."""
        return d * self.q + lam ** (-self.level)

    def row(self) -> tuple:
        return (
            self.level,
            self.candidates,
            len(self.survivors),
            self.pruned_area,
            self.pruned_cv,
            self.max_diam,
            self.distortion_t50,
        )


def symbol_tail(s: int, seed=None, pattern: Sequence[int] | None = None) -> Iterator[int]:
    """Endless symbol stream: a repeated ``pattern`` or seeded uniform symbols."""
    if pattern is not None:
        yield from itertools.cycle(int(a) for a in pattern)
    rng = np.random.default_rng(seed)
    while True:
        yield int(rng.integers(0, s))


def _block_chains(G: GeneratorSet, block: Word, y: complex) -> list[tuple[complex, ...]]:
    """All inverse-branch center chains of the block at ``y`` (inversion order)."""
    chains = [()]
    values = [y]
    for g in reversed(block):
        new_chains, new_values = [], []
        for ch, v in zip(chains, values):
            for x in preimages_batch(G[g], np.array([v]))[0]:
                new_chains.append(ch + (complex(x),))
                new_values.append(complex(x))
        chains, values = new_chains, new_values
    return chains


def _extend(G: GeneratorSet, parents: list[InverseBranch], block: Word, collision_tol: float):
    """All compositions of parent branches with inverse branches of ``block``."""
    jobs = []
    for p in parents:
        for ch in _block_chains(G, block, p.center_value):
            jobs.append((p, ch))
    if not jobs:
        return []
    vals = np.stack([p.track for p, _ in jobs])
    logd = np.stack([p.log_derivative for p, _ in jobs])
    sep = np.full(len(jobs), math.inf)
    for k, g in enumerate(reversed(block)):
        starts = np.array([ch[k] for _, ch in jobs])
        vals, s = _continue_stage(G[g], vals, starts, strict=False)
        logd = logd + _log_sph_derivative(G[g], vals)
        sep = np.minimum(sep, s)
    out = []
    for i, (p, ch) in enumerate(jobs):
        status = "alive" if sep[i] >= collision_tol else "collided"
        out.append(
            InverseBranch(block + p.word, p.ball, complex(vals[i, 0, 0]), vals[i], logd[i], p.chain + ch, status, float(sep[i]))
        )
    return out


def _dedupe(branches: list[InverseBranch], tol: float = SAME_BRANCH_TOL) -> list[InverseBranch]:
    """Drop branches whose track repeats an earlier one with the same word."""
    kept: list[InverseBranch] = []
    centers: list[complex] = []
    for b in branches:
        near = np.flatnonzero(chordal_distance(np.array(centers, dtype=complex), b.center_value) < tol) if kept else []
        if not any(kept[i].word == b.word and np.max(chordal_distance(kept[i].track, b.track)) < tol for i in near):
            kept.append(b)
            centers.append(b.center_value)
    return kept


def build_family(
    G: GeneratorSet,
    z: complex,
    R: float,
    lam: float,
    q: int,
    n_max: int,
    tail: Iterable[int] | None = None,
    spokes: int = 16,
    steps: int = 64,
    collision_tol: float = COLLISION_TOL,
) -> list[BranchFamily]:
    """Pruned inverse-branch families for levels ``0..n_max``.

    Branches live on ``B(z, 2R)`` (tracked with ``steps`` radial steps); the
    size test uses the image of ``B(z, R)``.  A candidate of level ``n`` is
    dropped when the normalized spherical area of the disk spanned by its
    image diameter exceeds ``lam^n``, or when the image of ``B(z, 2R)``
    contains a critical value of the next block; candidates whose tracks
    collide (or whose continuation fails) are counted with the latter.  The
    list stops early if a level has no survivors.
    """
    if not 0 < lam < 1:
        raise ValueError("lam must lie in (0, 1)")
    if q < 1:
        raise ValueError("q must be >= 1")
    if steps % 2:
        raise ValueError("steps must be even so that B(z, R) is sampled exactly")
    tail = iter(symbol_tail(G.s, seed=0) if tail is None else tail)
    blocks = [tuple(next(tail) for _ in range(q)) for _ in range(n_max + 1)]
    for b in blocks:
        G.check_word(b)
    ball = Ball(complex(z), 2.0 * R)
    identity = InverseBranch(
        (), ball, complex(z), ball.polar_points(spokes, steps), np.zeros((spokes, steps + 1)), (), "alive", math.inf
    )
    families = [BranchFamily(0, q, [identity], 1, 0, 0, identity.image_diameter(0.5), 1.0)]
    survivors = [identity]
    for n in range(1, n_max + 1):
        cands = _dedupe(_extend(G, survivors, blocks[n - 1], collision_tol))
        next_cv = [v for v in word_critical_values(G, blocks[n]) if not near_infinity(v)]
        kept, p_area, p_cv, diams = [], 0, 0, []
        for c in cands:
            diam = c.image_diameter(0.5)
            if spherical_area_of_disk(diam / 2) > lam**n:
                p_area += 1
            elif not c.alive or any(c.contains(G, v) for v in next_cv):
                p_cv += 1
            else:
                kept.append(c)
                diams.append(diam)
        fam = BranchFamily(
            n,
            q,
            kept,
            len(cands),
            p_area,
            p_cv,
            max(diams, default=0.0),
            max((distortion_ratio(b, 0.5, radius=R) for b in kept), default=float("nan")),
        )
        families.append(fam)
        survivors = kept
        if not kept:
            fam.notes.append(f"no survivors at level {n}; use a smaller R or a larger lam")
            break
    return families


def decay_slope(families: list[BranchFamily]) -> float:
    """Least-squares slope of log(max survivor diameter) against the level (n >= 1)."""
    pts = [(f.level, math.log(f.max_diam)) for f in families if f.level >= 1 and f.max_diam > 0]
    if len(pts) < 2:
        raise ValueError("need at least two levels with survivors")
    n, y = np.array(pts).T
    return float(np.polyfit(n, y, 1)[0])
