"""Ulam discretization of the transfer operator and its leading eigen-triple.

The Julia cloud is covered by square cells.  Row ``i`` of the matrix is
the average, over cloud points ``p`` lying in cell ``i``, of the weights
``exp(psi_j(x))`` of the preimages ``x`` of ``p`` under each ``f_j``,
binned by the cell containing ``x``.  The matrix acts on cell-value
functions as the operator acts on functions of ``z``; its leading
eigenvalue estimates ``exp(P(psi))``, the right eigenvector the density
``h`` and the left one the conformal measure ``m``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .potential import Potential
from .rational import critical_points, evaluate, preimages_batch
from .semigroup import GeneratorSet
from .sphere import near_infinity

MAX_LEAK = 0.2


class LeakError(RuntimeError):
    """Too much preimage weight falls outside the retained cells."""


class ReducibleOperatorError(RuntimeError):
    """The Ulam matrix has more than one recurrent block."""


class ConvergenceError(RuntimeError):
    """Power iteration did not converge."""


@dataclass(frozen=True, eq=False)
class Grid:
    x0: float
    y0: float
    side: float
    nx: int
    ny: int
    cells: np.ndarray  # flat indices iy * nx + ix of retained cells, sorted
    lookup: np.ndarray  # flat index -> retained index or -1
    anchors: np.ndarray  # per retained cell, the cloud point nearest its center
    samples: np.ndarray  # collocation points: up to ``points_per_cell`` cloud points per cell
    sample_cell: np.ndarray  # retained-cell index of each collocation point

    @property
    def size(self) -> int:
        return self.cells.size

    @property
    def centers(self) -> np.ndarray:
        ix = self.cells % self.nx
        iy = self.cells // self.nx
        return (self.x0 + (ix + 0.5) * self.side) + 1j * (self.y0 + (iy + 0.5) * self.side)

    @property
    def box_diameter(self) -> float:
        return self.side * math.hypot(self.nx, self.ny)

    @property
    def samples_per_cell(self) -> np.ndarray:
        return np.bincount(self.sample_cell, minlength=self.size)

    def locate(self, z) -> np.ndarray:
        """Retained-cell index of each point, ``-1`` off the grid (half-open cells)."""
        z = np.asarray(z, dtype=complex)
        fin = ~near_infinity(z) if z.ndim else np.array(not near_infinity(z))
        zz = np.where(fin, z, 0)
        ix = np.floor((zz.real - self.x0) / self.side)
        iy = np.floor((zz.imag - self.y0) / self.side)
        inside = fin & (ix >= 0) & (ix < self.nx) & (iy >= 0) & (iy < self.ny)
        flat = np.where(inside, iy * self.nx + ix, 0).astype(np.int64)
        return np.where(inside, self.lookup[flat], -1)

    def corners(self) -> np.ndarray:
        """Corner points of every retained cell, shape (N, 4)."""
        c = self.centers
        h = self.side / 2
        return c[:, None] + h * np.array([-1 - 1j, 1 - 1j, 1 + 1j, -1 + 1j])


def build_grid(cloud, N: int, points_per_cell: int = 512) -> Grid:
    """Cover the cloud with about ``N`` square cells and keep the occupied ones.

    Besides the geometry the grid keeps, for every retained cell, the cloud
    point nearest its center (the anchor) and up to ``points_per_cell``
    cloud points (in cloud order) at which the operator is collocated.
    """
    if N < 1:
        raise ValueError("target cell count must be >= 1")
    if points_per_cell < 1:
        raise ValueError("points_per_cell must be >= 1")
    pts = cloud.points if hasattr(cloud, "points") else np.asarray(cloud, dtype=complex)
    pts = np.atleast_1d(pts)
    pts = pts[~near_infinity(pts)]
    if pts.size == 0:
        raise ValueError("cloud has no finite points")
    xmin, xmax = float(pts.real.min()), float(pts.real.max())
    ymin, ymax = float(pts.imag.min()), float(pts.imag.max())
    w, h = xmax - xmin, ymax - ymin
    if w > 0 and h > 0:
        side = math.sqrt(w * h / N)
    elif max(w, h) > 0:
        side = max(w, h) / N
    else:
        side = 1e-3 * max(1.0, abs(complex(pts[0])))
    nx = int(math.floor(w / side)) + 1
    ny = int(math.floor(h / side)) + 1
    # center the box on the cloud
    x0 = xmin - (nx * side - w) / 2
    y0 = ymin - (ny * side - h) / 2
    ix = np.clip(np.floor((pts.real - x0) / side).astype(np.int64), 0, nx - 1)
    iy = np.clip(np.floor((pts.imag - y0) / side).astype(np.int64), 0, ny - 1)
    flat = iy * nx + ix
    cells = np.unique(flat)
    lookup = np.full(nx * ny, -1, dtype=np.int64)
    lookup[cells] = np.arange(cells.size)
    owner = lookup[flat]
    centers = (x0 + (cells % nx + 0.5) * side) + 1j * (y0 + (cells // nx + 0.5) * side)

    dist = np.abs(pts - centers[owner])
    order = np.lexsort((dist, owner))
    first = np.ones(order.size, dtype=bool)
    first[1:] = owner[order[1:]] != owner[order[:-1]]
    anchors = pts[order[first]]

    # rank of each point within its cell, in cloud order
    order = np.argsort(owner, kind="stable")
    starts = np.searchsorted(owner[order], np.arange(cells.size))
    rank = np.empty(pts.size, dtype=np.int64)
    rank[order] = np.arange(pts.size) - starts[owner[order]]
    keep = rank < points_per_cell
    return Grid(x0, y0, side, nx, ny, cells, lookup, anchors, pts[keep], owner[keep])


@dataclass(frozen=True, eq=False)
class UlamOperator:
    matrix: sparse.csr_matrix
    parts: tuple[sparse.csr_matrix, ...]  # one matrix per generator, summing to ``matrix``
    hits: tuple[sparse.csr_matrix, ...]  # per generator, fraction of a cell's points with a preimage in each cell
    row_weight: np.ndarray  # total preimage weight per row, leaked or not
    row_leak: np.ndarray  # weight per row that fell outside the retained cells

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def leak(self) -> float:
        """Fraction of all preimage weight that left the retained cells."""
        return float(self.row_leak.sum() / self.row_weight.sum())

    @property
    def max_row_leak(self) -> float:
        return float(np.max(self.row_leak / self.row_weight))

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()


def build_ulam(G: GeneratorSet, psi: Potential, grid: Grid, max_leak: float = MAX_LEAK) -> UlamOperator:
    """Assemble the discretized operator on ``grid``.

    Row ``i`` averages, over the collocation points ``p`` of cell ``i``, the
    weights ``exp(psi_j(x))`` of the preimages ``x`` of ``p``, binned by the
    cell containing ``x``.  Preimages outside the retained cells are dropped
    and accounted for in ``row_leak``.
    """
    p = grid.samples
    n = grid.size
    inv_count = 1.0 / grid.samples_per_cell[grid.sample_cell]
    parts, hits = [], []
    row_weight = np.zeros(n)
    row_leak = np.zeros(n)
    for j, f in enumerate(G.maps):
        x = preimages_batch(f, p)
        w = np.exp(psi.evaluate(j, x)) * inv_count[:, None]
        col = grid.locate(x)
        rows = np.broadcast_to(grid.sample_cell[:, None], x.shape)
        ok = col >= 0
        row_weight += np.bincount(grid.sample_cell, weights=w.sum(axis=1), minlength=n)
        row_leak += np.bincount(grid.sample_cell, weights=np.where(ok, 0.0, w).sum(axis=1), minlength=n)
        parts.append(sparse.csr_matrix((w[ok], (rows[ok], col[ok])), shape=(n, n)))
        # a sample counts once per target cell, whatever the multiplicity
        pairs = np.unique(np.stack([np.flatnonzero(ok) // x.shape[1], col[ok]]), axis=1)
        hw = inv_count[pairs[0]]
        hits.append(sparse.csr_matrix((hw, (grid.sample_cell[pairs[0]], pairs[1])), shape=(n, n)))
    M = parts[0].copy()
    for P in parts[1:]:
        M = M + P
    op = UlamOperator(M.tocsr(), tuple(parts), tuple(hits), row_weight, row_leak)
    if op.leak > max_leak:
        raise LeakError(f"leak fraction {op.leak:.3f} exceeds {max_leak}; refine the grid or densify the cloud")
    return op


@dataclass(frozen=True, eq=False)
class ConformalMeasure:
    masses: np.ndarray
    eigenvalue: float


@dataclass(frozen=True, eq=False)
class DensityField:
    values: np.ndarray


@dataclass(frozen=True, eq=False)
class EquilibriumMeasure:
    masses: np.ndarray


@dataclass(frozen=True, eq=False)
class LeadingTriple:
    lam: float
    h: DensityField
    m: ConformalMeasure
    iterations: int
    residual_h: float  # ||M h - lam h||_1 / ||h||_1
    residual_m: float  # ||m M - lam m||_1 with sum m = 1

    def __iter__(self):
        return iter((self.lam, self.h, self.m))


def recurrent_blocks(M: sparse.spmatrix) -> list[np.ndarray]:
    """Strongly connected components of the transition graph that carry a cycle."""
    ncomp, labels = connected_components(M, directed=True, connection="strong")
    diag = M.diagonal() > 0
    blocks = []
    for c in range(ncomp):
        idx = np.flatnonzero(labels == c)
        if idx.size > 1 or diag[idx[0]]:
            blocks.append(idx)
    return blocks


def _radius_bounds(B: sparse.csr_matrix, tol: float = 1e-9, max_iter: int = 5000) -> tuple[float, float]:
    """Collatz-Wielandt bounds on the spectral radius of an irreducible block.

    Iterates on ``B + I`` so that periodic blocks converge as well.
    """
    n = B.shape[0]
    x = np.ones(n)
    lo, hi = 0.0, math.inf
    for _ in range(max_iter):
        y = B @ x + x
        ratio = y / x
        lo, hi = float(ratio.min()) - 1.0, float(ratio.max()) - 1.0
        if hi - lo <= tol * max(1.0, hi):
            break
        x = y / y.sum()
    return lo, hi


def dominant_block(M: sparse.spmatrix) -> np.ndarray:
    """Cells of the unique recurrent block of largest spectral radius."""
    M = sparse.csr_matrix(M)
    blocks = recurrent_blocks(M)
    if not blocks:
        raise ReducibleOperatorError("Ulam matrix has no recurrent block")
    bounds = [_radius_bounds(M[b][:, b]) for b in blocks]
    best = max(range(len(blocks)), key=lambda i: bounds[i][0])
    for i, (lo, hi) in enumerate(bounds):
        if i != best and hi >= bounds[best][0]:
            raise ReducibleOperatorError(
                f"no single dominant block: radii {bounds[best]} and {(lo, hi)} are not separated"
            )
    return blocks[best]


def leading_triple(
    op: UlamOperator,
    tol: float = 1e-10,
    max_iter: int = 10**5,
    rng: np.random.Generator | None = None,
) -> LeadingTriple:
    """Power iteration for the leading eigenvalue and both eigenvectors.

    Iterates ``h <- M h`` and ``m <- M^T m`` with L1 renormalization until
    the eigenvalue estimate moves by less than ``tol * lam`` and both
    relative eigen-residuals are below ``tol``.  ``m`` is normalized to
    mass 1 and ``h`` so that ``sum m_i h_i = 1``.  With ``rng`` the
    iteration starts from random positive vectors instead of constants.
    """
    M = op.matrix
    MT = M.T.tocsr()
    n = op.size
    dominant_block(M)
    if rng is None:
        h = np.ones(n)
        m = np.ones(n)
    else:
        h = rng.random(n) + 0.1
        m = rng.random(n) + 0.1
    h /= h.sum()
    m /= m.sum()
    lam_old = math.inf
    for it in range(1, max_iter + 1):
        Mh = M @ h
        mM = MT @ m
        lam = Mh.sum()  # h has unit L1 norm and is nonnegative
        lam_m = mM.sum()
        if lam <= 0 or lam_m <= 0:
            raise ConvergenceError("power iteration collapsed to zero")
        res_h = np.abs(Mh - lam * h).sum() / lam
        res_m = np.abs(mM - lam_m * m).sum() / lam_m
        h = Mh / lam
        m = mM / lam_m
        if abs(lam - lam_old) < tol * lam and res_h < tol and res_m < tol:
            break
        lam_old = lam
    else:
        raise ConvergenceError(f"no convergence in {max_iter} iterations (residuals {res_h:.2e}, {res_m:.2e})")
    m = m / m.sum()
    h = h / np.dot(m, h)
    Mh = M @ h
    lam = float(np.dot(m, Mh))  # = m M h / m h with m h = 1
    residual_h = float(np.abs(Mh - lam * h).sum() / np.abs(h).sum())
    residual_m = float(np.abs(MT @ m - lam * m).sum())
    return LeadingTriple(lam, DensityField(h), ConformalMeasure(m, lam), it, residual_h, residual_m)


def equilibrium_from(h: DensityField, m: ConformalMeasure) -> EquilibriumMeasure:
    """Cell masses ``mu_i = h_i m_i`` of the equilibrium state."""
    hv = h.values if isinstance(h, DensityField) else np.asarray(h, dtype=float)
    mv = m.masses if isinstance(m, ConformalMeasure) else np.asarray(m, dtype=float)
    return EquilibriumMeasure(hv * mv)


def total_variation(p, q) -> float:
    """L1 distance between two mass vectors (0 to 2 for probability vectors)."""
    return float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def _injective_cells(G: GeneratorSet, grid: Grid, j: int) -> np.ndarray:
    """Cells on which ``f_j`` is numerically injective with a resolvable image."""
    f = G[j]
    c = grid.centers
    crit = np.array([p for p in critical_points(f) if not near_infinity(p)], dtype=complex)
    ok = np.ones(grid.size, dtype=bool)
    if crit.size:
        dist = np.min(np.abs(c[:, None] - crit[None, :]), axis=1)
        ok &= dist > 2 * grid.side
    img = evaluate(f, np.concatenate([grid.corners(), c[:, None]], axis=1))
    fin = np.all(~near_infinity(img), axis=1)
    img0 = np.where(fin[:, None], img, 0)
    diam = np.max(np.abs(img0[:, :, None] - img0[:, None, :]), axis=(1, 2))
    ok &= fin & (diam < 0.5 * grid.box_diameter)
    return ok


def jacobian_residual(
    G: GeneratorSet,
    psi: Potential,
    op: UlamOperator,
    triple: LeadingTriple,
    grid: Grid,
    sample_size: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Relative L1 defect of the conformality identity on cells.

    For cells ``A`` on which ``f_j`` is injective, compares ``m(f_j(A))``
    with ``exp(log lam - psi_j(a_A)) m_j(A)`` (``a_A`` the anchor of ``A``).
    ``m(f_j(A))`` weighs each cell by the fraction of its collocation points
    with an ``f_j``-preimage in ``A``; ``m_j(A)`` is the mass of the
    cylinder ``[j] x A``, which for a single generator is ``m_A``.
    """
    lam = triple.lam
    m = triple.m.masses
    n = grid.size
    if sample_size is None or sample_size >= n:
        cells = np.arange(n)
    else:
        rng = np.random.default_rng(0) if rng is None else rng
        cells = np.sort(rng.choice(n, size=sample_size, replace=False))
    lhs_all, rhs_all = [], []
    for j in range(G.s):
        A = cells[_injective_cells(G, grid, j)[cells]]
        if A.size == 0:
            continue
        image_mass = op.hits[j].T @ m
        joint = (op.parts[j].T @ m) / lam
        rhs = np.exp(math.log(lam) - psi.evaluate(j, grid.anchors[A])) * joint[A]
        lhs_all.append(image_mass[A])
        rhs_all.append(rhs)
    if not lhs_all:
        raise ValueError("no cell with an injective, resolvable image; the grid is too coarse")
    lhs = np.concatenate(lhs_all)
    rhs = np.concatenate(rhs_all)
    return float(np.abs(lhs - rhs).sum() / rhs.sum())


def invariance_residual(
    G: GeneratorSet,
    mu,
    grid: Grid,
    sample_size: int | None = None,
    rng: np.random.Generator | None = None,
    op: UlamOperator | None = None,
    m: ConformalMeasure | None = None,
) -> float:
    """L1 distance between ``mu`` and its push-forward by one skew step.

    The mass of cell ``A`` is spread evenly over its collocation points and
    moves with them under ``f_j``; generator ``j`` is chosen with the
    probability the operator gives the cylinder ``[j] x A`` (uniform when no
    operator is passed).  Images that miss the retained cells snap to the
    nearest anchor within two cell sides and are lost otherwise.  With
    ``sample_size`` the push-forward is a Monte Carlo one with that many
    mass quanta; otherwise it is computed exactly.
    """
    mu = mu.masses if isinstance(mu, EquilibriumMeasure) else np.asarray(mu, dtype=float)
    n = grid.size
    if op is not None and m is not None:
        mm = m.masses if isinstance(m, ConformalMeasure) else np.asarray(m)
        joint = np.stack([P.T @ mm for P in op.parts], axis=1)
        tot = joint.sum(axis=1, keepdims=True)
        probs = np.where(tot > 0, joint / np.where(tot > 0, tot, 1), 1.0 / G.s)
    else:
        probs = np.full((n, G.s), 1.0 / G.s)
    p = grid.samples
    cell = grid.sample_cell
    tree = cKDTree(np.column_stack([grid.anchors.real, grid.anchors.imag]))
    targets = np.empty((p.size, G.s), dtype=np.int64)
    for j, f in enumerate(G.maps):
        img = evaluate(f, p)
        t = grid.locate(img)
        miss = t < 0
        if np.any(miss):
            fin = ~near_infinity(img[miss])
            q = np.where(fin, img[miss], 0)
            d, k = tree.query(np.column_stack([q.real, q.imag]))
            t[miss] = np.where(fin & (d <= 2 * grid.side), k, -1)
        targets[:, j] = t
    share = mu[cell] / grid.samples_per_cell[cell]
    flow = share[:, None] * probs[cell]
    if sample_size is None:
        pushed = np.zeros(n)
        ok = targets >= 0
        np.add.at(pushed, targets[ok], flow[ok])
    else:
        rng = np.random.default_rng(0) if rng is None else rng
        weights = flow.ravel()
        draws = rng.choice(weights.size, size=sample_size, p=weights / weights.sum())
        t = targets.ravel()[draws]
        t = t[t >= 0]
        pushed = np.bincount(t, minlength=n) / sample_size * mu.sum()
    return total_variation(pushed, mu)
