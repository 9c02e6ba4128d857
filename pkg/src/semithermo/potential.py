"""Symbol-local potentials ``psi(omega, z) = psi_{omega_1}(z)``.

Three kinds are supported: per-generator constants, the geometric family
``-t log |f_j'|_sph`` and values tabulated on a rectangular grid (bilinear
interpolation, clamped to the grid box).  Every potential carries an
additive ``shift`` so that ``psi + c`` is cheap and exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .rational import spherical_derivative
from .semigroup import GeneratorSet

#: spherical derivatives are clipped below at this value before taking logs
DERIVATIVE_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class Potential:
    kind: str
    s: int
    constants: tuple[float, ...] = ()
    t: float = 0.0
    generators: GeneratorSet | None = None
    grid: tuple | None = None
    shift: float = 0.0

    # -------------------------------------------------------------- builders
    @classmethod
    def constant(cls, c, s: int) -> "Potential":
        cs = (float(c),) * s if np.isscalar(c) else tuple(float(x) for x in c)
        if len(cs) != s:
            raise ValueError(f"expected {s} constants, got {len(cs)}")
        return cls("constant", s, constants=cs)

    @classmethod
    def zero(cls, s: int) -> "Potential":
        return cls.constant(0.0, s)

    @classmethod
    def geometric(cls, G: GeneratorSet, t: float) -> "Potential":
        return cls("geometric", G.s, t=float(t), generators=G)

    @classmethod
    def tabulated(cls, box, values) -> "Potential":
        """``box = (xmin, xmax, ymin, ymax)``; ``values[j]`` has shape (ny, nx)."""
        values = np.asarray(values, dtype=float)
        if values.ndim != 3 or values.shape[1] < 2 or values.shape[2] < 2:
            raise ValueError("grid values must have shape (s, ny, nx) with nx, ny >= 2")
        xmin, xmax, ymin, ymax = (float(v) for v in box)
        xs = np.linspace(xmin, xmax, values.shape[2])
        ys = np.linspace(ymin, ymax, values.shape[1])
        interps = tuple(RegularGridInterpolator((ys, xs), values[j], method="linear") for j in range(values.shape[0]))
        return cls("grid", values.shape[0], grid=((xmin, xmax, ymin, ymax), values, interps))

    @classmethod
    def from_json(cls, record: dict, G: GeneratorSet) -> "Potential":
        kind = record["kind"]
        params = record.get("params", {})
        if kind == "constant":
            psi = cls.constant(params.get("c", 0.0), G.s)
        elif kind == "geometric":
            psi = cls.geometric(G, params["t"])
        elif kind == "grid":
            psi = cls.tabulated(params["box"], params["values"])
            if psi.s != G.s:
                raise ValueError(f"grid potential has {psi.s} fields for {G.s} generators")
        else:
            raise ValueError(f"unknown potential kind {kind!r}")
        return psi + float(record.get("shift", 0.0))

    def to_json(self) -> dict:
        if self.kind == "constant":
            params = {"c": list(self.constants)}
        elif self.kind == "geometric":
            params = {"t": self.t}
        else:
            box, values, _ = self.grid
            params = {"box": list(box), "values": values.tolist()}
        return {"kind": self.kind, "params": params, "shift": self.shift}

    def __add__(self, c: float) -> "Potential":
        if self.kind == "constant":
            return replace(self, constants=tuple(x + float(c) for x in self.constants))
        return replace(self, shift=self.shift + float(c))

    __radd__ = __add__

    # ------------------------------------------------------------ evaluation
    @property
    def is_constant(self) -> bool:
        """True when the potential does not depend on the point."""
        return self.kind == "constant" or (self.kind == "geometric" and self.t == 0.0)

    def constant_values(self) -> np.ndarray:
        if self.kind == "constant":
            return np.array(self.constants) + self.shift
        if self.is_constant:
            return np.full(self.s, self.shift)
        raise ValueError("potential is not constant")

    def evaluate(self, j: int, z):
        """``psi_j(z)``, vectorized over ``z``."""
        z = np.asarray(z, dtype=complex)
        if self.kind == "constant":
            out = np.full(z.shape, self.constants[j] + self.shift)
        elif self.kind == "geometric":
            if self.t == 0.0:
                out = np.full(z.shape, self.shift)
            else:
                der = np.maximum(spherical_derivative(self.generators[j], z), DERIVATIVE_FLOOR)
                out = -self.t * np.log(der) + self.shift
        else:
            (xmin, xmax, ymin, ymax), _, interps = self.grid
            zz = np.where(np.isfinite(z), z, 0)
            x = np.clip(zz.real, xmin, xmax)
            y = np.clip(zz.imag, ymin, ymax)
            out = interps[j](np.stack([y.ravel(), x.ravel()], axis=-1)).reshape(z.shape) + self.shift
        return float(out) if out.ndim == 0 else out


def sup_inf_estimate(psi: Potential, cloud) -> tuple[float, float]:
    """Extrema of ``psi_j`` over all generators and cloud points."""
    pts = cloud.points if hasattr(cloud, "points") else np.asarray(cloud, dtype=complex)
    if pts.size == 0:
        raise ValueError("cloud must be nonempty")
    vals = np.concatenate([np.atleast_1d(psi.evaluate(j, pts)) for j in range(psi.s)])
    return float(np.max(vals)), float(np.min(vals))


@dataclass(frozen=True)
class GapReport:
    pressure: float
    sup: float
    inf: float
    log_s: float
    gap: float
    slack: float

    @property
    def gap_holds(self) -> bool:
        return self.gap > 0

    @property
    def sufficient_condition_holds(self) -> bool:
        return self.slack > 0


def gap_check(psi: Potential, G: GeneratorSet, pressure_est: float, cloud) -> GapReport:
    """Compare a pressure estimate with ``sup psi + log s``.

    ``gap = P - sup psi - log s`` must be positive for the theory to apply;
    ``slack = (log sum e_j - log s) - (sup psi - inf psi) > 0`` is the
    a-priori sufficient condition for a positive gap.
    """
    sup, inf = sup_inf_estimate(psi, cloud)
    log_s = math.log(G.s)
    gap = pressure_est - sup - log_s
    slack = (math.log(G.degree_sum) - log_s) - (sup - inf)
    return GapReport(float(pressure_est), sup, inf, log_s, gap, slack)
