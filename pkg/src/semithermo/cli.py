"""``semithermo`` command-line front end.

Every command reads one JSON config::

    {
      "semigroup": {"generators": [{"num": [0, 0, 1]}]},   # or a path to such a file
      "potential": {"kind": "geometric", "params": {"t": 0.5}},
      "seed": 7,
      "julia":    {"z0": [0.5, 0.5], "burn_in": 50, "samples": 20000, "chains": 200,
                   "viewport": {"center": [0, 0], "width": 4, "pixels": 512}},
      "pressure": {"points": 10, "n_max": 12, "mode": "exact", "paths": 10000},
      "spectrum": {"cells": 1024, "points_per_cell": 512, "tol": 1e-10, "cloud_samples": 400000},
      "check":    {"orbit_length": 6},
      "branches": {"z": [1, 0], "R": 0.1, "lam": 0.5, "q": 1, "n_max": 8}
    }

and writes CSV files (and a PPM raster for ``julia``) into ``--out``.
Relative paths in the config are resolved against the config's directory.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .branches import Ball, ContinuationError, CriticalValueError, build_family, decay_slope, symbol_tail
from .io import rasterize, write_csv, write_ppm
from .measures import (
    ConvergenceError,
    LeakError,
    ReducibleOperatorError,
    build_grid,
    build_ulam,
    equilibrium_from,
    invariance_residual,
    jacobian_residual,
    leading_triple,
)
from .potential import Potential, gap_check
from .rational import RootFindingError
from .semigroup import DegenerateSeedError, GeneratorSet, check_conditions, julia_backward_sample
from .transfer import BudgetExceededError, pressure_global

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_RESIDUAL = 0, 2, 3, 4
NUMERIC_ERRORS = (
    RootFindingError,
    ConvergenceError,
    ReducibleOperatorError,
    LeakError,
    ContinuationError,
    BudgetExceededError,
    FloatingPointError,
)


class ConfigError(ValueError):
    pass


class ResidualError(RuntimeError):
    pass


# ------------------------------------------------------------------ config
class RunConfig:
    """Parsed config with typed, field-named accessors."""

    def __init__(self, record: dict, base: Path, seed: int | None = None):
        if not isinstance(record, dict):
            raise ConfigError("config must be a JSON object")
        self.record = record
        self.base = base
        self.seed = int(record.get("seed", 0)) if seed is None else int(seed)
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed: {self.seed} is not an unsigned 64-bit integer")
        self.generators = self._generators()
        self.potential = self._potential()

    @classmethod
    def load(cls, path, seed: int | None = None) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            record = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls(record, path.resolve().parent, seed)

    def _generators(self) -> GeneratorSet:
        src = self.record.get("semigroup")
        if src is None:
            raise ConfigError("semigroup: missing")
        if isinstance(src, str):
            path = Path(src) if Path(src).is_absolute() else self.base / src
            if not path.is_file():
                raise ConfigError(f"semigroup: generator file not found: {path}")
            try:
                src = json.loads(path.read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"semigroup: {path}: invalid JSON ({exc})") from None
        try:
            return GeneratorSet.from_json(src)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"semigroup: {exc}") from None

    def _potential(self) -> Potential:
        rec = self.record.get("potential", {"kind": "constant", "params": {"c": 0.0}})
        try:
            return Potential.from_json(rec, self.generators)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"potential: {exc}") from None

    def section(self, name: str) -> dict:
        sec = self.record.get(name, {})
        if not isinstance(sec, dict):
            raise ConfigError(f"{name}: must be an object")
        return sec

    def get(self, name: str, key: str, default=None, kind=float):
        sec = self.section(name)
        if key not in sec:
            if default is None:
                raise ConfigError(f"{name}.{key}: missing")
            return default
        try:
            return _convert(sec[key], kind)
        except (TypeError, ValueError):
            raise ConfigError(f"{name}.{key}: expected {kind.__name__}, got {sec[key]!r}") from None

    def rng(self, stream: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, stream])


def _convert(value, kind):
    if kind is complex:
        if isinstance(value, (list, tuple)) and len(value) == 2:
            return complex(float(value[0]), float(value[1]))
        if isinstance(value, (int, float)):
            return complex(value)
        raise ValueError
    if kind is int and isinstance(value, float) and not value.is_integer():
        raise ValueError
    return kind(value)


def _cloud(cfg: RunConfig, section: str = "julia"):
    """Backward-sampled cloud; ``<section>.cloud_samples`` overrides ``julia.samples``."""
    samples = cfg.get("julia", "samples", 20000, int)
    chains = cfg.get("julia", "chains", 200, int)
    if section != "julia":
        samples = cfg.get(section, "cloud_samples", samples, int)
        chains = cfg.get(section, "cloud_chains", chains, int)
    return julia_backward_sample(
        cfg.generators,
        cfg.get("julia", "z0", 0.5 + 0.5j, complex),
        burn_in=cfg.get("julia", "burn_in", 50, int),
        samples=samples,
        chains=chains,
        rng=cfg.rng(0),
    )


def _preamble(cfg: RunConfig, command: str) -> list[str]:
    return [f"# semithermo {__version__} command={command} seed={cfg.seed}"]


# ---------------------------------------------------------------- commands
def cmd_julia(cfg: RunConfig, out: Path) -> list[Path]:
    cloud = _cloud(cfg)
    vp = cfg.section("julia").get("viewport", {})
    if not isinstance(vp, dict):
        raise ConfigError("julia.viewport: must be an object")
    try:
        center = _convert(vp.get("center", [0.0, 0.0]), complex)
        width = float(vp.get("width", 4.0))
        pixels = int(vp.get("pixels", 512))
    except (TypeError, ValueError):
        raise ConfigError(f"julia.viewport: malformed {vp!r}") from None
    if width <= 0 or pixels < 1:
        raise ConfigError("julia.viewport: width and pixels must be positive")
    files = [
        write_csv(out / "cloud.csv", _preamble(cfg, "julia"), ["re", "im"], zip(cloud.points.real, cloud.points.imag)),
        write_ppm(out / "julia.ppm", rasterize(cloud.points, center, width, pixels)),
    ]
    return files


def _pressure(cfg: RunConfig):
    mode = cfg.get("pressure", "mode", "exact", str)
    if mode not in ("exact", "montecarlo"):
        raise ConfigError(f"pressure.mode: expected 'exact' or 'montecarlo', got {mode!r}")
    return pressure_global(
        cfg.generators,
        cfg.potential,
        _cloud(cfg),
        cfg.get("pressure", "points", 10, int),
        cfg.get("pressure", "n_max", 12, int),
        mode=mode,
        rng=cfg.rng(1),
        paths=cfg.get("pressure", "paths", 10**4, int),
    )


def cmd_pressure(cfg: RunConfig, out: Path) -> list[Path]:
    gp = _pressure(cfg)
    files = []
    summary = []
    for k, est in enumerate(gp.pointwise):
        pre = _preamble(cfg, "pressure") + [f"point={k},z_re={est.z.real!r},z_im={est.z.imag!r}"]
        files.append(write_csv(out / f"pressure_point_{k:03d}.csv", pre, ["n", "a_n", "b_n"], est.rows()))
        summary.append((k, est.z.real, est.z.imag, est.estimate, est.dispersion, ""))
    summary.append(("global", "", "", gp.estimate, gp.dispersion, gp.spread))
    files.append(
        write_csv(
            out / "pressure_summary.csv",
            _preamble(cfg, "pressure"),
            ["point", "z_re", "z_im", "estimate", "dispersion", "spread"],
            summary,
        )
    )
    return files


def cmd_spectrum(cfg: RunConfig, out: Path) -> list[Path]:
    G, psi = cfg.generators, cfg.potential
    tol = cfg.get("spectrum", "tol", 1e-10)
    grid = build_grid(
        _cloud(cfg, "spectrum"), cfg.get("spectrum", "cells", 1024, int), cfg.get("spectrum", "points_per_cell", 512, int)
    )
    op = build_ulam(G, psi, grid, max_leak=cfg.get("spectrum", "max_leak", 0.2))
    triple = leading_triple(op, tol=tol, max_iter=cfg.get("spectrum", "max_iter", 10**5, int))
    lam, h, m = triple
    mu = equilibrium_from(h, m)
    centers = grid.centers
    pre = _preamble(cfg, "spectrum") + [f"lambda={lam!r},leak={op.leak!r}"]
    files = [
        write_csv(
            out / "triple.csv",
            pre,
            ["cell_index", "center_re", "center_im", "m", "h", "mu"],
            zip(range(grid.size), centers.real, centers.imag, m.masses, h.values, mu.masses),
        )
    ]
    try:
        jac = jacobian_residual(G, psi, op, triple, grid)
    except ValueError:
        jac = math.nan
    inv = invariance_residual(G, mu, grid, op=op, m=m)
    limit = 10 * tol
    rows = [
        ("log_lambda", math.log(lam), "", ""),
        ("leak", op.leak, "", ""),
        ("iterations", triple.iterations, "", ""),
        ("residual_h", triple.residual_h, limit, "ok" if triple.residual_h <= limit else "exceeded"),
        ("residual_m", triple.residual_m, limit, "ok" if triple.residual_m <= limit else "exceeded"),
        ("min_h", float(h.values.min()), 0.0, "ok" if h.values.min() > 0 else "exceeded"),
        ("jacobian_residual", jac, "", ""),
        ("invariance_residual", inv, "", ""),
    ]
    files.append(write_csv(out / "residuals.csv", _preamble(cfg, "spectrum"), ["quantity", "value", "limit", "status"], rows))
    if triple.residual_h > limit or triple.residual_m > limit:
        raise ResidualError(f"eigen-residuals {triple.residual_h:.3e}, {triple.residual_m:.3e} exceed {limit:.1e}")
    return files


def cmd_check(cfg: RunConfig, out: Path) -> list[Path]:
    G, psi = cfg.generators, cfg.potential
    cloud = _cloud(cfg)
    rep = check_conditions(G, cloud, orbit_length=cfg.get("check", "orbit_length", 6, int))
    gp = _pressure(cfg)
    gap = gap_check(psi, G, gp.estimate, cloud)
    rows = list(rep.rows())
    rows += [
        ("pressure", fmt_status(True), f"estimate={gp.estimate!r};dispersion={gp.dispersion!r};spread={gp.spread!r}"),
        ("gap", fmt_status(gap.gap_holds), f"gap={gap.gap!r};sup={gap.sup!r};inf={gap.inf!r};log_s={gap.log_s!r}"),
        ("gap_sufficient", fmt_status(gap.sufficient_condition_holds), f"slack={gap.slack!r}"),
    ]
    rows += [("note", "", n) for n in rep.notes]
    return [write_csv(out / "check.csv", _preamble(cfg, "check"), ["item", "status", "detail"], rows)]


def fmt_status(ok: bool) -> str:
    return "holds" if ok else "fails"


def cmd_branches(cfg: RunConfig, out: Path) -> list[Path]:
    G = cfg.generators
    sec = cfg.section("branches")
    z = cfg.get("branches", "z", kind=complex)
    R = cfg.get("branches", "R", 0.1)
    lam = cfg.get("branches", "lam", 0.5)
    q = cfg.get("branches", "q", 1, int)
    n_max = cfg.get("branches", "n_max", 8, int)
    pattern = sec.get("tail")
    if pattern is not None and (not isinstance(pattern, list) or not pattern):
        raise ConfigError("branches.tail: expected a nonempty list of symbols")
    try:
        Ball(z, R)
        tail = symbol_tail(G.s, seed=[cfg.seed, 3], pattern=pattern)
        fams = build_family(
            G,
            z,
            R,
            lam,
            q,
            n_max,
            tail,
            spokes=cfg.get("branches", "spokes", 16, int),
            steps=cfg.get("branches", "steps", 64, int),
        )
    except CriticalValueError as exc:
        raise ConfigError(f"branches.z: {exc}") from None
    cols = ["n", "candidates", "survivors", "pruned_area", "pruned_cv", "max_diam", "distortion_ratio_t50"]
    files = [write_csv(out / "branches.csv", _preamble(cfg, "branches"), cols, (f.row() for f in fams))]
    d = G.d
    rows = [(f.level, f.pruned, f.pruning_bound(d, lam), f.pruned <= f.pruning_bound(d, lam)) for f in fams]
    try:
        slope = decay_slope(fams)
    except ValueError:
        slope = math.nan
    pre = _preamble(cfg, "branches") + [f"decay_slope={slope!r},half_log_lam={0.5 * math.log(lam)!r}"]
    files.append(write_csv(out / "branches_bound.csv", pre, ["n", "pruned", "bound", "within_bound"], rows))
    return files


COMMANDS = {
    "julia": cmd_julia,
    "pressure": cmd_pressure,
    "spectrum": cmd_spectrum,
    "check": cmd_check,
    "branches": cmd_branches,
}


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"{text} is not an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="semithermo", description="Thermodynamic formalism of rational semigroups.")
    p.add_argument("--version", action="version", version=f"semithermo {__version__}")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", default=".", help="output directory (created if missing)")
    p.add_argument("--seed", type=_seed, default=None, help="overrides the config seed")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config, args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        files = COMMANDS[args.command](cfg, out)
    except (ConfigError, DegenerateSeedError) as exc:
        print(f"semithermo: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"semithermo: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"semithermo: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ResidualError as exc:
        print(f"semithermo: residuals exceeded: {exc}", file=sys.stderr)
        return EXIT_RESIDUAL
    for f in files:
        print(f)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
