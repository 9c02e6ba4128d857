import functools

import numpy as np
import pytest

from semithermo import GeneratorSet, Potential, julia_backward_sample

SEMIGROUPS = {
    "z2": lambda: GeneratorSet.polynomials([0, 0, 1]),
    "z2_z3": lambda: GeneratorSet.polynomials([0, 0, 1], [0, 0, 0, 1]),
    "basilica": lambda: GeneratorSet.polynomials([-1, 0, 1]),
}


@functools.lru_cache(maxsize=None)
def semigroup(name: str) -> GeneratorSet:
    return SEMIGROUPS[name]()


@functools.lru_cache(maxsize=None)
def cloud(name: str, samples: int = 20000, seed: int = 11):
    return julia_backward_sample(semigroup(name), 0.5 + 0.5j, burn_in=50, samples=samples, chains=500, seed=seed)


def potential(name: str, kind: str) -> Potential:
    G = semigroup(name)
    return Potential.zero(G.s) if kind == "zero" else Potential.geometric(G, 0.5)


@pytest.fixture(scope="session")
def z2():
    return semigroup("z2")


@pytest.fixture(scope="session")
def z2z3():
    return semigroup("z2_z3")


@pytest.fixture(scope="session")
def basilica():
    return semigroup("basilica")


# ------------------------------------------------------- acceptance summary
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


BIG = 400_000


def arclength_weights(grid, samples: int = 2_000_000) -> np.ndarray:
    """Normalized arclength of the unit circle in each retained cell."""
    pts = np.exp(2j * np.pi * (np.arange(samples) + 0.5) / samples)
    cells = grid.locate(pts)
    w = np.bincount(cells[cells >= 0], minlength=grid.size).astype(float)
    return w / w.sum()
