import math
from functools import lru_cache

import numpy as np
import pytest

from conelab import ConeSpec, build_cone_mesh
from conelab.solver import DirichletProblem, solve_dirichlet
from conelab.targets import Euclidean, tripod

ACCEPTANCE_LINES: list[str] = []


@lru_cache(maxsize=None)
def cone(angle_pi: float, level: int, radius: float = 1.0):
    return build_cone_mesh(ConeSpec(angle_pi * math.pi, radius, level))


@lru_cache(maxsize=None)
def harmonic_scalar(angle_pi: float, level: int, mode: str = "lowest", tol: float = 1e-11):
    """Solved scalar map with boundary ``cos(alpha phi)``, ``alpha = 2 / angle_pi`` (``mode="lowest"``)."""
    mesh = cone(angle_pi, level)
    if mode == "lowest":
        alpha = 2.0 / angle_pi
        fn = lambda r, p: np.cos(alpha * p)  # noqa: E731
    else:
        fn = lambda r, p: np.cos(p) + 0.5 * np.cos(2 * p)  # noqa: E731
    return solve_dirichlet(DirichletProblem.from_function(mesh, Euclidean(1), fn), tol=tol)


def tripod_boundary(r, p):
    j = np.floor(p / (2 * np.pi / 3)).astype(int) % 3
    local = p - j * 2 * np.pi / 3
    return np.column_stack([j.astype(float), 0.8 * np.sin(1.5 * local)])


@lru_cache(maxsize=None)
def harmonic_tripod(level: int, tol: float = 1e-11):
    mesh = cone(2, level)
    return solve_dirichlet(DirichletProblem.from_function(mesh, tripod(), tripod_boundary), tol=tol)


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion; lines are echoed in the terminal summary."""

    def record(number: int, title: str, ok: bool, detail: str):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
