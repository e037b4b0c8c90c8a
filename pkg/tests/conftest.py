from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from tiltshape import lp
from tiltshape.cli import main as cli_main
from tiltshape.platform import PlatformParams
from tiltshape.tiltopt import TiltTable

ACCEPTANCE_LINES: list[str] = []

CI_GRID = "0:1:0.5,0:1:0.5"


@pytest.fixture(scope="session")
def params() -> PlatformParams:
    return PlatformParams()


@pytest.fixture(scope="session", autouse=True)
def _warm_jit():
    # Loads the compiled simplex once so timing checks measure the solver, not the JIT cache.
    lp.solve(lp.LpProblem.create([1.0], [[1.0]], [0.5], [0.0], [1.0]))


@dataclass
class CiBuild:
    paths: tuple[Path, Path]
    wall: float
    exit_codes: tuple[int, int]

    @property
    def table(self) -> TiltTable:
        return TiltTable.load(self.paths[0])


@pytest.fixture(scope="session")
def ci_build(tmp_path_factory) -> CiBuild:
    """The CI tilt table, built twice through the CLI with the same seed."""
    d = tmp_path_factory.mktemp("ci_table")
    paths = (d / "a.json", d / "b.json")
    codes = []
    walls = []
    for p in paths:
        t0 = time.perf_counter()
        codes.append(cli_main(["build-table", "--grid", CI_GRID, "--seed", "0", "--out", str(p)]))
        walls.append(time.perf_counter() - t0)
    return CiBuild(paths, walls[0], tuple(codes))


@pytest.fixture(scope="session")
def ci_table(ci_build) -> TiltTable:
    return ci_build.table


@dataclass
class SimRuns:
    paths: tuple[Path, Path]
    wall: float
    exit_codes: tuple[int, int]


@pytest.fixture(scope="session")
def sweep_runs(ci_build, tmp_path_factory) -> SimRuns:
    """The default wind scenario simulated twice through the CLI."""
    d = tmp_path_factory.mktemp("sweep")
    paths = (d / "a.csv", d / "b.csv")
    codes, walls = [], []
    for p in paths:
        t0 = time.perf_counter()
        codes.append(cli_main(["simulate", "--table", str(ci_build.paths[0]), "--out", str(p)]))
        walls.append(time.perf_counter() - t0)
    return SimRuns(paths, walls[0], tuple(codes))


def random_unit(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

