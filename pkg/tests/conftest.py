import os
import time

import numpy as np
import pytest

from cutstokes.meshing import build_background_mesh, alfeld_split, classify_elements
from cutstokes.geometry import (LevelSet, interpolate_p1, build_deformation,
                                build_quadratures)
from cutstokes.harness import (StudyConfig, exact_example1, run_convergence,
                               run_interface_sweep, solve_level)


def quartic_levelset() -> LevelSet:
    return LevelSet(lambda p: p[:, 0] ** 4 + p[:, 1] ** 4 - 0.25,
                    lambda p: np.column_stack([4 * p[:, 0] ** 3, 4 * p[:, 1] ** 3]),
                    name="quartic")


def circle_levelset(r: float) -> LevelSet:
    return LevelSet(lambda p: p[:, 0] ** 2 + p[:, 1] ** 2 - r * r,
                    lambda p: 2 * p, name="circle")


def build_case(ls: LevelSet, h: float, k: int, box=(-1, 1, -1, 1)):
    mesh = build_background_mesh(box, h)
    am = alfeld_split(mesh)
    phi = interpolate_p1(ls, am)
    sets = classify_elements(am, phi)
    defo = build_deformation(ls, phi, am, sets, k)
    quad = build_quadratures(am, sets, phi, defo)
    return am, phi, sets, defo, quad


@pytest.fixture(scope="session")
def quartic_case_h03():
    """Quartic level set on the coarse mesh, k=2: the workhorse configuration."""
    return build_case(quartic_levelset(), 0.3, 2)


@pytest.fixture(scope="session")
def quartic_case_h015():
    return build_case(quartic_levelset(), 0.15, 2)


# ---------------------------------------------------------------------------
# full studies, shared across test modules; each is computed once per session


@pytest.fixture(scope="session")
def ex1_ho_study():
    """Example 1, high-order geometry, all five levels.

    Returns (rows, states, wall) where states keeps the three coarsest
    LevelStates for tests that need the assembled operators."""
    cfg = StudyConfig(example=1, levels=5)
    exact = exact_example1()
    t0 = time.perf_counter()
    rows, states = [], {}
    for lvl in range(cfg.levels):
        row, st = solve_level(cfg, lvl, exact)
        rows.append(row)
        if lvl <= 2:
            states[lvl] = st
    return rows, states, time.perf_counter() - t0


@pytest.fixture(scope="session")
def ex1_p1_study():
    """Example 1 with the polygonal domain, levels 0..3."""
    return run_convergence(StudyConfig(example=1, levels=4, geom="p1"))


@pytest.fixture(scope="session")
def ex2_studies():
    """No-flow study for both multiplier degrees, keyed by k_lambda."""
    return {klam: run_convergence(StudyConfig(example=2, levels=5,
                                              k_lambda=klam))
            for klam in (1, 2)}


@pytest.fixture(scope="session")
def sweep_result():
    cfg = StudyConfig(example=1, workers=os.cpu_count() or 1)
    t0 = time.perf_counter()
    rows = run_interface_sweep(cfg, h=0.1, n=100)
    return rows, time.perf_counter() - t0
