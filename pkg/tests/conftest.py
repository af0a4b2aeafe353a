"""Shared scene builders for the test suite."""

import math

import numpy as np
import pytest

from vsref.hypotheses import CapTargetRegion
from vsref.solver import SolveConfig, _grid_for_targets


def mirror_pair(angle_deg=10.0, radius=1.0):
    """Two targets mirror-symmetric about the y-z plane, equal radii."""
    a = math.radians(angle_deg)
    return radius * np.array(
        [[math.sin(a), 0.0, math.cos(a)], [-math.sin(a), 0.0, math.cos(a)]]
    )


def cap_scene(seed, k, xi=0.05, w=1.0, W=1.15, frac_lo=0.2):
    """Random targets in a valid cap region plus positive mass fractions."""
    rng = np.random.default_rng(seed)
    alpha = math.acos(1.0 - xi)
    a = np.sqrt(rng.uniform(0.0, 1.0, size=k)) * alpha
    phi = rng.uniform(0.0, 2.0 * math.pi, size=k)
    r = rng.uniform(w, W, size=k)
    pts = np.stack(
        [r * np.sin(a) * np.cos(phi), r * np.sin(a) * np.sin(phi), r * np.cos(a)],
        axis=1,
    )
    frac = rng.uniform(frac_lo, 1.0, size=k)
    return pts, frac / frac.sum()


def solved_scene(seed=3, k=3, resolution=128, gamma=0.3):
    """A converged discrete solve for reuse across verification tests."""
    from vsref.solver import solve_discrete

    pts, frac = cap_scene(seed, k)
    cfg = SolveConfig(grid_resolution=resolution, gamma=gamma)
    grid = _grid_for_targets(pts, cfg, None)
    masses = frac * grid.total_mass
    result = solve_discrete(pts, masses, cfg=cfg, grid=grid)
    return result, grid, masses


@pytest.fixture(scope="session")
def golden_k3():
    return solved_scene(seed=3, k=3, resolution=128, gamma=0.3)


@pytest.fixture(scope="session")
def golden_pair():
    from vsref.solver import solve_discrete

    targets = mirror_pair()
    cfg = SolveConfig(grid_resolution=512, gamma=1.0, tolerance=2e-3)
    grid = _grid_for_targets(targets, cfg, None)
    masses = np.array([0.5, 0.5]) * grid.total_mass
    result = solve_discrete(targets, masses, cfg=cfg, grid=grid)
    return result, grid, masses
