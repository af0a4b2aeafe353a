"""Forward Monte Carlo validation of a refractor.

Rays are sampled from the quadrature grid's discrete distribution (cell
weights g * area), so the stochastic energy estimate and the quadrature
energy vector share one underlying measure: any discrepancy beyond binomial
noise isolates an assignment or geometry error rather than sampling bias.
Every ray is refracted with the reversed-mirror law at its winning member's
analytic normal, and the distance from the refracted line to the assigned
target (the focal miss) is recorded; on an exact surface it is zero to
roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hyperboloid import refract, surface_point_and_normal
from .refractor import TIE_TOLERANCE, Refractor, map_point, visibility_cells
from .sphere import ApertureGrid

__all__ = ["TraceResult", "TraceReport", "trace_one", "monte_carlo_verify"]

FOCAL_MISS_TOL = 1e-9


@dataclass(frozen=True)
class TraceResult:
    """Single-ray outcome: surface hit, winning target, refracted direction
    and the relative focal miss (distance of the refracted line to the
    winner, over the winner's distance)."""

    point: np.ndarray
    winner: int
    tie_set: tuple[int, ...]
    direction: np.ndarray
    focal_miss: float

    @property
    def is_tie(self) -> bool:
        return len(self.tie_set) > 1


@dataclass(frozen=True)
class TraceReport:
    """Monte Carlo verification summary; deterministic given the seed.

    per_target_counts / per_target_energy estimate the delivered energies
    (ray weight = total mass / rays); stderr is the binomial standard error
    of each energy estimate.  max_focal_miss is taken over non-tie rays;
    rays_hit_target counts rays whose focal miss is within tolerance.
    """

    rays_total: int
    rays_hit_target: int
    tie_rays: int
    per_target_counts: tuple[int, ...]
    per_target_energy: tuple[float, ...]
    per_target_stderr: tuple[float, ...]
    max_focal_miss: float
    total_mass: float
    seed: int
    miss_tolerance: float = FOCAL_MISS_TOL

    def to_dict(self) -> dict:
        return {
            "schema": "vsref-trace-report/1",
            "rays_total": self.rays_total,
            "rays_hit_target": self.rays_hit_target,
            "tie_rays": self.tie_rays,
            "per_target_counts": list(self.per_target_counts),
            "per_target_energy": list(self.per_target_energy),
            "per_target_stderr": list(self.per_target_stderr),
            "max_focal_miss": self.max_focal_miss,
            "total_mass": self.total_mass,
            "seed": self.seed,
            "miss_tolerance": self.miss_tolerance,
        }


def trace_one(R: Refractor, m, tie_tolerance: float = TIE_TOLERANCE) -> TraceResult:
    """Trace a single aperture direction through the refractor.

    The winner is the lowest tied member (the energy-accounting rule); its
    analytic normal drives the index -1 refraction.  Tie rays are flagged so
    callers can exclude them from focal statistics.
    """
    m = np.asarray(m, dtype=float)
    ties = map_point(R, m, tie_tolerance)
    winner = ties[0]
    member = R.member(winner)
    z, n = surface_point_and_normal(member, m)
    y = refract(m, n, -1.0)
    x = R.targets[winner]
    rel = x - z
    miss = float(np.linalg.norm(rel - (rel @ y) * y)) / float(np.linalg.norm(x))
    return TraceResult(point=z, winner=winner, tie_set=ties, direction=y, focal_miss=miss)


def _batch_focal_miss(R: Refractor, dirs: np.ndarray, winners: np.ndarray) -> np.ndarray:
    """Vectorized focal miss of rays refracted at their winners' surfaces."""
    eps = R.eccentricities[winners]
    norms = R.norms[winners]
    axes = R.axes[winners]
    t = np.einsum("ij,ij->i", dirs, axes)
    radii = norms * (1.0 - eps * eps) / (2.0 * eps * (1.0 - eps * t))
    z = radii[:, None] * dirs
    x = R.targets[winners]
    d = z - x
    u = d / np.linalg.norm(d, axis=1)[:, None]
    n = dirs - u
    n /= np.linalg.norm(n, axis=1)[:, None]
    mn = np.einsum("ij,ij->i", dirs, n)
    y = -dirs + 2.0 * mn[:, None] * n
    rel = x - z
    proj = np.einsum("ij,ij->i", rel, y)
    miss = np.linalg.norm(rel - proj[:, None] * y, axis=1)
    return miss / norms


def monte_carlo_verify(
    R: Refractor,
    grid: ApertureGrid,
    prescribed=None,
    n_rays: int = 100_000,
    seed: int = 0,
) -> TraceReport:
    """Sample rays from the grid's weight distribution and verify delivery.

    Directions are drawn by inverse CDF over cell weights (each ray carries
    total_mass / n_rays); energies per target come from the cell assignment,
    ties resolved to the lowest index exactly as in the energy module.
    The focal property is checked for every sampled ray.
    """
    if n_rays < 1000:
        raise ValueError("need at least 1000 rays for meaningful statistics")
    assignment = visibility_cells(R, grid)
    w = grid.weights
    cdf = np.cumsum(w)
    total = float(cdf[-1])
    rng = np.random.default_rng(seed)
    u = rng.random(n_rays) * total
    cells = np.searchsorted(cdf, u, side="right")
    np.clip(cells, 0, w.size - 1, out=cells)

    winners = assignment.winner[cells].astype(np.int64)
    counts = np.bincount(winners, minlength=R.k)
    ray_mass = grid.total_mass / n_rays
    energy = counts * ray_mass
    p = counts / n_rays
    stderr = grid.total_mass * np.sqrt(np.maximum(p * (1.0 - p), 0.0) / n_rays)

    tie_cells = set(assignment.ties.keys())
    if tie_cells:
        tie_mask = np.isin(cells, np.fromiter(tie_cells, dtype=np.int64))
    else:
        tie_mask = np.zeros(n_rays, dtype=bool)

    dirs = grid.centers[cells]
    miss = _batch_focal_miss(R, dirs, winners)
    non_tie = ~tie_mask
    max_miss = float(miss[non_tie].max()) if np.any(non_tie) else 0.0
    hits = int(np.count_nonzero(miss[non_tie] <= FOCAL_MISS_TOL))

    return TraceReport(
        rays_total=n_rays,
        rays_hit_target=hits,
        tie_rays=int(tie_mask.sum()),
        per_target_counts=tuple(int(c) for c in counts),
        per_target_energy=tuple(float(e) for e in energy),
        per_target_stderr=tuple(float(s) for s in stderr),
        max_focal_miss=max_miss,
        total_mass=grid.total_mass,
        seed=seed,
    )
