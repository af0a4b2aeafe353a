"""Convex refractor: max-of-member-radii surface over a cap-intersection aperture.

A refractor is determined by a finite target list and one eccentricity per
target.  Its radial function is the pointwise max of the member hyperboloid
radii, which is the near boundary (seen from the origin) of the intersection
of the member convex bodies.  The member achieving the max at a direction is
the supporting surface there and receives that direction's energy; mapping
grid cells to winners gives the discrete visibility sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .errors import DomainError
from .hyperboloid import Hyperboloid
from .hypotheses import TargetStats, epsilon0, target_stats
from .sphere import ApertureGrid, ApertureSpec, aperture_for_targets, perpendicular_frame

__all__ = [
    "Refractor",
    "CellAssignment",
    "make_refractor",
    "radial",
    "radial_many",
    "map_point",
    "visibility_cells",
    "bounding_radius",
    "export_mesh",
]

TIE_TOLERANCE = 1e-12


@dataclass(eq=False)
class Refractor:
    """Validated refractor over an admissible target set.

    eccentricities[i] is the member eccentricity assigned to targets[i]; all
    must strictly exceed eps0 + gamma so every member's domain covers the
    whole aperture.  eps_floor records the smallest member eccentricity.
    """

    targets: np.ndarray
    eccentricities: np.ndarray
    gamma: float
    stats: TargetStats = field(init=False)
    eps0: float = field(init=False)
    delta_gamma: float = field(init=False)
    eps_floor: float = field(init=False)
    aperture: ApertureSpec = field(init=False)
    norms: np.ndarray = field(init=False)
    axes: np.ndarray = field(init=False)

    def __post_init__(self):
        targets = np.atleast_2d(np.asarray(self.targets, dtype=float))
        eccs = np.atleast_1d(np.asarray(self.eccentricities, dtype=float))
        if targets.shape[0] != eccs.shape[0]:
            raise ValueError(
                f"{targets.shape[0]} targets but {eccs.shape[0]} eccentricities"
            )
        if not self.gamma > 0.0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        self.targets = targets
        self.eccentricities = eccs
        self.stats = target_stats(targets)
        self.eps0 = epsilon0(self.stats)
        floor = self.eps0 + self.gamma
        bad = np.flatnonzero(~(eccs > floor))
        if bad.size:
            i = int(bad[0])
            raise ValueError(
                f"eccentricity {eccs[i]} of member {i} must strictly exceed "
                f"eps0 + gamma = {floor}"
            )
        self.delta_gamma = 1.0 / floor
        self.eps_floor = float(eccs.min())
        self.aperture = aperture_for_targets(targets, self.gamma, stats=self.stats)
        self.norms = np.linalg.norm(targets, axis=1)
        self.axes = np.ascontiguousarray(targets / self.norms[:, None])

    @property
    def k(self) -> int:
        return self.targets.shape[0]

    def member(self, i: int) -> Hyperboloid:
        return Hyperboloid(focus=self.targets[i], eccentricity=float(self.eccentricities[i]))

    def member_radii_matrix(self, dirs: np.ndarray) -> np.ndarray:
        """(k, N) matrix of member radii at an (N, 3) direction array.

        Valid for directions inside every member domain (true on the
        aperture); no domain checks are performed here.
        """
        dirs = np.ascontiguousarray(np.asarray(dirs, dtype=float))
        tmat = np.ascontiguousarray(self.axes @ dirs.T)
        H = np.empty_like(tmat)
        for i in range(self.k):
            backend.radii_row(tmat[i], float(self.norms[i]), float(self.eccentricities[i]), H[i])
        return H


@dataclass(eq=False)
class CellAssignment:
    """Winner per grid cell plus the tie sets.

    winner[c] is the lowest member index within tie_tolerance (relative) of
    the max radius at cell c; ties maps a cell index to the full tuple of
    tied member indices (only cells with two or more).
    """

    winner: np.ndarray
    ties: dict[int, tuple[int, ...]]
    tie_tolerance: float

    def cells_of(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.winner == i)

    def cells_of_subset(self, indices) -> np.ndarray:
        """Discrete visibility set of a target subset: union of winner cells
        plus tie cells carrying any index in the subset."""
        idx = set(int(j) for j in indices)
        mask = np.isin(self.winner, list(idx))
        for cell, tied in self.ties.items():
            if idx.intersection(tied):
                mask[cell] = True
        return np.flatnonzero(mask)


def make_refractor(targets, eccentricities, gamma: float) -> Refractor:
    """Construct and validate a refractor; see ``Refractor`` for the rules."""
    return Refractor(targets=targets, eccentricities=eccentricities, gamma=gamma)


def _member_values(R: Refractor, m) -> np.ndarray:
    """Member radii at one direction, -inf where the domain excludes it."""
    m = np.asarray(m, dtype=float)
    t = R.axes @ m
    eps = R.eccentricities
    vals = np.full(R.k, -np.inf)
    ok = t > 1.0 / eps
    if np.any(ok):
        vals[ok] = R.norms[ok] * (1.0 - eps[ok] ** 2) / (2.0 * eps[ok] * (1.0 - eps[ok] * t[ok]))
    return vals


def radial(R: Refractor, m) -> float:
    """Radial function: max member radius at direction ``m``.

    Only members whose domain contains ``m`` participate; raises DomainError
    if there are none (cannot happen for aperture directions).
    """
    vals = _member_values(R, m)
    r = float(vals.max())
    if not math.isfinite(r):
        raise DomainError("direction lies outside every member domain")
    return r


def radial_many(R: Refractor, dirs: np.ndarray) -> np.ndarray:
    """Vectorized radial function over an (N, 3) array of aperture directions."""
    return np.max(R.member_radii_matrix(dirs), axis=0)


def map_point(R: Refractor, m, tie_tolerance: float = TIE_TOLERANCE) -> tuple[int, ...]:
    """Refractor map at one direction: indices within tie_tolerance (relative)
    of the max radius, sorted ascending.  Singleton almost everywhere."""
    vals = _member_values(R, m)
    r = vals.max()
    if not math.isfinite(r):
        raise DomainError("direction lies outside every member domain")
    return tuple(int(i) for i in np.flatnonzero(vals >= r - tie_tolerance * abs(r)))


def visibility_cells(
    R: Refractor, grid: ApertureGrid, tie_tolerance: float = TIE_TOLERANCE
) -> CellAssignment:
    """Assign every grid cell to the member supporting the surface there.

    Winner is the lowest tied index (the energy-accounting rule); the full
    tie sets are reported separately.
    """
    H = R.member_radii_matrix(grid.centers)
    winner, _, _ = backend.winner_and_masses(H, grid.weights, tie_tolerance)
    top = np.max(H, axis=0)
    n_tied = np.sum(H >= top[None, :] - tie_tolerance * np.abs(top)[None, :], axis=0)
    ties = {}
    for cell in np.flatnonzero(n_tied > 1):
        vals = H[:, cell]
        cut = vals.max()
        cut -= tie_tolerance * abs(cut)
        ties[int(cell)] = tuple(int(i) for i in np.flatnonzero(vals >= cut))
    return CellAssignment(winner=winner, ties=ties, tie_tolerance=tie_tolerance)


def bounding_radius(R: Refractor) -> float:
    """Upper bound on the radial function over the closed aperture.

    Member radii shrink with eccentricity and grow toward the aperture rim,
    so the max of each member's radius evaluated at the floor eccentricity
    and at the rim cosine delta_gamma bounds everything; member vertex radii
    are included for completeness.
    """
    eps = R.eps_floor
    rim_t = R.delta_gamma
    rim = R.norms * (1.0 - eps * eps) / (2.0 * eps * (1.0 - eps * rim_t))
    vertex = R.norms * (1.0 + eps) / (2.0 * eps)
    return float(max(rim.max(), vertex.max()))


def _rim_angle(spec: ApertureSpec, axis: np.ndarray, fx: np.ndarray, fy: np.ndarray, phi: float) -> float:
    """Polar angle of the aperture boundary along azimuth ``phi`` (bisection)."""
    cos_p, sin_p = math.cos(phi), math.sin(phi)

    def margin(theta: float) -> float:
        m = math.cos(theta) * axis + math.sin(theta) * (cos_p * fx + sin_p * fy)
        return float((spec.cap_axes @ m).min()) - spec.delta_gamma

    if margin(0.0) <= 0.0:
        raise DomainError("aperture central axis is not interior; cannot mesh")
    lo, hi = 0.0, math.pi
    if margin(hi) > 0.0:
        return hi
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if margin(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return lo


def export_mesh(R: Refractor, resolution: int, path) -> None:
    """Write an indexed triangle mesh of the surface over the aperture.

    Disk topology: one central vertex on the aperture axis, resolution - 1
    concentric rings of 2*resolution vertices each, fitted to the aperture
    boundary per azimuth.  ASCII format, one ``v x y z`` record per vertex
    (>= 9 significant digits) and 1-indexed ``f a b c`` records; watertight
    over the disk.  resolution = 2 degenerates to a 4-triangle fan.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    spec = R.aperture
    axis = spec.central_axis()
    fx, fy = perpendicular_frame(axis)
    n_az = 2 * resolution
    n_rings = resolution - 1
    phis = 2.0 * math.pi * np.arange(n_az) / n_az
    rims = np.array([_rim_angle(spec, axis, fx, fy, p) for p in phis])

    dirs = [axis]
    for j in range(1, n_rings + 1):
        frac = j / n_rings if n_rings > 0 else 1.0
        theta = frac * rims * (1.0 - 1e-9)
        ring = (
            np.cos(theta)[:, None] * axis
            + (np.sin(theta) * np.cos(phis))[:, None] * fx
            + (np.sin(theta) * np.sin(phis))[:, None] * fy
        )
        dirs.extend(ring)
    dirs = np.array(dirs)
    radii = radial_many(R, dirs)
    verts = dirs * radii[:, None]

    faces = []
    for a in range(n_az):
        b = (a + 1) % n_az
        faces.append((0, 1 + a, 1 + b))
    for j in range(n_rings - 1):
        base0 = 1 + j * n_az
        base1 = base0 + n_az
        for a in range(n_az):
            b = (a + 1) % n_az
            faces.append((base0 + a, base1 + a, base1 + b))
            faces.append((base0 + a, base1 + b, base0 + b))

    with open(path, "w") as fh:
        for v in verts:
            fh.write(f"v {v[0]:.12g} {v[1]:.12g} {v[2]:.12g}\n")
        for f in faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")
