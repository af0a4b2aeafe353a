"""Unit-sphere primitives: directions, caps, apertures and quadrature grids.

Directions are plain float64 arrays of shape (3,) normalized to unit length
(within 1e-12); ``make_direction`` is the validating constructor.  The
emission aperture of a scene is the interior of an intersection of spherical
caps, one cap per target direction, all sharing the cap height delta_gamma =
1/(eps0 + gamma).  Quadrature over the aperture uses a polar grid (latitude
bands times longitude sectors about a central axis) with exact per-cell
spherical areas; cells are kept when their center satisfies the strict
aperture predicate, so boundary clipping errors are first order in cell size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyApertureError
from .hypotheses import TargetStats, check_h1, epsilon0, target_stats
from .errors import HalfSpaceConditionError

__all__ = [
    "make_direction",
    "perpendicular_frame",
    "Cap",
    "ApertureSpec",
    "ApertureGrid",
    "ConeRegion",
    "aperture_for_targets",
    "build_grid",
]


def make_direction(v) -> np.ndarray:
    """Normalize a nonzero 3-vector to a unit direction.

    Raises ValueError on a zero (or effectively zero) vector.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {v.shape}")
    n = float(np.linalg.norm(v))
    if n < 1e-300 or not math.isfinite(n):
        raise ValueError("cannot normalize a zero or non-finite vector")
    return v / n


def perpendicular_frame(axis: np.ndarray, x_hint=None) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic orthonormal pair (x, y) perpendicular to ``axis``.

    If ``x_hint`` is given, x is its normalized component perpendicular to the
    axis (falls back to the default recipe when the hint is parallel).
    """
    axis = make_direction(axis)
    if x_hint is not None:
        h = np.asarray(x_hint, dtype=float)
        h = h - (h @ axis) * axis
        if np.linalg.norm(h) > 1e-12:
            x = h / np.linalg.norm(h)
            return x, np.cross(axis, x)
    seed = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    x = np.cross(seed, axis)
    x /= np.linalg.norm(x)
    return x, np.cross(axis, x)


@dataclass(frozen=True)
class Cap:
    """Spherical cap {m : <m, axis> >= delta} with delta in (-1, 1]."""

    axis: np.ndarray
    delta: float

    def __post_init__(self):
        object.__setattr__(self, "axis", make_direction(self.axis))
        if not -1.0 < self.delta <= 1.0:
            raise ValueError(f"delta = {self.delta} outside (-1, 1]")

    def contains(self, m, strict=False) -> bool:
        t = float(np.asarray(m, dtype=float) @ self.axis)
        return t > self.delta if strict else t >= self.delta


@dataclass(frozen=True)
class ApertureSpec:
    """Interior of the intersection of caps sharing one height delta_gamma.

    Membership is strict in every cap.  All caps carry the same delta, so the
    spec is fully described by the distinct cap axes plus delta_gamma.
    """

    caps: tuple[Cap, ...]
    delta_gamma: float

    def __post_init__(self):
        if len(self.caps) == 0:
            raise ValueError("need at least one cap")
        for cap in self.caps:
            if abs(cap.delta - self.delta_gamma) > 1e-12:
                raise ValueError("all caps must share delta_gamma")

    @property
    def cap_axes(self) -> np.ndarray:
        return np.array([cap.axis for cap in self.caps])

    def central_axis(self) -> np.ndarray:
        return make_direction(self.cap_axes.sum(axis=0))

    def contains(self, m) -> bool:
        m = np.asarray(m, dtype=float)
        return bool(np.all(self.cap_axes @ m > self.delta_gamma))

    def contains_many(self, dirs: np.ndarray) -> np.ndarray:
        """Vectorized strict membership for an (N, 3) array of directions."""
        return np.all(np.asarray(dirs, dtype=float) @ self.cap_axes.T > self.delta_gamma, axis=1)


@dataclass(frozen=True)
class ConeRegion:
    """Union of rays from an apex through an aperture on the unit sphere.

    Membership of a point p != apex tests the direction of (p - apex); the
    apex itself belongs (ray parameter zero).  With the apex at the origin
    this is the solid cone the refractor surface is clipped to.
    """

    apex: np.ndarray
    base_spec: ApertureSpec

    def __post_init__(self):
        object.__setattr__(self, "apex", np.asarray(self.apex, dtype=float))

    def contains(self, p) -> bool:
        d = np.asarray(p, dtype=float) - self.apex
        n = float(np.linalg.norm(d))
        if n == 0.0:
            return True
        return self.base_spec.contains(d / n)


def aperture_for_targets(points, gamma: float, stats: TargetStats | None = None) -> ApertureSpec:
    """Aperture of an admissible target set at margin gamma > 0.

    One cap per distinct target direction, each of height
    delta_gamma = 1/(eps0 + gamma); raises if the admissibility check fails,
    naming the violated inequality.
    """
    if not gamma > 0.0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if stats is None:
        stats = target_stats(pts)
    verdict = check_h1(stats)
    if not verdict:
        raise HalfSpaceConditionError("; ".join(verdict.failures))
    eps0 = epsilon0(stats)
    delta_gamma = 1.0 / (eps0 + gamma)
    dirs = pts / np.linalg.norm(pts, axis=1)[:, None]
    axes = np.unique(dirs, axis=0)
    caps = tuple(Cap(axis=a, delta=delta_gamma) for a in axes)
    return ApertureSpec(caps=caps, delta_gamma=delta_gamma)


@dataclass(eq=False)
class ApertureGrid:
    """Polar quadrature grid over an aperture.

    centers:  (N, 3) unit cell-center directions, band-major deterministic
              order.
    areas:    (N,) exact spherical areas (steradians) of the uncut cells.
    g_values: (N,) source density sampled at the centers.
    weights:  areas * g_values; total_mass is their compensated sum.
    band_index / lon_index record each cell's (latitude band, longitude
    sector) in the generating lattice, which tests use for neighbor queries.
    """

    centers: np.ndarray
    areas: np.ndarray
    g_values: np.ndarray
    weights: np.ndarray
    total_mass: float
    axis: np.ndarray
    frame_x: np.ndarray
    n_bands: int
    n_lon: int
    theta_max: float
    band_index: np.ndarray
    lon_index: np.ndarray

    @property
    def n_cells(self) -> int:
        return self.centers.shape[0]

    def cells(self):
        """Iterate (center, area, g_value) triples in grid order."""
        for i in range(self.n_cells):
            yield self.centers[i], float(self.areas[i]), float(self.g_values[i])


def _aperture_theta_max(spec: ApertureSpec, axis: np.ndarray) -> float:
    """Upper bound on the polar angle (from ``axis``) of aperture points."""
    cap_radius = math.acos(max(-1.0, min(1.0, spec.delta_gamma)))
    offsets = np.arccos(np.clip(spec.cap_axes @ axis, -1.0, 1.0))
    return min(math.pi, float((offsets + cap_radius).min()))


def build_grid(spec: ApertureSpec, resolution: int, g=None, frame_x=None) -> ApertureGrid:
    """Discretize an aperture into a polar lattice of quadrature cells.

    ``resolution`` latitude bands span [0, theta_max] about the aperture's
    central axis; each band holds 2*resolution longitude sectors whose centers
    sit on the longitude nodes (phi = j * dphi).  Cell areas are the exact
    band-sector areas dphi * (cos(theta_lo) - cos(theta_hi)); a cell is kept
    iff its center passes the strict aperture predicate.

    ``g`` is a vectorized density callable mapping (N, 3) directions to
    nonnegative values; None means the unit density.  Raises
    EmptyApertureError when no cell center lies inside the aperture.
    """
    if resolution < 8:
        raise ValueError(f"resolution must be >= 8, got {resolution}")
    axis = spec.central_axis()
    fx, fy = perpendicular_frame(axis, x_hint=frame_x)
    theta_max = _aperture_theta_max(spec, axis)
    if theta_max <= 0.0:
        raise EmptyApertureError("aperture has no angular extent about its central axis")

    n_bands = int(resolution)
    n_lon = 2 * int(resolution)
    theta_edges = np.linspace(0.0, theta_max, n_bands + 1)
    theta_mid = 0.5 * (theta_edges[:-1] + theta_edges[1:])
    band_areas = (2.0 * math.pi / n_lon) * (np.cos(theta_edges[:-1]) - np.cos(theta_edges[1:]))
    phi = 2.0 * math.pi * np.arange(n_lon) / n_lon

    sin_t = np.sin(theta_mid)[:, None]
    cos_t = np.cos(theta_mid)[:, None]
    cos_p = np.cos(phi)[None, :]
    sin_p = np.sin(phi)[None, :]
    centers = (
        cos_t[..., None] * axis[None, None, :]
        + (sin_t * cos_p)[..., None] * fx[None, None, :]
        + (sin_t * sin_p)[..., None] * fy[None, None, :]
    ).reshape(-1, 3)
    bidx, lidx = np.meshgrid(np.arange(n_bands), np.arange(n_lon), indexing="ij")
    areas = np.repeat(band_areas, n_lon)

    keep = spec.contains_many(centers)
    if not np.any(keep):
        raise EmptyApertureError("no grid cell center lies inside the aperture")
    centers = np.ascontiguousarray(centers[keep])
    areas = areas[keep]
    bidx = bidx.reshape(-1)[keep]
    lidx = lidx.reshape(-1)[keep]

    if g is None:
        g_values = np.ones(centers.shape[0])
    else:
        g_values = np.asarray(g(centers), dtype=float)
        if g_values.shape != (centers.shape[0],):
            raise ValueError("density must map (N, 3) directions to (N,) values")
        if np.any(g_values < 0.0) or not np.all(np.isfinite(g_values)):
            raise ValueError("density values must be finite and nonnegative")

    weights = areas * g_values
    total = float(math.fsum(weights.tolist()))
    return ApertureGrid(
        centers=centers,
        areas=areas,
        g_values=g_values,
        weights=weights,
        total_mass=total,
        axis=axis,
        frame_x=fx,
        n_bands=n_bands,
        n_lon=n_lon,
        theta_max=theta_max,
        band_index=bidx.astype(np.int64),
        lon_index=lidx.astype(np.int64),
    )
