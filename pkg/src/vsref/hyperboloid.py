"""Single-hyperboloid primitive: polar radius, normals, reflection, refraction.

The surface is the branch, enclosing the focus x, of the two-sheeted
hyperboloid of revolution with foci at the origin O and at x.  Parameterized
by the focus and the eccentricity eps > 1, its radial distance from O along a
unit direction m is

    h(m) = |x| (1 - eps^2) / (2 eps (1 - eps <m, k_x>)),   k_x = x/|x|,

defined on the open cap <m, k_x> > 1/eps.  Points z on the branch satisfy the
two-focus identity |z| - |z - x| = |x|/eps, whose gradient gives an exact,
singularity-free surface normal.  A ray from O hitting the branch and
"refracting" with index -1 (the reverse of the mirror reflection) passes
through the focus x; that focal property is what makes these surfaces the
building blocks of the whole toolkit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, TotalInternalReflectionError

__all__ = [
    "Hyperboloid",
    "polar_radius",
    "domain_contains",
    "d_radius_d_eccentricity",
    "surface_point_and_normal",
    "reflect",
    "refract",
]


@dataclass(frozen=True)
class Hyperboloid:
    """Branch with foci O and ``focus`` and eccentricity ``eccentricity`` > 1.

    The degenerate limit eccentricity = 1 (a ray from the focus) is rejected;
    it is representable only as a limit.
    """

    focus: np.ndarray
    eccentricity: float

    def __post_init__(self):
        focus = np.asarray(self.focus, dtype=float)
        if focus.shape != (3,):
            raise ValueError(f"focus must be a 3-vector, got shape {focus.shape}")
        n = float(np.linalg.norm(focus))
        if n <= 0.0:
            raise ValueError("focus must not be at the origin")
        if not self.eccentricity > 1.0:
            raise ValueError(
                f"eccentricity must exceed 1, got {self.eccentricity} (the value 1 is degenerate)"
            )
        object.__setattr__(self, "focus", focus)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.focus))

    @property
    def axis(self) -> np.ndarray:
        return self.focus / self.norm

    @property
    def vertex_radius(self) -> float:
        """Radius along the axis: |x| (1 + eps) / (2 eps)."""
        eps = self.eccentricity
        return self.norm * (1.0 + eps) / (2.0 * eps)


def _axis_cosine(h: Hyperboloid, m) -> float:
    return float(np.asarray(m, dtype=float) @ h.axis)


def domain_contains(h: Hyperboloid, m) -> bool:
    """True iff <m, k_x> > 1/eps (strict)."""
    return _axis_cosine(h, m) > 1.0 / h.eccentricity


def _require_domain(h: Hyperboloid, t: float):
    if not t > 1.0 / h.eccentricity:
        raise DomainError(
            f"direction with axis cosine {t} outside the domain cosine > {1.0 / h.eccentricity}"
        )


def polar_radius(h: Hyperboloid, m) -> float:
    """Radial distance from the origin to the branch along ``m``.

    Strictly positive on the domain; raises DomainError outside it.
    """
    t = _axis_cosine(h, m)
    _require_domain(h, t)
    eps = h.eccentricity
    return h.norm * (1.0 - eps * eps) / (2.0 * eps * (1.0 - eps * t))


def d_radius_d_eccentricity(h: Hyperboloid, m) -> float:
    """Derivative of the polar radius in the eccentricity, at fixed direction.

    Closed form -(|x|/2) (eps^2 - 2 eps t + 1) / (eps (eps t - 1))^2 with
    t = <m, k_x>; strictly negative for eps > 1, so radii shrink as the
    eccentricity grows.
    """
    t = _axis_cosine(h, m)
    _require_domain(h, t)
    eps = h.eccentricity
    num = eps * eps - 2.0 * eps * t + 1.0
    den = eps * (eps * t - 1.0)
    return -0.5 * h.norm * num / (den * den)


def surface_point_and_normal(h: Hyperboloid, m) -> tuple[np.ndarray, np.ndarray]:
    """Surface point z = m * h(m) and unit normal with <m, n> > 0.

    The normal is the normalized gradient of |z| - |z - x|, i.e. m - u with
    u the unit vector from the focus to z.  On the branch u never equals m,
    so the formula is singularity-free; on the axis it reduces to n = m.
    """
    m = np.asarray(m, dtype=float)
    r = polar_radius(h, m)
    z = r * m
    d = z - h.focus
    dn = float(np.linalg.norm(d))
    if dn < 1e-300:
        raise DomainError("surface point coincides with the focus")
    n = m - d / dn
    n /= np.linalg.norm(n)
    return z, n


def reflect(m, n) -> np.ndarray:
    """Mirror reflection y = m - 2 <m, n> n of a unit incident direction."""
    m = np.asarray(m, dtype=float)
    n = np.asarray(n, dtype=float)
    return m - 2.0 * float(m @ n) * n


def refract(m, n, c_f: float) -> np.ndarray:
    """Snell refraction of a unit direction at a surface with index ``c_f``.

    Requires <m, n> > 0.  Raises TotalInternalReflectionError when the
    radicand 1 - c_f^2 (1 - <m, n>^2) is negative.  The index -1 gives the
    reversed mirror reflection -reflect(m, n), the virtual-source case; the
    index +1 is the identity.
    """
    m = np.asarray(m, dtype=float)
    n = np.asarray(n, dtype=float)
    t = float(m @ n)
    if not t > 0.0:
        raise ValueError(f"refraction requires <m, n> > 0, got {t}")
    radicand = 1.0 - c_f * c_f * (1.0 - t * t)
    if radicand < 0.0:
        raise TotalInternalReflectionError(
            f"negative radicand {radicand} for index {c_f}: total internal reflection"
        )
    return c_f * m + (math.sqrt(radicand) - c_f * t) * n
