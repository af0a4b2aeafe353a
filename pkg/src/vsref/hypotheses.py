"""Target-set statistics and admissibility checks.

A target set T (finite points or a sampled region, none at the origin) is
summarized by three numbers: ell = min |x|, L = max |x| and c, the smallest
cosine between any two target directions.  The solver construction is valid
only when ell > 0 and 2*ell*c > L; that condition also forces c > 1/2, so T
always sits in an open half space.  From the statistics we derive the minimal
eccentricity scale

    eps0 = (ell + sqrt(ell^2 - 2*L*ell*c + L^2)) / (2*ell*c - L)

which is >= 1 for every admissible set and bounds all member eccentricities
from below (members must exceed eps0 + gamma for the construction margin
gamma > 0).

The module also provides the audit that demonstrates numerically, over random
admissible statistics, that eps0 >= 1 always holds and that the two legacy
inequalities

    (a)  2*ell - L*eps0 > 0
    (b)  eps0 > (ell*eps0 + sqrt(ell^2*eps0^2 - 2*ell*L*eps0 + L^2*eps0^2))
                / (2*ell - L*eps0)

are never satisfied together, i.e. the legacy "H2" assumptions are vacuous
for admissible target sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import HalfSpaceConditionError, InfeasibleError

__all__ = [
    "TargetStats",
    "H1Verdict",
    "CapTargetRegion",
    "target_stats",
    "check_h1",
    "epsilon0",
    "collinear_eps_upper",
    "audit_h1_h2",
]


@dataclass(frozen=True)
class TargetStats:
    """Summary statistics of a target set.

    ell:   smallest target distance from the origin.
    L:     largest target distance.
    c:     minimum pairwise cosine between target directions.
    ratio: L / ell, the spread K used by the collinear feasibility bound.
    """

    ell: float
    L: float
    c: float
    ratio: float = field(init=False)

    def __post_init__(self):
        if not (self.ell <= self.L):
            raise ValueError(f"ell={self.ell} exceeds L={self.L}")
        if self.c > 1.0 + 1e-12:
            raise ValueError(f"c={self.c} exceeds 1")
        object.__setattr__(self, "ratio", self.L / self.ell if self.ell > 0 else math.inf)


@dataclass(frozen=True)
class H1Verdict:
    """Outcome of the admissibility check, carrying any violated inequality."""

    passed: bool
    failures: tuple[str, ...]
    half_space_implied: bool

    def __bool__(self):
        return self.passed


def target_stats(points) -> TargetStats:
    """Compute (ell, L, c, ratio) for a list of target points.

    Points must be nonempty and bounded away from the origin.  The pairwise
    cosine minimum is exact (all pairs); a singleton has c = 1.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] == 0:
        raise ValueError("expected a nonempty (k, 3) array of target points")
    norms = np.linalg.norm(pts, axis=1)
    if np.any(norms < 1e-300):
        bad = int(np.argmin(norms))
        raise ValueError(f"target point {bad} is at the origin")
    dirs = pts / norms[:, None]
    gram = np.clip(dirs @ dirs.T, -1.0, 1.0)
    return TargetStats(ell=float(norms.min()), L=float(norms.max()), c=float(gram.min()))


def check_h1(stats: TargetStats) -> H1Verdict:
    """Check ell > 0 and 2*ell*c > L.

    Half-space containment is implied whenever the check passes (the second
    inequality forces c > 1/2 > 0) and is reported in the verdict rather than
    re-verified geometrically.
    """
    failures = []
    if not stats.ell > 0.0:
        failures.append(f"ell > 0 violated: ell = {stats.ell}")
    if not 2.0 * stats.ell * stats.c > stats.L:
        failures.append(
            f"2*ell*c > L violated: 2*{stats.ell}*{stats.c} = "
            f"{2.0 * stats.ell * stats.c} <= {stats.L}"
        )
    return H1Verdict(
        passed=not failures,
        failures=tuple(failures),
        half_space_implied=stats.c > 0.0,
    )


def _require_h1(stats: TargetStats):
    verdict = check_h1(stats)
    if not verdict:
        raise HalfSpaceConditionError("; ".join(verdict.failures))


def epsilon0(stats: TargetStats) -> float:
    """Minimal eccentricity scale of an admissible target set.

    Always finite and >= 1 when the admissibility check passes.
    """
    _require_h1(stats)
    ell, L, c = stats.ell, stats.L, stats.c
    disc = ell * ell - 2.0 * L * ell * c + L * L
    return (ell + math.sqrt(max(disc, 0.0))) / (2.0 * ell * c - L)


def collinear_eps_upper(stats: TargetStats) -> float:
    """Upper eccentricity bound 1/(K-1) for a collinear target set.

    K = L/ell must be below 2 (otherwise the set is inadmissible); K = 1
    returns +inf.  Requires c = 1, i.e. all targets on one ray.
    """
    if abs(stats.c - 1.0) > 1e-12:
        raise ValueError(f"collinear bound requires c = 1, got c = {stats.c}")
    K = stats.ratio
    if K >= 2.0:
        raise InfeasibleError(
            f"collinear spread K = {K} >= 2 violates 2*ell > L; no refractor window exists"
        )
    if K <= 1.0:
        return math.inf
    return 1.0 / (K - 1.0)


@dataclass(frozen=True)
class CapTargetRegion:
    """Targets confined to w <= |x| <= W inside a cap of aperture xi about an
    axis direction: membership requires <k_x, axis> >= 1 - xi.

    Valid parameters (w > W/2 and xi below the printed bound) guarantee the
    admissibility inequalities for every subset of the region.
    """

    axis: np.ndarray
    xi: float
    w: float
    W: float

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float)
        n = np.linalg.norm(axis)
        if n == 0.0:
            raise ValueError("axis must be nonzero")
        object.__setattr__(self, "axis", axis / n)
        if not self.w > 0.5 * self.W:
            raise ValueError(f"w = {self.w} must exceed W/2 = {0.5 * self.W}")
        bound = self.xi_bound(self.w, self.W)
        if not 0.0 < self.xi < bound:
            raise ValueError(f"xi = {self.xi} outside (0, {bound})")

    @staticmethod
    def xi_bound(w: float, W: float) -> float:
        """Largest admissible cap aperture: 1 - cos(arccos(W/(2w)) / 2)."""
        return 1.0 - math.cos(0.5 * math.acos(W / (2.0 * w)))

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        r = float(np.linalg.norm(x))
        if r == 0.0:
            return False
        return (self.w <= r <= self.W) and float(x @ self.axis) / r >= 1.0 - self.xi

    def worst_stats(self) -> TargetStats:
        """Statistics of the most spread-out set the region can hold.

        The extreme pair sits at angle 2*arccos(1 - xi), so
        c = cos(2*arccos(1 - xi)); radii take the full [w, W] range.
        """
        c = math.cos(2.0 * math.acos(1.0 - self.xi))
        return TargetStats(ell=self.w, L=self.W, c=c)


def _eps0_delta_form(delta: np.ndarray, c: np.ndarray) -> np.ndarray:
    """eps0 with ell = 1, L = 1 + delta (scale invariance of the formula)."""
    s = 1.0 + delta
    disc = 1.0 - 2.0 * s * c + s * s
    return (1.0 + np.sqrt(np.maximum(disc, 0.0))) / (2.0 * c - s)


def audit_h1_h2(samples: int, seed: int) -> dict:
    """Random sweep over admissible statistics probing the legacy inequalities.

    Samples ell = 1, L = 1 + delta with delta ~ U[0, 1) and c ~ U((1+delta)/2, 1],
    which covers exactly the admissible region.  For each sample it evaluates
    eps0, inequality (a): 2*ell - L*eps0 > 0, and inequality (b), the legacy
    lower bound on eps0; see the module docstring.  Deterministic boundary
    probes (delta in {0, 1e-9}, c in {1, 1 - 1e-9}) are always included.

    Returns a JSON-ready report with counters and any witness tuples.  Witness
    counters use a 1e-12 relative slack so that floating-point rounding at the
    boundary of the admissible region cannot fabricate a witness.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    delta = rng.uniform(0.0, 1.0, size=samples)
    c_low = (1.0 + delta) / 2.0
    c = c_low + (1.0 - c_low) * rng.uniform(0.0, 1.0, size=samples)

    probes_d = np.array([0.0, 0.0, 1e-9, 1e-9])
    probes_c = np.array([1.0, 1.0 - 1e-9, 1.0, 1.0 - 1e-9])
    keep = 2.0 * probes_c > 1.0 + probes_d
    delta = np.concatenate([delta, probes_d[keep]])
    c = np.concatenate([c, probes_c[keep]])

    eps0 = _eps0_delta_form(delta, c)
    L = 1.0 + delta

    ineq_a = 2.0 - L * eps0 > 0.0
    denom = 2.0 - L * eps0
    disc = eps0 * eps0 - 2.0 * L * eps0 + L * L * eps0 * eps0
    with np.errstate(divide="ignore", invalid="ignore"):
        rhs = (eps0 + np.sqrt(np.maximum(disc, 0.0))) / denom
    ineq_b = ineq_a & (eps0 > rhs * (1.0 + 1e-12))
    joint = ineq_a & ineq_b

    below_one = eps0 < 1.0 - 1e-12
    joint_idx = np.flatnonzero(joint)
    below_idx = np.flatnonzero(below_one)

    def _witnesses(idx):
        return [
            {
                "ell": 1.0,
                "L": float(L[i]),
                "c": float(c[i]),
                "eps0": float(eps0[i]),
            }
            for i in idx[:32]
        ]

    # Collinear corner note: with c = 1 and L > ell the formula gives
    # eps0 = L/(2*ell - L) > 1, not 1; recorded so downstream users are not
    # surprised by the strict inequality.
    collinear_example = {
        "ell": 1.0,
        "L": 1.2,
        "c": 1.0,
        "eps0": float(_eps0_delta_form(np.array([0.2]), np.array([1.0]))[0]),
    }

    return {
        "schema": "vsref-audit/1",
        "samples": int(samples),
        "boundary_probes": int(keep.sum()),
        "seed": int(seed),
        "eps0_min": float(eps0.min()),
        "eps0_below_one_count": int(below_idx.size),
        "eps0_below_one_witnesses": _witnesses(below_idx),
        "inequality_a_count": int(ineq_a.sum()),
        "inequality_b_count": int(ineq_b.sum()),
        "joint_count": int(joint_idx.size),
        "joint_witnesses": _witnesses(joint_idx),
        "witness_slack": 1e-12,
        "collinear_eps0_note": (
            "for collinear sets with L > ell the minimal scale is "
            "L/(2*ell - L) > 1, strictly above 1"
        ),
        "collinear_eps0_example": collinear_example,
    }
