"""vsref: virtual-source reflector design and verification.

Builds convex refractors as intersections of hyperboloid-of-revolution convex
bodies so that a point source's emission, redirected with the reversed-mirror
refraction law, lands prescribed powers on a target set; verifies solutions
independently by quadrature energy accounting and Monte Carlo ray tracing.
"""

from .backend import NAME as backend_name
from .energy import EnergyReport, energy_vector, mu_g
from .hyperboloid import (
    Hyperboloid,
    d_radius_d_eccentricity,
    domain_contains,
    polar_radius,
    reflect,
    refract,
    surface_point_and_normal,
)
from .hypotheses import (
    CapTargetRegion,
    TargetStats,
    audit_h1_h2,
    check_h1,
    collinear_eps_upper,
    epsilon0,
    target_stats,
)
from .refractor import (
    CellAssignment,
    Refractor,
    bounding_radius,
    export_mesh,
    make_refractor,
    map_point,
    radial,
    radial_many,
    visibility_cells,
)
from .raytrace import TraceReport, TraceResult, monte_carlo_verify, trace_one
from .solver import (
    ConeSolveResult,
    ContinuousSolveResult,
    PartitionConfig,
    RotsymSolution,
    SolveConfig,
    SolveResult,
    SolveTrace,
    UniquenessVerdict,
    check_uniqueness,
    collinear_band_quadrature,
    compose_kgon,
    solve_cone,
    solve_continuous,
    solve_discrete,
    solve_rotsym_collinear,
)
from .sphere import (
    ApertureGrid,
    ApertureSpec,
    Cap,
    ConeRegion,
    aperture_for_targets,
    build_grid,
    make_direction,
)

__version__ = "0.1.0"
