"""Command-line front end: scene files in, reports and meshes out.

Scenes are JSON documents with a versioned schema.  Exactly one target block
must be present:

    "targets": {"discrete": {"points": [[x,y,z], ...],
                             "mass_fractions": [...]}}
    "targets": {"cone": {"axis": [...], "xi": 0.95, "distances": [...],
                         "mass_fractions": [...], "k": 8}}
    "targets": {"continuous": {"region": {"axis": [...], "xi": ..., "w": ...,
                               "W": ...}, "density": "uniform",
                               "cell_diameter": ..., "refinements": 3}}

plus "gamma", optional "seed", a "source" block (constant | cosine_power
about an axis | tabulated cosine profile) and an optional "solver" block
mirroring SolveConfig.  Mass fractions are scaled to the aperture mass, which
keeps the prescribed total consistent with the source by construction.

Subcommands: check, solve, verify, mesh, audit, probe-conjecture.
Exit codes: 0 ok, 2 infeasible scene, 3 non-converged, 4 I/O or parse error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .energy import energy_vector
from .errors import (
    ConvergenceError,
    HalfSpaceConditionError,
    InfeasibleError,
    MonotonicityError,
    VsrefError,
)
from .hypotheses import (
    CapTargetRegion,
    audit_h1_h2,
    check_h1,
    collinear_eps_upper,
    epsilon0,
    target_stats,
)
from .raytrace import monte_carlo_verify
from .refractor import export_mesh, make_refractor
from .solver import (
    PartitionConfig,
    SolveConfig,
    solve_continuous,
    solve_cone,
    solve_discrete,
)
from .sphere import aperture_for_targets, build_grid, make_direction
from . import solver as _solver

SCENE_SCHEMA = "vsref-scene/1"
SOLUTION_SCHEMA = "vsref-solution/1"

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_NOT_CONVERGED = 3
EXIT_IO = 4


class SceneError(VsrefError):
    """Scene file failed validation; message names the offending field."""


def _require(cond: bool, field: str, msg: str):
    if not cond:
        raise SceneError(f"scene field {field!r}: {msg}")


def load_scene(path) -> dict:
    try:
        with open(path) as fh:
            scene = json.load(fh)
    except OSError as exc:
        raise SceneError(f"cannot read scene {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SceneError(f"scene {path} is not valid JSON at line {exc.lineno}: {exc.msg}") from exc
    _require(scene.get("schema") == SCENE_SCHEMA, "schema", f"expected {SCENE_SCHEMA!r}")
    _require("targets" in scene, "targets", "missing")
    blocks = [k for k in ("discrete", "cone", "continuous") if k in scene["targets"]]
    _require(len(blocks) == 1, "targets", f"exactly one target block required, got {blocks}")
    gamma = scene.get("gamma")
    _require(
        isinstance(gamma, (int, float)) and math.isfinite(gamma) and gamma > 0,
        "gamma",
        "must be a positive finite number",
    )
    return scene


def build_source(scene):
    """Density callable from the scene's source block (None = unit)."""
    src = scene.get("source", {"type": "constant", "value": 1.0})
    kind = src.get("type", "constant")
    if kind == "constant":
        value = float(src.get("value", 1.0))
        _require(value >= 0.0, "source.value", "must be nonnegative")
        return lambda dirs: np.full(dirs.shape[0], value)
    if kind == "cosine_power":
        axis = make_direction(np.asarray(src["axis"], dtype=float))
        power = float(src.get("power", 1.0))
        value = float(src.get("value", 1.0))
        _require(power >= 0.0, "source.power", "must be nonnegative")
        return lambda dirs: value * np.clip(dirs @ axis, 0.0, None) ** power
    if kind == "tabulated":
        axis = make_direction(np.asarray(src["axis"], dtype=float))
        table = np.asarray(src["table"], dtype=float)
        _require(
            table.ndim == 2 and table.shape[1] == 2 and table.shape[0] >= 2,
            "source.table",
            "expected rows of (cosine, value)",
        )
        cosines, values = table[:, 0], table[:, 1]
        _require(bool(np.all(np.diff(cosines) > 0)), "source.table", "cosines must increase")
        _require(bool(np.all(values >= 0)), "source.table", "values must be nonnegative")
        return lambda dirs: np.interp(dirs @ axis, cosines, values)
    raise SceneError(f"unknown source type {kind!r}")


def build_solve_config(scene) -> SolveConfig:
    cfg = scene.get("solver", {})
    return SolveConfig(
        grid_resolution=int(cfg.get("grid_resolution", 256)),
        tolerance=float(cfg.get("tolerance", 1e-3)),
        max_sweeps=int(cfg.get("max_sweeps", 200)),
        eps_max=cfg.get("eps_max"),
        gamma=float(scene["gamma"]),
        anchor_policy=cfg.get("anchor_policy", "max_radius"),
        anchor_ecc=cfg.get("anchor_ecc"),
        init_policy=cfg.get("init_policy", "high"),
    )


def _scene_points(scene) -> np.ndarray:
    block = scene["targets"]
    if "discrete" in block:
        pts = np.asarray(block["discrete"]["points"], dtype=float)
        _require(pts.ndim == 2 and pts.shape[1] == 3, "targets.discrete.points", "(k, 3) array")
        _require(bool(np.all(np.isfinite(pts))), "targets.discrete.points", "must be finite")
        return pts
    if "cone" in block:
        cone = block["cone"]
        k = int(cone.get("k", 8))
        return _solver._ring_targets(
            np.asarray(cone["axis"], dtype=float),
            None,
            float(cone["xi"]),
            np.asarray(cone["distances"], dtype=float),
            k,
        )
    region = _scene_region(scene)
    alpha = math.acos(1.0 - region.xi)
    corners = []
    for r in (region.w, region.W):
        for a in (0.0, alpha):
            for phi in (0.0, math.pi / 2, math.pi, 3 * math.pi / 2):
                corners.append(
                    r
                    * np.array(
                        [
                            math.sin(a) * math.cos(phi),
                            math.sin(a) * math.sin(phi),
                            math.cos(a),
                        ]
                    )
                )
    frame_z = region.axis
    from .sphere import perpendicular_frame

    fx, fy = perpendicular_frame(frame_z)
    basis = np.stack([fx, fy, frame_z], axis=1)
    return np.array(corners) @ basis.T


def _scene_region(scene) -> CapTargetRegion:
    blk = scene["targets"]["continuous"]["region"]
    return CapTargetRegion(
        axis=np.asarray(blk["axis"], dtype=float),
        xi=float(blk["xi"]),
        w=float(blk["w"]),
        W=float(blk["W"]),
    )


def _check_payload(scene) -> dict:
    pts = _scene_points(scene)
    stats = target_stats(pts)
    verdict = check_h1(stats)
    payload = {
        "schema": "vsref-check/1",
        "h1_passed": verdict.passed,
        "h1_failures": list(verdict.failures),
        "ell": stats.ell,
        "L": stats.L,
        "c": stats.c,
        "ratio": stats.ratio,
    }
    if verdict.passed:
        eps0 = epsilon0(stats)
        gamma = float(scene["gamma"])
        payload["eps0"] = eps0
        payload["delta_gamma"] = 1.0 / (eps0 + gamma)
        payload["eps_floor"] = eps0 + gamma
        if abs(stats.c - 1.0) <= 1e-12:
            try:
                payload["collinear_eps_upper"] = collinear_eps_upper(stats)
            except InfeasibleError as exc:
                payload["h1_passed"] = False
                payload["h1_failures"] = [str(exc)]
    if "cone" in scene["targets"]:
        cone = scene["targets"]["cone"]
        d = np.asarray(cone["distances"], dtype=float)
        if float(d.min()) > 0.5 * float(d.max()):
            xi_min = math.cos(0.5 * math.acos(float(d.max()) / (2.0 * float(d.min()))))
            payload["cone_xi_min"] = xi_min
            if not xi_min < float(cone["xi"]) < 1.0:
                payload["h1_passed"] = False
                payload["h1_failures"] = list(payload["h1_failures"]) + [
                    f"cone xi = {cone['xi']} outside the admissible range ({xi_min}, 1)"
                ]
        else:
            payload["h1_passed"] = False
            payload["h1_failures"] = list(payload["h1_failures"]) + [
                "cone distance spread requires min > max/2"
            ]
    return payload


def cmd_check(args) -> int:
    scene = load_scene(args.scene)
    payload = _check_payload(scene)
    _emit(payload, args.out)
    return EXIT_OK if payload["h1_passed"] else EXIT_INFEASIBLE


def _solution_payload(scene, result, grid_resolution) -> dict:
    R = result.refractor
    return {
        "schema": SOLUTION_SCHEMA,
        "scene": scene,
        "targets": R.targets.tolist(),
        "eccentricities": R.eccentricities.tolist(),
        "gamma": R.gamma,
        "eps0": R.eps0,
        "delta_gamma": R.delta_gamma,
        "grid_resolution": grid_resolution,
        "energy": result.energy.to_dict(),
        "trace": result.trace.to_dict(),
    }


def cmd_solve(args) -> int:
    scene = load_scene(args.scene)
    check = _check_payload(scene)
    if not check["h1_passed"]:
        _emit({"schema": "vsref-failure/1", "reason": "infeasible", "detail": check}, args.out)
        return EXIT_INFEASIBLE
    cfg = build_solve_config(scene)
    if args.grid_res:
        cfg = _replace_cfg(cfg, grid_resolution=args.grid_res)
    if args.tol:
        cfg = _replace_cfg(cfg, tolerance=args.tol)
    g = build_source(scene)
    block = scene["targets"]

    if "discrete" in block:
        pts = np.asarray(block["discrete"]["points"], dtype=float)
        fractions = np.asarray(block["discrete"]["mass_fractions"], dtype=float)
        _require(fractions.shape == (pts.shape[0],), "mass_fractions", "one per point")
        _require(bool(np.all(fractions >= 0)), "mass_fractions", "nonnegative")
        grid = _solver._grid_for_targets(pts, cfg, g)
        masses = fractions / fractions.sum() * grid.total_mass
        result = solve_discrete(pts, masses, g=g, cfg=cfg, grid=grid)
        payload = _solution_payload(scene, result, cfg.grid_resolution)
    elif "cone" in block:
        cone = block["cone"]
        schedule = cone.get("k_schedule") or [int(cone.get("k", 8))]
        out = solve_cone(
            np.asarray(cone["axis"], dtype=float),
            float(cone["xi"]),
            np.asarray(cone["distances"], dtype=float),
            np.asarray(cone["mass_fractions"], dtype=float),
            g=g,
            k_schedule=tuple(int(k) for k in schedule),
            cfg=cfg,
        )
        result = _last_cone_result(out)
        payload = _solution_payload(scene, result, cfg.grid_resolution)
        payload["cone"] = {
            "k_schedule": list(out.k_schedule),
            "profiles": [p.tolist() for p in out.profiles],
            "profile_diffs": out.profile_diffs,
        }
    else:
        cont = block["continuous"]
        _require(cont.get("density", "uniform") == "uniform", "density", "only 'uniform' supported")
        region = _scene_region(scene)
        pcfg = PartitionConfig(
            cell_diameter=float(cont["cell_diameter"]),
            representative_rule=cont.get("representative_rule", "centroid_projected"),
        )
        out = solve_continuous(
            region,
            lambda p: np.ones(p.shape[0]),
            g=g,
            pcfg=pcfg,
            cfg=cfg,
            refinements=int(cont.get("refinements", 3)),
        )
        result = out.result
        payload = _solution_payload(scene, result, cfg.grid_resolution)
        payload["continuous"] = {
            "refinements": out.refinements,
            "dictionary_version": out.dictionary_version,
        }
        if out.warning:
            payload["warning"] = out.warning

    _emit(payload, args.out)
    return EXIT_OK


class _ConeResultShim:
    def __init__(self, refractor, energy, trace):
        self.refractor = refractor
        self.energy = energy
        self.trace = trace


def _last_cone_result(out):
    return _ConeResultShim(out.refractors[-1], out.energies[-1], out.traces[-1])


def _replace_cfg(cfg: SolveConfig, **kw) -> SolveConfig:
    from dataclasses import replace

    return replace(cfg, **kw)


def load_solution(path) -> dict:
    try:
        with open(path) as fh:
            sol = json.load(fh)
    except OSError as exc:
        raise SceneError(f"cannot read solution {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SceneError(f"solution {path} is not valid JSON: {exc.msg}") from exc
    _require(sol.get("schema") == SOLUTION_SCHEMA, "schema", f"expected {SOLUTION_SCHEMA!r}")
    return sol


def _rebuild(sol):
    R = make_refractor(
        np.asarray(sol["targets"], dtype=float),
        np.asarray(sol["eccentricities"], dtype=float),
        float(sol["gamma"]),
    )
    scene = sol["scene"]
    g = build_source(scene)
    cfg = build_solve_config(scene)
    cfg = _replace_cfg(cfg, grid_resolution=int(sol["grid_resolution"]))
    grid = _solver._grid_for_targets(R.targets, cfg, g)
    return R, grid


def cmd_verify(args) -> int:
    sol = load_solution(args.solution)
    R, grid = _rebuild(sol)
    seed = args.seed if args.seed is not None else int(sol["scene"].get("seed", 0))
    prescribed = sol["energy"].get("prescribed")
    report = monte_carlo_verify(R, grid, prescribed=prescribed, n_rays=args.rays, seed=seed)
    payload = report.to_dict()
    quad = energy_vector(R, grid, prescribed=prescribed)
    payload["quadrature_energy"] = list(quad.values)
    if prescribed is not None:
        payload["prescribed"] = list(prescribed)
    sigma = np.asarray(report.per_target_stderr)
    diff = np.abs(np.asarray(report.per_target_energy) - np.asarray(quad.values))
    payload["within_3_sigma"] = bool(np.all(diff <= 3.0 * np.maximum(sigma, 1e-300)))
    _emit(payload, args.out)
    return EXIT_OK


def cmd_mesh(args) -> int:
    sol = load_solution(args.solution)
    R, _ = _rebuild(sol)
    export_mesh(R, args.resolution, args.path)
    return EXIT_OK


def cmd_audit(args) -> int:
    report = audit_h1_h2(args.samples, args.seed)
    _emit(report, args.out)
    ok = report["eps0_below_one_count"] == 0 and report["joint_count"] == 0
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


def cmd_probe_conjecture(args) -> int:
    """Experimental: random admissible scenes solved end to end.

    Samples target sets inside random cap regions with the profile bound
    satisfied, runs the discrete solver and reports convergence counts.  No
    acceptance guarantee is attached to this command.
    """
    rng = np.random.default_rng(args.seed)
    attempted = 0
    converged = 0
    failures = []
    while attempted < args.samples:
        W = 1.0 + rng.uniform(0.05, 0.5)
        try:
            xi = CapTargetRegion.xi_bound(1.0, W) * rng.uniform(0.2, 0.8)
            region = CapTargetRegion(axis=[0.0, 0.0, 1.0], xi=xi, w=1.0, W=W)
        except ValueError:
            continue
        attempted += 1
        k = int(rng.integers(2, 6))
        alpha = math.acos(1.0 - region.xi)
        a = rng.uniform(0.0, alpha, size=k)
        phi = rng.uniform(0.0, 2 * math.pi, size=k)
        r = rng.uniform(region.w, region.W, size=k)
        pts = np.stack(
            [
                r * np.sin(a) * np.cos(phi),
                r * np.sin(a) * np.sin(phi),
                r * np.cos(a),
            ],
            axis=1,
        )
        cfg = SolveConfig(grid_resolution=96, gamma=float(rng.uniform(0.2, 0.8)))
        try:
            grid = _solver._grid_for_targets(pts, cfg, None)
            frac = rng.uniform(0.2, 1.0, size=k)
            masses = frac / frac.sum() * grid.total_mass
            solve_discrete(pts, masses, cfg=cfg, grid=grid)
            converged += 1
        except VsrefError as exc:
            failures.append(str(exc)[:120])
    payload = {
        "schema": "vsref-probe/1",
        "samples": attempted,
        "converged": converged,
        "failures": failures[:10],
    }
    _emit(payload, args.out)
    return EXIT_OK


def _emit(payload: dict, out_path=None):
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vsref", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="validate a scene and print its admissibility report")
    c.add_argument("--scene", required=True)
    c.add_argument("--out")
    c.set_defaults(func=cmd_check)

    s = sub.add_parser("solve", help="solve a scene and write the solution JSON")
    s.add_argument("--scene", required=True)
    s.add_argument("--out")
    s.add_argument("--grid-res", type=int, default=None)
    s.add_argument("--tol", type=float, default=None)
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="Monte Carlo verification of a solution file")
    v.add_argument("--solution", required=True)
    v.add_argument("--rays", type=int, default=1_000_000)
    v.add_argument("--seed", type=int, default=None)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    m = sub.add_parser("mesh", help="export the solution surface as an ASCII triangle mesh")
    m.add_argument("--solution", required=True)
    m.add_argument("--resolution", type=int, default=64)
    m.add_argument("--path", required=True)
    m.set_defaults(func=cmd_mesh)

    a = sub.add_parser("audit", help="random audit of the admissibility inequalities")
    a.add_argument("--samples", type=int, default=100_000)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out")
    a.set_defaults(func=cmd_audit)

    pc = sub.add_parser(
        "probe-conjecture",
        help="experimental solver sweep over random admissible scenes",
    )
    pc.add_argument("--samples", type=int, default=5)
    pc.add_argument("--seed", type=int, default=0)
    pc.add_argument("--out")
    pc.set_defaults(func=cmd_probe_conjecture)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SceneError as exc:
        print(json.dumps({"schema": "vsref-failure/1", "reason": "io", "detail": str(exc)}))
        return EXIT_IO
    except (OSError, json.JSONDecodeError) as exc:
        print(json.dumps({"schema": "vsref-failure/1", "reason": "io", "detail": str(exc)}))
        return EXIT_IO
    except (HalfSpaceConditionError, InfeasibleError) as exc:
        print(
            json.dumps(
                {"schema": "vsref-failure/1", "reason": "infeasible", "detail": str(exc)}
            )
        )
        return EXIT_INFEASIBLE
    except (ConvergenceError, MonotonicityError) as exc:
        print(
            json.dumps(
                {"schema": "vsref-failure/1", "reason": "non-converged", "detail": str(exc)}
            )
        )
        return EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())
