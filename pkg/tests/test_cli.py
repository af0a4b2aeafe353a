import json
import math

import numpy as np
import pytest

from vsref.cli import main

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_IO = 4


def write_scene(path, scene):
    path.write_text(json.dumps(scene, indent=1))
    return str(path)


def pair_scene(grid_resolution=512, tolerance=2e-3):
    a = math.radians(10.0)
    return {
        "schema": "vsref-scene/1",
        "unit": "m",
        "gamma": 1.0,
        "seed": 11,
        "source": {"type": "constant", "value": 1.0},
        "targets": {
            "discrete": {
                "points": [
                    [math.sin(a), 0.0, math.cos(a)],
                    [-math.sin(a), 0.0, math.cos(a)],
                ],
                "mass_fractions": [0.5, 0.5],
            }
        },
        "solver": {"grid_resolution": grid_resolution, "tolerance": tolerance},
    }


class TestCheck:
    def test_valid_pair(self, tmp_path, capsys):
        scene = write_scene(tmp_path / "s.json", pair_scene())
        assert main(["check", "--scene", scene]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["h1_passed"]
        assert payload["eps0"] == pytest.approx(1.5320888862379551)

    def test_collinear_hand_value(self, tmp_path, capsys):
        scene = pair_scene()
        scene["targets"]["discrete"]["points"] = [[0, 0, 1.0], [0, 0, 1.2]]
        path = write_scene(tmp_path / "s.json", scene)
        assert main(["check", "--scene", path]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["eps0"] == pytest.approx(1.5)
        assert payload["collinear_eps_upper"] == pytest.approx(5.0)

    def test_h1_violation_named(self, tmp_path, capsys):
        scene = pair_scene()
        scene["targets"]["discrete"]["points"] = [[0, 0, 1.0], [1.9, 0, 0.3]]
        scene["targets"]["discrete"]["mass_fractions"] = [0.5, 0.5]
        path = write_scene(tmp_path / "s.json", scene)
        assert main(["check", "--scene", path]) == EXIT_INFEASIBLE
        payload = json.loads(capsys.readouterr().out)
        assert any("2*ell*c > L" in f for f in payload["h1_failures"])

    def test_cone_xi_out_of_range(self, tmp_path, capsys):
        scene = {
            "schema": "vsref-scene/1",
            "gamma": 0.5,
            "targets": {
                "cone": {
                    "axis": [0, 0, 1],
                    "xi": 0.2,
                    "distances": [1.0, 1.5],
                    "mass_fractions": [0.5, 0.5],
                    "k": 4,
                }
            },
        }
        path = write_scene(tmp_path / "s.json", scene)
        assert main(["check", "--scene", path]) == EXIT_INFEASIBLE
        payload = json.loads(capsys.readouterr().out)
        assert any("xi" in f for f in payload["h1_failures"])

    def test_parse_error_is_io(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["check", "--scene", str(bad)]) == EXIT_IO

    def test_missing_file_is_io(self, tmp_path):
        assert main(["check", "--scene", str(tmp_path / "none.json")]) == EXIT_IO


class TestSolveVerifyMesh:
    def test_full_pipeline(self, tmp_path, capsys):
        scene = write_scene(tmp_path / "s.json", pair_scene())
        sol_path = str(tmp_path / "sol.json")
        assert main(["solve", "--scene", scene, "--out", sol_path]) == EXIT_OK
        sol = json.loads(open(sol_path).read())
        eccs = sol["eccentricities"]
        assert abs(eccs[0] - eccs[1]) <= 1e-6
        assert sol["trace"]["converged"]

        ver_path = str(tmp_path / "ver.json")
        assert (
            main(
                [
                    "verify",
                    "--solution",
                    sol_path,
                    "--rays",
                    "100000",
                    "--seed",
                    "3",
                    "--out",
                    ver_path,
                ]
            )
            == EXIT_OK
        )
        ver = json.loads(open(ver_path).read())
        assert ver["within_3_sigma"]
        assert ver["max_focal_miss"] <= 1e-9

        mesh_path = str(tmp_path / "m.obj")
        assert (
            main(["mesh", "--solution", sol_path, "--resolution", "8", "--path", mesh_path])
            == EXIT_OK
        )
        lines = open(mesh_path).read().splitlines()
        assert sum(1 for l in lines if l.startswith("v ")) == 1 + 7 * 16

    def test_energy_report_roundtrip_bit_stable(self, tmp_path):
        # asymmetric masses keep the visibility boundary off the grid's
        # mirror meridian, so a coarse grid converges
        blob = pair_scene(grid_resolution=128, tolerance=1e-3)
        blob["targets"]["discrete"]["mass_fractions"] = [0.6, 0.4]
        scene = write_scene(tmp_path / "s.json", blob)
        a_path = str(tmp_path / "a.json")
        b_path = str(tmp_path / "b.json")
        assert main(["solve", "--scene", scene, "--out", a_path]) == EXIT_OK
        sol = json.loads(open(a_path).read())

        from vsref.cli import _rebuild
        from vsref.energy import energy_vector

        R, grid = _rebuild(sol)
        rep = energy_vector(R, grid, prescribed=sol["energy"]["prescribed"])
        assert rep.to_dict() == sol["energy"]

        # solving the same scene again reproduces the identical file
        assert main(["solve", "--scene", scene, "--out", b_path]) == EXIT_OK
        assert open(a_path).read() == open(b_path).read()

    def test_infeasible_collinear_spread(self, tmp_path, capsys):
        scene = pair_scene()
        scene["targets"]["discrete"]["points"] = [[0, 0, 1.0], [0, 0, 2.0]]
        path = write_scene(tmp_path / "s.json", scene)
        code = main(["solve", "--scene", path, "--out", str(tmp_path / "x.json")])
        assert code == EXIT_INFEASIBLE

    def test_solve_cone_scene(self, tmp_path):
        scene = {
            "schema": "vsref-scene/1",
            "gamma": 0.6,
            "source": {"type": "cosine_power", "axis": [0, 0, 1], "power": 1.0},
            "targets": {
                "cone": {
                    "axis": [0, 0, 1],
                    "xi": 0.95,
                    "distances": [1.0, 1.08],
                    "mass_fractions": [0.5, 0.5],
                    "k_schedule": [4, 8],
                }
            },
            "solver": {"grid_resolution": 128},
        }
        path = write_scene(tmp_path / "cone.json", scene)
        out = str(tmp_path / "sol.json")
        assert main(["solve", "--scene", path, "--out", out]) == EXIT_OK
        sol = json.loads(open(out).read())
        assert sol["cone"]["k_schedule"] == [4, 8]
        assert len(sol["eccentricities"]) == 2 * 8

    def test_solve_continuous_scene(self, tmp_path):
        scene = {
            "schema": "vsref-scene/1",
            "gamma": 0.4,
            "targets": {
                "continuous": {
                    "region": {"axis": [0, 0, 1], "xi": 0.006, "w": 1.0, "W": 1.3},
                    "density": "uniform",
                    "cell_diameter": 1.0,
                    "refinements": 2,
                }
            },
            "solver": {"grid_resolution": 96},
        }
        path = write_scene(tmp_path / "cont.json", scene)
        out = str(tmp_path / "sol.json")
        assert main(["solve", "--scene", path, "--out", out]) == EXIT_OK
        sol = json.loads(open(out).read())
        gaps = [lev["weak_star_gap"] for lev in sol["continuous"]["refinements"]]
        assert gaps[1] < gaps[0]


class TestAuditAndProbe:
    def test_audit_clean(self, tmp_path):
        out = str(tmp_path / "audit.json")
        assert main(["audit", "--samples", "100000", "--seed", "3", "--out", out]) == EXIT_OK
        payload = json.loads(open(out).read())
        assert payload["eps0_below_one_count"] == 0
        assert payload["joint_count"] == 0

    def test_probe_runs(self, tmp_path):
        out = str(tmp_path / "probe.json")
        assert main(["probe-conjecture", "--samples", "2", "--seed", "1", "--out", out]) == EXIT_OK
        payload = json.loads(open(out).read())
        assert payload["samples"] == 2


class TestSceneValidation:
    def test_two_target_blocks_rejected(self, tmp_path):
        scene = pair_scene()
        scene["targets"]["cone"] = {
            "axis": [0, 0, 1],
            "xi": 0.95,
            "distances": [1.0],
            "mass_fractions": [1.0],
        }
        path = write_scene(tmp_path / "s.json", scene)
        assert main(["check", "--scene", path]) == EXIT_IO

    def test_bad_gamma_rejected(self, tmp_path):
        scene = pair_scene()
        scene["gamma"] = -1.0
        path = write_scene(tmp_path / "s.json", scene)
        assert main(["check", "--scene", path]) == EXIT_IO

    def test_wrong_schema_rejected(self, tmp_path):
        scene = pair_scene()
        scene["schema"] = "other/9"
        path = write_scene(tmp_path / "s.json", scene)
        assert main(["check", "--scene", path]) == EXIT_IO
