import json
from pathlib import Path

import numpy as np
import pytest

from tactipose.cli import main
from tactipose.database import load_ldb
from tactipose.mesh import save_obj
from tactipose.primitives import cube
from tactipose.scenes import make_scene
from tactipose.sensor import SensorModel, load_tpat, save_tpat

SENSOR_JSON = json.dumps({"pixels_u": 30, "pixels_v": 40})
SENSOR = SensorModel(pixels_u=30, pixels_v=40)


@pytest.fixture()
def cube_obj(tmp_path):
    path, mesh = tmp_path / "cube.obj", cube()
    save_obj(mesh, path)
    return path


class TestGenPatches:
    def test_mesh_mode_writes_patches_and_samples(self, tmp_path, cube_obj):
        out = tmp_path / "patches"
        assert main(["gen-patches", "--mesh", str(cube_obj), "--out-dir",
                     str(out), "--samples", "5", "--seed", "3",
                     "--sensor", SENSOR_JSON]) == 0
        files = sorted(out.glob("*.tpat"))
        assert len(files) == 5
        meta = json.loads((out / "samples.json").read_text())
        assert len(meta["samples"]) == 5
        patch = load_tpat(files[0])
        assert patch.sensor.pixels_u == 30

    def test_superquadric_mode(self, tmp_path):
        out = tmp_path / "train"
        assert main(["gen-patches", "--superquadrics", "20", "--out-dir",
                     str(out), "--seed", "1", "--sensor", SENSOR_JSON]) == 0
        assert len(list(out.glob("*.tpat"))) == 20

    def test_deterministic_bytes(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            main(["gen-patches", "--superquadrics", "8", "--out-dir",
                  str(out), "--seed", "5", "--sensor", SENSOR_JSON])
        for fa, fb in zip(sorted(a.glob("*")), sorted(b.glob("*"))):
            assert fa.read_bytes() == fb.read_bytes()


class TestBuildDb:
    def test_builds_loadable_database(self, tmp_path, cube_obj):
        out = tmp_path / "cube.ldb1"
        assert main(["build-db", "--mesh", str(cube_obj), "--m", "25",
                     "--seed", "2", "--out", str(out),
                     "--sensor", SENSOR_JSON]) == 0
        db = load_ldb(out)
        assert len(db) == 25
        assert db.encoder_id == "analytic-v1"

    def test_primitive_name_accepted(self, tmp_path):
        out = tmp_path / "c.ldb1"
        assert main(["build-db", "--mesh", "cube", "--m", "10",
                     "--out", str(out), "--sensor", SENSOR_JSON]) == 0
        assert out.exists()


def write_scene_config(tmp_path, db_path, mode="ours", n_sensors=3):
    mesh = cube()
    scene = make_scene(mesh, n_sensors, None, seed=6, sensor=SENSOR,
                       scene_uid=9)
    sensors = []
    for i, obs in enumerate(scene.observations):
        patch_path = tmp_path / f"obs_{i}.tpat"
        save_tpat(patch_path, obs.patch)
        sensors.append({
            "position": [float(x) for x in obs.pose.translation],
            "quaternion_wxyz": [float(x) for x in obs.pose.to_quaternion()],
            "patch": patch_path.name,
        })
    cfg = {
        "version": 1,
        "mesh": "cube",
        "database": str(db_path),
        "mode": mode,
        "seed": 4,
        "sensors": sensors,
        "sensor_model": {"pixels_u": 30, "pixels_v": 40},
        "selection": {"n_max": 200},
        "gd": {"k_max": 200, "gains": {"translation": 0.01, "rotation": 30.0}},
    }
    path = tmp_path / "scene.json"
    path.write_text(json.dumps(cfg))
    return path, scene


class TestEstimate:
    def test_estimate_and_export(self, tmp_path):
        db_path = tmp_path / "cube.ldb1"
        main(["build-db", "--mesh", "cube", "--m", "60", "--seed", "2",
              "--out", str(db_path), "--sensor", SENSOR_JSON])
        scene_path, scene = write_scene_config(tmp_path, db_path)
        out = tmp_path / "result.json"
        cloud = tmp_path / "cloud.ply"
        assert main(["estimate", "--scene", str(scene_path), "--out",
                     str(out), "--export-cloud", str(cloud)]) == 0
        payload = json.loads(out.read_text())
        assert payload["mode"] == "ours"
        assert len(payload["best"]["position"]) == 3
        assert len(payload["top"]) <= 5
        assert cloud.read_bytes().startswith(b"ply")
        # sane estimate: within a few centimeters of the ground truth
        err = np.linalg.norm(np.array(payload["best"]["position"])
                             - scene.gt_pose.translation)
        assert err < 0.05

    def test_mode_override_and_byte_determinism(self, tmp_path):
        db_path = tmp_path / "cube.ldb1"
        main(["build-db", "--mesh", "cube", "--m", "40", "--seed", "2",
              "--out", str(db_path), "--sensor", SENSOR_JSON])
        scene_path, _ = write_scene_config(tmp_path, db_path, n_sensors=2)
        out1, out2 = tmp_path / "r1.json", tmp_path / "r2.json"
        for out in (out1, out2):
            assert main(["estimate", "--scene", str(scene_path),
                         "--mode", "baseline", "--out", str(out)]) == 0
        assert out1.read_bytes() == out2.read_bytes()
        assert json.loads(out1.read_text())["mode"] == "baseline"
        assert json.loads(out1.read_text())["omega_sizes"] == [40, 40]


class TestEvalAndSweep:
    def experiment_config(self, tmp_path):
        cfg = {
            "objects": ["cube"],
            "scenes_per_object": 1,
            "sensor_counts": [2],
            "modes": ["ours"],
            "m_database": 40,
            "seed": 3,
            "sensor_model": {"pixels_u": 30, "pixels_v": 40},
            "selection": {"n_max": 150},
            "gd": {"k_max": 150, "gains": {"translation": 0.01,
                                           "rotation": 30.0}},
        }
        path = tmp_path / "exp.json"
        path.write_text(json.dumps(cfg))
        return path

    def test_eval_report_byte_identical(self, tmp_path):
        exp = self.experiment_config(tmp_path)
        r1, r2 = tmp_path / "r1.json", tmp_path / "r2.json"
        for out in (r1, r2):
            assert main(["eval", "--experiment", str(exp),
                         "--out", str(out)]) == 0
        assert r1.read_bytes() == r2.read_bytes()
        payload = json.loads(r1.read_text())
        assert payload["schema_version"] == 1
        assert payload["warnings"] == 0

    def test_sweep_overrides_sensor_counts(self, tmp_path):
        exp = self.experiment_config(tmp_path)
        out = tmp_path / "sweep.json"
        assert main(["sweep", "--experiment", str(exp), "--sensors", "1,2",
                     "--out", str(out)]) == 0
        payload = json.loads(out.read_text())
        assert set(payload["overall"]["ours"]) == {"1", "2"}
