"""Trainer tests, including the cross-component file contracts."""

import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import torch

from tactipose_trainer.formats import (
    load_encw,
    load_patch_dir,
    save_encw,
    weights_content_id,
)
from tactipose_trainer.model import PatchAutoencoder, encoder_size_chain
from tactipose_trainer.train import (
    TrainerConfig,
    encode_with_weights,
    export_latents,
    train,
)

# the estimator package: used only to exercise the shared file contracts
from tactipose.encoder import ExternalEncoder
from tactipose.encoder import load_encw as estimator_load_encw
from tactipose.database import load_ldb
from tactipose.cli import main as estimator_cli

SENSOR_JSON = '{"pixels_u": 30, "pixels_v": 40}'
SMALL_CFG = TrainerConfig(epochs=4, min_patches=50, seed=3)


@pytest.fixture(scope="module")
def patch_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("patches") / "train"
    assert estimator_cli(["gen-patches", "--superquadrics", "300",
                          "--out-dir", str(out), "--seed", "11",
                          "--sensor", SENSOR_JSON]) == 0
    return out


@pytest.fixture(scope="module")
def db_patch_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("patches") / "db"
    assert estimator_cli(["gen-patches", "--mesh", "cube", "--out-dir",
                          str(out), "--samples", "40", "--seed", "5",
                          "--sensor", SENSOR_JSON]) == 0
    return out


@pytest.fixture(scope="module")
def trained(patch_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("weights") / "enc.encw"
    result = train(SMALL_CFG, patch_dir, out)
    return out, result


class TestModel:
    def test_size_chain_reconstruction(self):
        for h, w in ((40, 30), (80, 60), (64, 48)):
            model = PatchAutoencoder(h, w, latent_dim=16)
            x = torch.rand(2, 1, h, w)
            y = model(x)
            assert y.shape == x.shape
            assert float(y.min()) >= 0.0 and float(y.max()) <= 1.0

    def test_rejects_tiny_inputs(self):
        with pytest.raises(ValueError):
            PatchAutoencoder(8, 8, 16)

    def test_conv_arithmetic(self):
        assert encoder_size_chain(40, 30)[-1] == (2, 1)
        assert encoder_size_chain(80, 60)[-1] == (5, 3)


class TestTraining:
    def test_reconstruction_improves(self, trained):
        _, result = trained
        assert result.history[-1] < result.history[0]

    def test_h_nc_is_encoding_of_zero_patch(self, trained):
        path, _ = trained
        tensors, _ = load_encw(path)
        zero = np.zeros((1,) + tensors["reference_input"].shape, np.float32)
        direct = encode_with_weights(tensors, zero)[0]
        assert np.array_equal(direct, tensors["h_nc"])

    def test_seeded_determinism(self, patch_dir, tmp_path):
        a = train(SMALL_CFG, patch_dir, tmp_path / "a.encw")
        b = train(SMALL_CFG, patch_dir, tmp_path / "b.encw")
        ta, _ = load_encw(tmp_path / "a.encw")
        tb, _ = load_encw(tmp_path / "b.encw")
        assert np.allclose(ta["reference_output"], tb["reference_output"],
                           atol=1e-4)
        assert a.encoder_id == b.encoder_id

    def test_small_dataset_aborts(self, tmp_path, patch_dir):
        cfg = TrainerConfig(epochs=1, min_patches=10_000)
        with pytest.raises(ValueError, match="patches"):
            train(cfg, patch_dir, tmp_path / "x.encw")


class TestCrossComponentContract:
    def test_estimator_reproduces_reference_vector(self, trained):
        # the estimator's numpy forward pass must match the torch export
        path, _ = trained
        weights = estimator_load_encw(path)
        enc = ExternalEncoder(weights)
        assert enc.self_check(atol=1e-4)

    def test_estimator_agrees_on_fresh_patches(self, trained, db_patch_dir):
        path, _ = trained
        tensors, _ = load_encw(path)
        patches = load_patch_dir(db_patch_dir)[:10]
        ours = encode_with_weights(tensors, patches)
        weights = estimator_load_encw(path)
        from tactipose.encoder import encoder_forward
        worst = 0.0
        for i, patch in enumerate(patches):
            theirs = encoder_forward(weights, patch.astype(np.float64))
            worst = max(worst, float(np.max(np.abs(theirs - ours[i]))))
        assert worst < 1e-4

    def test_exported_ldb_loads_in_estimator(self, trained, db_patch_dir,
                                             tmp_path):
        path, _ = trained
        out = tmp_path / "cube.ldb1"
        n = export_latents(path, db_patch_dir, out)
        assert n == 40
        db = load_ldb(out)
        assert len(db) == 40
        assert db.encoder_id == load_encw(path)[1]
        # zero-patch entries score the h_nc self-product
        tensors, _ = load_encw(path)
        h_nc = tensors["h_nc"].astype(np.float64)
        zero_vec = encode_with_weights(tensors, np.zeros(
            (1,) + tensors["reference_input"].shape, np.float32))[0]
        assert np.isclose(zero_vec.astype(np.float64) @ h_nc, h_nc @ h_nc,
                          rtol=1e-5)

    def test_estimator_consumes_external_database(self, trained, db_patch_dir,
                                                  tmp_path):
        # end to end: select compatible samples using the trained encoder
        from tactipose.database import select_compatible
        from tactipose.encoder import auto_delta_h, encode_external
        from tactipose.sensor import SensorModel, load_tpat

        path, _ = trained
        out = tmp_path / "cube.ldb1"
        export_latents(path, db_patch_dir, out)
        db = load_ldb(out)
        weights = estimator_load_encw(path)
        sensor = SensorModel(pixels_u=30, pixels_v=40)
        patch_file = sorted(Path(db_patch_dir).glob("*.tpat"))[7]
        query = encode_external(load_tpat(patch_file, sensor), weights)
        omega = select_compatible(db, query, auto_delta_h(db, query, 0.10))
        assert 7 in omega  # the query's own sample is recovered


class TestFormats:
    def test_content_id_stable_under_insertion_order(self):
        a = {"x": np.ones(3, np.float32), "y": np.zeros(2, np.float32)}
        b = dict(reversed(list(a.items())))
        assert weights_content_id(a) == weights_content_id(b)

    def test_encw_roundtrip(self, tmp_path):
        tensors = {"conv1.weight": np.random.rand(8, 1, 4, 4).astype(np.float32),
                   "reference_input": np.random.rand(40, 30).astype(np.float32)}
        path = tmp_path / "t.encw"
        encoder_id = save_encw(path, tensors)
        back, back_id = load_encw(path)
        assert back_id == encoder_id
        for k in tensors:
            assert np.array_equal(back[k], tensors[k])


class TestCli:
    def test_train_and_export_cli(self, patch_dir, db_patch_dir, tmp_path):
        enc = tmp_path / "enc.encw"
        proc = subprocess.run(
            [sys.executable, "-m", "tactipose_trainer.cli", "train",
             "--patches", str(patch_dir), "--out", str(enc),
             "--epochs", "2", "--seed", "1", "--min-patches", "100"],
            capture_output=True, timeout=600)
        assert proc.returncode == 0, proc.stderr.decode()[-1500:]
        assert enc.exists()
        out = tmp_path / "db.ldb1"
        proc = subprocess.run(
            [sys.executable, "-m", "tactipose_trainer.cli", "export-latents",
             "--weights", str(enc), "--db-patches", str(db_patch_dir),
             "--out", str(out)],
            capture_output=True, timeout=600)
        assert proc.returncode == 0, proc.stderr.decode()[-1500:]
        assert load_ldb(out).encoder_id == load_encw(enc)[1]
