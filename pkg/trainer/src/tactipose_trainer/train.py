"""Training loop and latent-database export."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import DataLoader, TensorDataset

from .formats import (
    load_encw,
    load_patch_dir,
    load_sample_positions,
    save_encw,
    save_ldb,
)
from .model import PatchAutoencoder


@dataclass
class TrainerConfig:
    latent_dim: int = 128
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 1e-3
    val_fraction: float = 0.1
    seed: int = 7
    min_patches: int = 1000


@dataclass
class TrainResult:
    encoder_id: str
    final_val_mse: float
    history: list


def train(config: TrainerConfig, patch_dir, out_path) -> TrainResult:
    """Train the autoencoder on a TPAT directory and export ENCW weights.

    Minimizes the mean per-pixel squared reconstruction error.  The export
    bundles h_nc (the encoding of the all-zero patch) and a held-out
    reference patch with its latent vector for cross-implementation
    validation.  Aborts on undersized datasets or non-finite losses.
    """
    patches = load_patch_dir(patch_dir)
    if len(patches) < config.min_patches:
        raise ValueError(f"need at least {config.min_patches} patches, "
                         f"found {len(patches)}")
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(patches))
    n_val = max(1, int(len(patches) * config.val_fraction))
    val_idx, train_idx = order[:n_val], order[n_val:]

    x = torch.from_numpy(patches).unsqueeze(1)
    train_set = TensorDataset(x[train_idx])
    val_x = x[val_idx]

    model = PatchAutoencoder(patches.shape[1], patches.shape[2],
                             config.latent_dim)
    optim = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    loader = DataLoader(train_set, batch_size=config.batch_size, shuffle=True,
                        generator=torch.Generator().manual_seed(config.seed))

    history = []
    for epoch in range(config.epochs):
        model.train()
        for (batch,) in loader:
            optim.zero_grad()
            loss = torch.mean((model(batch) - batch) ** 2)
            if not torch.isfinite(loss):
                raise RuntimeError("non-finite training loss; aborting")
            loss.backward()
            optim.step()
        model.eval()
        with torch.no_grad():
            val_mse = float(torch.mean((model(val_x) - val_x) ** 2))
        history.append(val_mse)

    # reference pair: the first validation patch (held out from training)
    reference = val_x[:1]
    tensors = model.export_tensors(reference)
    encoder_id = save_encw(out_path, tensors)
    return TrainResult(encoder_id=encoder_id, final_val_mse=history[-1],
                       history=history)


def encode_with_weights(tensors: dict, patches: np.ndarray) -> np.ndarray:
    """Batch-encode patches with exported weights (torch reconstruction)."""
    height, width = tensors["reference_input"].shape
    latent_dim = tensors["fc.bias"].shape[0]
    model = PatchAutoencoder(height, width, latent_dim)
    state = {}
    conv_layers = [i for i, m in enumerate(model.conv)
                   if isinstance(m, torch.nn.Conv2d)]
    for n, idx in enumerate(conv_layers, start=1):
        state[f"conv.{idx}.weight"] = torch.from_numpy(tensors[f"conv{n}.weight"])
        state[f"conv.{idx}.bias"] = torch.from_numpy(tensors[f"conv{n}.bias"])
    state["fc.weight"] = torch.from_numpy(tensors["fc.weight"])
    state["fc.bias"] = torch.from_numpy(tensors["fc.bias"])
    model.load_state_dict(state, strict=False)
    model.eval()
    with torch.no_grad():
        x = torch.from_numpy(patches.astype(np.float32)).unsqueeze(1)
        return model.encode(x).numpy()


def export_latents(weights_path, db_patch_dir, out_path) -> int:
    """Encode a gen-patches directory into an LDB1 latent database.

    One database record per surface sample; contact scores are the inner
    products with the bundled h_nc.
    """
    tensors, encoder_id = load_encw(weights_path)
    patches = load_patch_dir(db_patch_dir)
    sample_ids, positions, normals = load_sample_positions(db_patch_dir)
    if len(sample_ids) != len(patches):
        raise ValueError("samples.json does not match the patch count")
    if patches.shape[1:] != tensors["reference_input"].shape:
        raise ValueError("patch dimensions do not match the encoder input")
    vectors = encode_with_weights(tensors, patches).astype(np.float32)
    h_nc = tensors["h_nc"].astype(np.float64)
    scores = (vectors.astype(np.float64) @ h_nc).astype(np.float32)
    save_ldb(out_path, sample_ids, positions, normals, vectors, scores,
             encoder_id, tensors["h_nc"])
    return len(sample_ids)
