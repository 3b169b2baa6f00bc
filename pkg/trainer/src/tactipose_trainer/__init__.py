"""Autoencoder trainer for tactile contact patches.

Produces ENCW weight bundles and LDB1 latent databases consumed by the
estimator through its published file formats.
"""

__version__ = "0.1.0"

from .formats import load_encw, load_patch_dir, save_encw, save_ldb  # noqa: F401
from .model import PatchAutoencoder  # noqa: F401
from .train import TrainerConfig, TrainResult, encode_with_weights, export_latents, train  # noqa: F401
