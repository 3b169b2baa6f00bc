"""Trainer command line: train an encoder, export latent databases."""

from __future__ import annotations

import argparse
import sys


def _cmd_train(args) -> int:
    from .train import TrainerConfig, train

    config = TrainerConfig(latent_dim=args.latent_dim, epochs=args.epochs,
                           batch_size=args.batch_size,
                           learning_rate=args.learning_rate, seed=args.seed,
                           min_patches=args.min_patches)
    result = train(config, args.patches, args.out)
    print(f"encoder {result.encoder_id} -> {args.out} "
          f"(val MSE {result.final_val_mse:.5f})", file=sys.stderr)
    return 0


def _cmd_export_latents(args) -> int:
    from .train import export_latents

    n = export_latents(args.weights, args.db_patches, args.out)
    print(f"wrote {n}-entry latent database to {args.out}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tactipose-train")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the patch autoencoder")
    p.add_argument("--patches", required=True, help="TPAT directory")
    p.add_argument("--out", required=True, help="output ENCW path")
    p.add_argument("--latent-dim", type=int, default=128)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--min-patches", type=int, default=1000)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("export-latents", help="encode patches into LDB1")
    p.add_argument("--weights", required=True)
    p.add_argument("--db-patches", required=True,
                   help="gen-patches output directory (TPAT + samples.json)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export_latents)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
