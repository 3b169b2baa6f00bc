"""Command-line interface.

Subcommands:
    gen-patches   render tactile patches (mesh samples or superquadrics)
    build-db      build a per-object latent database (LDB1)
    estimate      estimate a pose from a scene config
    eval          run a full evaluation experiment
    sweep         eval across several sensor counts

All outputs are deterministic for fixed seeds: rerunning a command with
the same arguments produces byte-identical files.  Timing goes to stderr,
never into output files.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .database import build_database, load_ldb, save_ldb
from .encoder import load_encw
from .experiment import (
    ExperimentConfig,
    RankingSettings,
    SelectionSettings,
    estimate_pose,
    gd_config_from_dict,
    load_object,
    run_experiment,
)
from .mesh import sample_surface, save_ply_points
from .metrics import model_points
from .render import generate_training_set, render_patch
from .selection import SensorObservation
from .se3 import Pose
from .sensor import SensorModel, load_tpat, place_sensor_at_sample, save_tpat


def _sensor_from_dict(raw: dict | None) -> SensorModel:
    return SensorModel(**raw) if raw else SensorModel()


def _cmd_gen_patches(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sensor = _sensor_from_dict(json.loads(args.sensor) if args.sensor else None)
    if args.superquadrics:
        patches = generate_training_set(args.superquadrics, args.seed, sensor,
                                        no_contact_fraction=args.no_contact_fraction)
        for i, patch in enumerate(patches):
            save_tpat(out_dir / f"patch_{i:06d}.tpat", patch)
        print(f"wrote {len(patches)} superquadric patches to {out_dir}",
              file=sys.stderr)
        return 0
    if not args.mesh:
        print("either --mesh or --superquadrics is required", file=sys.stderr)
        return 2
    mesh = load_object(args.mesh, args.scale)
    samples = sample_surface(mesh, args.samples, args.seed)
    indent = args.indent_fraction * sensor.max_indent
    records = []
    for s in samples:
        placement = place_sensor_at_sample(s, indent, sensor)
        patch = render_patch(mesh, placement, sensor)
        save_tpat(out_dir / f"patch_{s.sample_id:06d}.tpat", patch)
        records.append({"sample_id": s.sample_id,
                        "position": list(s.position),
                        "normal": list(s.normal),
                        "face_id": s.face_id})
    (out_dir / "samples.json").write_text(
        json.dumps({"schema_version": 1, "mesh": args.mesh,
                    "indent_fraction": args.indent_fraction,
                    "seed": args.seed, "samples": records},
                   indent=2, sort_keys=True))
    print(f"wrote {len(samples)} mesh patches to {out_dir}", file=sys.stderr)
    return 0


def _cmd_build_db(args) -> int:
    mesh = load_object(args.mesh, args.scale)
    sensor = _sensor_from_dict(json.loads(args.sensor) if args.sensor else None)
    encoder = None
    if args.weights:
        from .encoder import ExternalEncoder
        encoder = ExternalEncoder(load_encw(args.weights))
    db = build_database(mesh, args.m, sensor, encoder=encoder, seed=args.seed)
    save_ldb(args.out, db)
    print(f"wrote {len(db)}-entry database to {args.out}", file=sys.stderr)
    return 0


def _pose_record(ranked) -> dict:
    q = ranked.pose.to_quaternion()
    return {
        "position": [float(x) for x in ranked.pose.translation],
        "quaternion_wxyz": [float(x) for x in q],
        "loss": ranked.final_loss,
        "penetration": ranked.max_penetration,
        "score": ranked.score,
        "sample_refs": [int(r) for r in ranked.tuple_ref.sample_refs],
    }


def _cmd_estimate(args) -> int:
    scene_cfg = json.loads(Path(args.scene).read_text())
    mode = args.mode or scene_cfg.get("mode", "ours")
    db_path = args.db or scene_cfg["database"]
    db = load_ldb(db_path)
    mesh = load_object(scene_cfg["mesh"], scene_cfg.get("mesh_scale", 1.0))
    sensor = _sensor_from_dict(scene_cfg.get("sensor_model"))
    scene_dir = Path(args.scene).parent

    observations = []
    for rec in scene_cfg["sensors"]:
        pose = Pose.from_quaternion(rec["quaternion_wxyz"], rec["position"])
        patch_path = Path(rec["patch"])
        if not patch_path.is_absolute():
            patch_path = scene_dir / patch_path
        observations.append(SensorObservation(
            pose=pose, patch=load_tpat(patch_path, sensor)))

    selection = SelectionSettings(**scene_cfg.get("selection", {}))
    gd = gd_config_from_dict(scene_cfg.get("gd", {}))
    rank_raw = dict(scene_cfg.get("ranking", {}))
    if "grid" in rank_raw:
        rank_raw["grid"] = tuple(rank_raw["grid"])
    ranking = RankingSettings(**rank_raw)
    weights = load_encw(args.weights) if args.weights else None

    t0 = time.perf_counter()
    result = estimate_pose(mesh, db, observations, mode=mode,
                           selection=selection, gd=gd, ranking=ranking,
                           sensor=sensor, seed=scene_cfg.get("seed", 0),
                           weights=weights)
    elapsed = time.perf_counter() - t0

    payload = {
        "schema_version": 1,
        "mode": mode,
        "omega_sizes": result.omega_sizes,
        "n_tuples": result.n_tuples,
        "poses_evaluated": len(result.ranked),
        "best": _pose_record(result.best),
        "top": [_pose_record(r) for r in result.top(5)],
    }
    Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True))
    if args.export_cloud:
        points = model_points(mesh)
        save_ply_points(args.export_cloud, result.best.pose.apply(points))
    print(f"estimated pose in {elapsed:.2f}s "
          f"({result.n_tuples} tuples, mode={mode})", file=sys.stderr)
    return 0


def _cmd_eval(args, sensor_counts=None) -> int:
    raw = json.loads(Path(args.experiment).read_text())
    config = ExperimentConfig.from_dict(raw)
    if sensor_counts is not None:
        config = ExperimentConfig.from_dict(
            {**raw, "sensor_counts": sensor_counts})

    def progress(record):
        status = record["status"]
        extra = ("" if status == "ok"
                 else f" ({record.get('error', '')})")
        print(f"[{record['object']} L={record['L']} "
              f"{record['mode']} #{record['scene_index']}] {status}{extra}",
              file=sys.stderr)

    report = run_experiment(config, progress=progress if args.verbose else None)
    Path(args.out).write_text(report.to_json())
    print(f"evaluated {len(report.scenes)} scene runs "
          f"({report.warnings} failures) in "
          f"{report.wall_clock_seconds:.1f}s", file=sys.stderr)
    _print_summary(report)
    return 0


def _print_summary(report) -> None:
    for mode, by_l in sorted(report.overall.items()):
        for l_key, agg in sorted(by_l.items()):
            if agg.get("n_ok", 0) == 0:
                continue
            print(f"  {mode} L={l_key}: "
                  f"pos {agg['mean_pos_err_cm']:.2f} cm (median "
                  f"{agg['median_pos_err_cm']:.2f}), "
                  f"ADI-AUC {agg['mean_adi_auc']:.1f}%, "
                  f"contact {agg['contact_accuracy_pct']:.1f}%",
                  file=sys.stderr)


def _cmd_sweep(args) -> int:
    counts = [int(x) for x in args.sensors.split(",")]
    return _cmd_eval(args, sensor_counts=counts)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tactipose",
        description="6D object pose estimation from planar tactile sensors")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-patches", help="render tactile patches")
    p.add_argument("--mesh", help="mesh path or primitive name")
    p.add_argument("--superquadrics", type=int, metavar="N",
                   help="generate N superquadric training patches instead")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--indent-fraction", type=float, default=1.0)
    p.add_argument("--no-contact-fraction", type=float, default=0.05)
    p.add_argument("--sensor", help="JSON sensor-model overrides")
    p.set_defaults(func=_cmd_gen_patches)

    p = sub.add_parser("build-db", help="build a latent database")
    p.add_argument("--mesh", required=True)
    p.add_argument("--m", type=int, default=2000)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--sensor", help="JSON sensor-model overrides")
    p.add_argument("--weights", help="ENCW weights for the CNN encoder")
    p.set_defaults(func=_cmd_build_db)

    p = sub.add_parser("estimate", help="estimate a pose from a scene config")
    p.add_argument("--scene", required=True)
    p.add_argument("--db", help="override the database path in the config")
    p.add_argument("--mode", choices=["ours", "baseline"])
    p.add_argument("--out", required=True)
    p.add_argument("--weights", help="ENCW weights for the CNN encoder")
    p.add_argument("--export-cloud", help="write the posed model points (PLY)")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("eval", help="run an evaluation experiment")
    p.add_argument("--experiment", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep", help="evaluate across sensor counts")
    p.add_argument("--experiment", required=True)
    p.add_argument("--sensors", required=True, help="e.g. 1,2,3")
    p.add_argument("--out", required=True)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
