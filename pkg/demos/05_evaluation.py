"""Small evaluation run: ours vs the geometric baseline over two objects.

Run:  python3 demos/05_evaluation.py        (about a minute)
The full-suite equivalent via the CLI:
    tactipose eval --experiment exp.json --out report.json
"""

from tactipose.experiment import ExperimentConfig, run_experiment
from tactipose.optimizer import GdConfig

config = ExperimentConfig(
    objects=("cube", "cylinder"),
    scenes_per_object=4,
    m_database=200,
    sensor_counts=(3,),
    modes=("ours", "baseline"),
    seed=21,
    gd=GdConfig(rotation_gain=20.0),
)

report = run_experiment(config)
print(f"ran {len(report.scenes)} scene estimates, "
      f"{report.warnings} failures, {report.wall_clock_seconds:.0f}s\n")

header = f"{'':12s} {'pos err cm':>12s} {'ADI-AUC %':>10s} {'contact %':>10s}"
print(header)
for mode in ("ours", "baseline"):
    agg = report.overall[mode]["3"]
    print(f"{mode:12s} {agg['mean_pos_err_cm']:12.2f} "
          f"{agg['mean_adi_auc']:10.1f} {agg['contact_accuracy_pct']:10.1f}")

print("\nper-object mean positional error (cm):")
for obj, modes in report.per_object.items():
    row = "  ".join(f"{m}: {modes[m]['3'].get('mean_pos_err_cm', float('nan')):.2f}"
                    for m in modes)
    print(f"  {obj:10s} {row}")
