"""Candidate selection: latent database, compatibility sets, distance pruning.

Run:  python3 demos/03_candidate_selection.py
"""

from collections import Counter

import numpy as np

from tactipose.contacts import classify_surface_point
from tactipose.database import build_database, select_compatible
from tactipose.encoder import AnalyticEncoder, auto_delta_h
from tactipose.primitives import cube
from tactipose.scenes import make_scene
from tactipose.selection import filter_by_distance, make_tuples
from tactipose.sensor import SensorModel

SENSOR = SensorModel(pixels_u=30, pixels_v=40)
mesh = cube()
encoder = AnalyticEncoder()

print("building a 200-entry latent database on the cube...")
db = build_database(mesh, 200, SENSOR, seed=1)
classes = [classify_surface_point(mesh, p) for p in db.positions]
print("database regions:", dict(Counter(classes)))

scene = make_scene(mesh, 3, ["flat", "edge", "corner"], seed=2, sensor=SENSOR)
print("\nscene contacts:", scene.labels)

omegas = []
for i, obs in enumerate(scene.observations):
    feat = encoder.encode(obs.patch)
    delta_h = auto_delta_h(db, feat, 0.10)
    omega = select_compatible(db, feat, delta_h)
    omegas.append(omega)
    rows = [int(np.flatnonzero(db.sample_ids == s)[0]) for s in omega]
    print(f"sensor {i} ({scene.labels[i]:6s}): score "
          f"{feat.contact_score:.3f}, delta_h {delta_h:.3f}, "
          f"|Omega| {len(omega):3d}, regions "
          f"{dict(Counter(classes[r] for r in rows))}")

stream = make_tuples(omegas, db)
print(f"\ncartesian product: {len(stream):,} candidate tuples (lazy)")
survivors = filter_by_distance(stream, scene.observations, n_max=500)
print(f"after distance pruning: {len(survivors)} tuples, "
      f"best cost {survivors[0].pairwise_cost * 1000:.2f} mm")

baseline = filter_by_distance(make_tuples([db.sample_ids] * 3, db),
                              scene.observations, n_max=500)
print(f"baseline mode scans {len(db) ** 3:,} tuples, keeps {len(baseline)}")
