"""Tactile rendering: what the gel sees on flats, edges, corners, spheres.

Run:  python3 demos/02_tactile_rendering.py
Patches print as ASCII art (rows = gel height, darker = deeper).
"""

import numpy as np

from tactipose.primitives import cube, icosphere
from tactipose.render import Superquadric, render_patch, render_superquadric_patch
from tactipose.sensor import SensorModel, placement_at_contact

SENSOR = SensorModel(pixels_u=30, pixels_v=24)
RAMP = " .:-=+*#%@"


def show(title, patch):
    print(f"\n-- {title} (contact {patch.contact_fraction():.2f}, "
          f"saturated {patch.saturated_fraction():.2f})")
    for row in patch.depth[::2]:
        print("".join(RAMP[min(int(d * (len(RAMP) - 1) + 0.5), 9)]
                      for d in row))


mesh = cube(0.06)
full = SENSOR.max_indent

p = placement_at_contact([0, 0, 0.03], [0, 0, 1], full, SENSOR)
show("flat face, full indent", render_patch(mesh, p, SENSOR))

n = np.array([1.0, 0, 1.0]) / np.sqrt(2)
p = placement_at_contact([0.03, 0, 0.03], n, 0.5 * full, SENSOR)
show("90-degree edge, half indent (thin band)", render_patch(mesh, p, SENSOR))

n = np.ones(3) / np.sqrt(3)
p = placement_at_contact([0.03, 0.03, 0.03], n, full, SENSOR)
show("corner, full indent (compact blob)", render_patch(mesh, p, SENSOR))

sphere = icosphere(0.04, 3)
p = placement_at_contact([0, 0, 0.04], [0, 0, 1], full, SENSOR)
show("sphere r=4cm (round falloff)", render_patch(sphere, p, SENSOR))

sq = Superquadric(a=0.05, b=0.04, c=0.03, eps1=0.2, eps2=0.2)
p = placement_at_contact(sq.surface_point(np.pi / 4, np.pi / 4),
                         sq.surface_normal(np.pi / 4, np.pi / 4),
                         full, SENSOR)
show("superquadric near-box corner region", render_superquadric_patch(sq, p, SENSOR))
