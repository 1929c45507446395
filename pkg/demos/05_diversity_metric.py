"""How the mode-diversity score reacts to candidate spread.

Candidates are swept-footprint rasters; the score is one minus the mean
IoU between each raster and the union of all rasters.  Identical
candidates score 0; a fan of distinct maneuvers approaches the area ratio
each candidate fails to cover.
"""

import numpy as np

from diffplan import evalsuite
from diffplan.trajspace import Trajectory


def fan_trajectory(speed, bend):
    """Simple constant-speed arc: per-step heading grows by `bend`."""
    headings = np.cumsum(np.full(8, bend))
    steps = speed * 0.5 * np.stack([np.cos(headings), np.sin(headings)], axis=1)
    return Trajectory(np.cumsum(steps, axis=0))


print(f"{'candidate set':38s} {'D':>6s}")
clones = [fan_trajectory(8.0, 0.0)] * 10
print(f"{'10 identical straight candidates':38s} {evalsuite.diversity(clones):6.3f}")

for spread in (0.01, 0.03, 0.06):
    fan = [fan_trajectory(8.0, bend) for bend in np.linspace(-spread, spread, 10)]
    print(f"{f'10-arc fan, bend up to {spread:0.2f} rad':38s} {evalsuite.diversity(fan):6.3f}")

speeds = [fan_trajectory(v, 0.0) for v in np.linspace(4.0, 12.0, 10)]
print(f"{'10 straight candidates, speeds 4..12':38s} {evalsuite.diversity(speeds):6.3f}")

# the hand-checkable two-set case: rasters {A,B} and {B,C} give D = 1/3
d = evalsuite.diversity_from_cells([{(0, 0), (0, 1)}, {(0, 1), (0, 2)}])
print(f"\ntwo overlapping 2-cell rasters: D = {d:.4f} (exactly 1/3)")
