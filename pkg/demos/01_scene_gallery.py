"""Generate one episode of each scene kind and render it to SVG.

Walks the synthetic scene generator: a drivable corridor with obstacles,
an ego status, and a comfort-limited expert trajectory that the metric
suite scores perfectly by construction.  Output lands in demos/out/.
"""

import os

import numpy as np

from diffplan import evalsuite, scenesim
from diffplan.cli import render_svg

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

for kind in scenesim.KINDS:
    rec = None
    for attempt in range(16):
        scene = scenesim.generate_scene(100 + attempt, kind)
        ego = scenesim._sample_ego(scene, np.random.default_rng(attempt))
        try:
            expert = scenesim.expert_trajectory(scene, ego)
        except scenesim.InfeasibleScene:
            continue
        rec = scenesim.EpisodeRecord(scene, ego, scenesim._history_for(ego), expert)
        break
    assert rec is not None

    progress = evalsuite.progress_along(rec.expert, rec.scene)
    scores = evalsuite.sub_scores(rec.expert, rec.scene, rec.ego, expert_progress=progress)
    path = os.path.join(OUT, f"scene_{kind}.svg")
    with open(path, "w") as fh:
        fh.write(render_svg(rec.scene, [], expert=rec.expert))

    print(f"{kind:13s} ego v={rec.ego.velocity:5.2f} m/s  "
          f"obstacles={len(rec.scene.obstacles)}  expert progress={progress:5.1f} m  "
          f"score={evalsuite.pdm_score(scores):.2f}  -> {path}")
