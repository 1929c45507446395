"""End-to-end miniature: generate data, train briefly, sample, score, render.

Uses a reduced dataset and schedule so the whole walk takes a few minutes;
artifacts (dataset, checkpoint, metrics, SVG) land in demos/out/.  At this
budget the planner already clears the constant-velocity reference; for a
faithful run at the default budget use the command line instead:

    diffplan gen-data --dataset data --n-episodes 2000
    diffplan train    --dataset data --out runs/base
    diffplan eval     --dataset data --out runs/base --checkpoint runs/base/checkpoint_best.bin
    diffplan render   --dataset data --checkpoint runs/base/checkpoint_best.bin --out-file plan.svg
"""

import csv
import os

from diffplan import cli

OUT = os.path.join(os.path.dirname(__file__), "out", "mini")
cfg = cli.RunConfig(
    seed=1,
    dataset=os.path.join(OUT, "data"),
    out=OUT,
    n_episodes=800,
    epochs=24,
    batch=32,
    n_candidates=30,
)

print("generating episodes ...")
cli.cmd_gen_data(cfg)

print("training ...")
train_out = cli.cmd_train(cfg)
rows = list(csv.DictReader(open(train_out["log"])))
print(f"  val loss: {rows[0]['val_l_diff']} (epoch 1) -> {rows[-1]['val_l_diff']} (epoch {len(rows)})")

print("evaluating against the constant-velocity reference ...")
model = cli.cmd_eval(cfg, train_out["best"])["summary"]
baseline = cli.cmd_eval(cfg, None, baseline=True)["summary"]
print(f"  model    PDMS={model['PDMS']}  D={model['D']}")
print(f"  baseline PDMS={baseline['PDMS']}  D={baseline['D']}")

svg = cli.cmd_render(cfg, 0, train_out["best"], os.path.join(OUT, "candidates.svg"))
print(f"candidate fan rendered to {svg}")
