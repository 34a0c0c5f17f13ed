"""
Benchmark: who answers best from where?
=======================================

Four ways to pick a viewpoint (or skip having one), one oracle judging
the answers. Ground-truth fields set the ceiling, random spawns the
floor; the top-down reader loses exactly the side-visible attributes.
This runs a reduced-size benchmark; the defaults reproduce the full
one.
"""

import time
from pathlib import Path

from ansfield.harness.config import HarnessConfig
from ansfield.harness.dataset import generate_dataset, load_dataset
from ansfield.harness.evaluate import evaluate

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

cfg = HarnessConfig(seed=5, n_train_scenes=8, n_eval_scenes=10, questions_per_scene=5)

t0 = time.time()
root = out / "bench_ds"
if not (root / "manifest.json").exists():
    generate_dataset(root, cfg)
ds = load_dataset(root)
print(f"dataset ready ({time.time()-t0:.0f}s); "
      f"{len(ds.eval_records)} eval records")

# No model here: the field-based method uses the ground-truth rasters,
# which bounds what a perfectly trained model could do.
t0 = time.time()
report = evaluate(("random", "nearest", "topdown", "gtfield"), ds, seed=0)
print(f"evaluated ({time.time()-t0:.0f}s)\n")
print(report.format_table())
print("\nexpected shape: gtfield clearly on top, topdown mid, random low.")
