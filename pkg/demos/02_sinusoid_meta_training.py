"""Meta-train a small NC on sinusoid tasks, then use it as a regularizer.

A few minutes on one core.  For the full default run use
``nclearn meta-train --out runs/default`` instead.
"""
import sys
from pathlib import Path

import numpy as np

from nclearn.harness import experiments as ex
from nclearn.harness.config import config_from_mapping

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("runs/demo_sinusoid")

cfg = config_from_mapping({
    "name": "demo",
    "seed": 0,
    "budget": {"episodes": 1024, "tasks_per_round": 32, "checkpoint_every": 0},
    "lambda_schedule": {"warmup_episodes": 256},
    "meta_optimizer": {"batch_size": 64, "steps_per_episode": 1.0},
    "eval": {"heldout_tasks": 50},
    "comparison": {"tasks": 100},
})

# Each episode: fresh task, 16 SGD steps of a 40x40 relu MLP, one snapshot per
# step into the bank, then a meta-step on a replayed batch.
res = ex.run_meta_training(cfg, out, log=None)
meta = [r["meta_loss"] for r in res.rows if r["meta_loss"] is not None]
print(f"{res.meta_steps} meta-steps, bank holds {len(res.bank)} snapshots")
print(f"meta-loss: first 100 episodes {np.mean(meta[:100]):.3f}, last 100 {np.mean(meta[-100:]):.3f}")

# How well does NC track the gap on learners it has never seen?
report = ex.gap_fit_report(cfg, res.nc)
for name, fit in report.items():
    print(f"{name:22s} R2 {fit['r2']:.3f}  MAE {fit['mae']:.3f}  ({fit['n']} snapshots)")

# Plug NC into the learner's loss and compare against standard penalties.
table = ex.run_regularizer_comparison(cfg, res.nc, out)
print()
print(table.format())
print(f"\nartifacts written to {out}/")
