# %% [markdown]
# # Loss against modeled runtime
#
# All sparsifiers reach a similar loss here. What differs is how much
# modeled time each iteration costs.

# %%
import numpy as np

from sparsim import CostModelParams, RunConfig, SparsifierConfig, run_dense, run_experiment

cost = CostModelParams(bandwidth=1.25e8)
curves = {}
for kind in ("micro", "topk", "cltk", "hard_threshold", None):
    cfg = RunConfig(task="logreg", dim=5000, workers=8, iterations=1000, lr=0.5, seed=3, cost=cost,
                    sparsifier=None if kind is None else SparsifierConfig(kind=kind, density=0.01))
    res = run_dense(cfg) if kind is None else run_experiment(cfg)
    step = np.array([r.time_grad + r.time_selection + r.time_communication + r.time_overhead
                     for r in res.records])
    curves[kind or "dense"] = (np.cumsum(step), np.array([r.loss for r in res.records]), res.final_loss)

# %%
for name, (clock, loss, final) in curves.items():
    smooth = np.convolve(loss, np.ones(50) / 50, mode="valid")
    print(f"{name:>15}: final loss {final:.4f}, modeled time {clock[-1] * 1e3:8.2f} ms, "
          f"smoothed batch loss at end {smooth[-1]:.4f}")
