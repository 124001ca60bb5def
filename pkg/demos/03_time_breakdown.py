# %% [markdown]
# # Modeled per-iteration time breakdown
#
# Times come from the cost model, not a wall clock: gradient computation
# scales with parameters x batch, selection with the elements each worker
# scans (sorting-based methods pay an extra log k), and communication with
# AllGather + AllReduce bytes over bandwidth plus latency.

# %%
from sparsim import CostModelParams, RunConfig, SparsifierConfig, run_dense, run_experiment

# a slow 1 Gb/s link and a slow sorter make the trade-offs easy to see
cost = CostModelParams(bandwidth=1.25e8, seconds_per_scan_element=2e-9)
phases = ("grad", "selection", "communication", "overhead")
print(f"{'sparsifier':>15} " + " ".join(f"{p:>13}" for p in phases) + f" {'total (ms)':>11}")
for kind in ("micro", "topk", "cltk", "hard_threshold", None):
    cfg = RunConfig(task="mlp2", dim=50_000, workers=16, iterations=200, lr=0.1, seed=0, cost=cost,
                    sparsifier=None if kind is None else SparsifierConfig(kind=kind, density=0.01))
    res = run_dense(cfg) if kind is None else run_experiment(cfg)
    per_iter = {p: 1e3 * v / cfg.iterations for p, v in res.summary["modeled_time"].items()}
    print(f"{kind or 'dense':>15} " + " ".join(f"{per_iter[p]:>13.4f}" for p in phases)
          + f" {sum(per_iter.values()):>11.4f}")
