# %% [markdown]
# # Gradient build-up: Top-k vs. exclusive partitions
#
# Each Top-k worker picks its own k largest accumulated gradients from the
# whole vector. The union of those picks grows with the number of workers,
# so the aggregated density climbs toward n*d. MiCRO workers search disjoint
# partitions, so the union is exactly the sum of their selections.

# %%
import numpy as np

from sparsim import RunConfig, SparsifierConfig, run_experiment

DENSITY = 0.01

# %%
print(f"{'n':>3} {'top-k density':>14} {'top-k redundancy':>17} {'micro density':>14} {'micro redundancy':>17}")
for n in (2, 4, 8, 16):
    row = []
    for kind in ("topk", "micro"):
        cfg = RunConfig(task="mlp2", dim=20_000, workers=n, iterations=200, lr=0.1, seed=0,
                        sparsifier=SparsifierConfig(kind=kind, density=DENSITY))
        res = run_experiment(cfg)
        row += [res.summary["mean_actual_density"], res.summary["mean_redundant_traffic_factor"]]
    print(f"{n:>3} {row[0]:>14.4f} {row[1]:>17.2f} {row[2]:>14.4f} {row[3]:>17.2f}")

# %% [markdown]
# Top-k's aggregated density sits well above the 1% target and grows with
# n. MiCRO's redundant-traffic factor is exactly 1 at every scale.
