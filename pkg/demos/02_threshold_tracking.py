# %% [markdown]
# # Keeping density on target with a self-scaling threshold
#
# A hard threshold is fixed before training. As residuals grow or shrink,
# the number of gradients above it drifts. MiCRO nudges its threshold up
# or down each iteration depending on whether too many or too few
# gradients were selected. Both runs below start from the same threshold.

# %%
import numpy as np

from sparsim import RunConfig, SparsifierConfig, run_experiment
from sparsim.metrics import scaled_errors

runs = {}
for kind in ("micro", "hard_threshold"):
    cfg = RunConfig(task="quadratic", dim=10_000, workers=8, iterations=2000, lr=0.02, seed=0,
                    sparsifier=SparsifierConfig(kind=kind, density=0.01))
    runs[kind] = run_experiment(cfg)

# %%
for kind, res in runs.items():
    dens = np.array([r.actual_density for r in res.records])
    windows = [f"{dens[a:a + 250].mean():.4f}" for a in range(0, 2000, 250)]
    print(f"{kind:>15}: density per 250-iteration window {windows}")

# %% [markdown]
# The threshold should rise when the error rises. The error norm is
# rescaled by sum(threshold) / sum(error) so both fit on one axis.

# %%
micro = runs["micro"].records
deltas = [r.threshold for r in micro]
errors = [r.error_norm for r in micro]
scaled = scaled_errors(deltas, errors)
for t in range(0, 2000, 200):
    print(f"t={t:>4}  threshold={deltas[t]:.4g}  scaled error={scaled[t]:.4g}")

# %%
try:
    import matplotlib.pyplot as plt
except ImportError:
    plt = None
if plt is not None:
    fig, ax = plt.subplots(1, 2, figsize=(10, 3.5))
    for kind, res in runs.items():
        ax[0].plot([r.actual_density for r in res.records], label=kind)
    ax[0].axhline(0.01, color="k", lw=0.8, ls="--")
    ax[0].set_yscale("log")
    ax[0].set_title("actual density")
    ax[0].legend()
    ax[1].plot(deltas, label="threshold")
    ax[1].plot(scaled, label="scaled error")
    ax[1].set_title("MiCRO threshold vs. error")
    ax[1].legend()
    fig.tight_layout()
    fig.savefig("threshold_tracking.png", dpi=120)
    print("wrote threshold_tracking.png")
