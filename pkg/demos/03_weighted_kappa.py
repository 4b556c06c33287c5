# %% [markdown]
# # Weighted Cohen's kappa
#
# Two predictors with the same exact-hit rate: one misses by a single class,
# the other misses far. Only the weighted kappas tell them apart.

# %%
import numpy as np

from ordreg import ConfusionMatrix, Weighting, kappa

rng = np.random.default_rng(0)
truth = rng.integers(1, 6, size=2000)
hit = rng.uniform(size=truth.size) < 0.6

near = np.where(hit, truth, np.clip(truth + rng.choice([-1, 1], size=truth.size), 1, 5))
far = np.where(hit, truth, np.where(truth <= 3, 5, 1))

# %%
for name, pred in (("near misses", near), ("far misses", far)):
    cm = ConfusionMatrix.from_labels(truth, pred, 5)
    scores = {w.value: round(kappa(cm, w).value, 3) for w in Weighting}
    print(f"{name:>12}: {scores}")
