# %% [markdown]
# # Training one model
#
# The model is a ReLU MLP trained with MSE, AdamW and a cosine learning-rate
# schedule. Its output concatenates one target vector per finding.

# %%
import numpy as np

from ordreg import (ClassifierKind, ConfusionMatrix, Encoding, MlpConfig, OrdinalScale, SynthConfig, TrainConfig,
                    Weighting, forward, generate, kappa, split, train)
from ordreg.harness import predict_classes

scale = OrdinalScale()
ds = generate(SynthConfig(n_patients=150, samples_per_patient=8, feature_noise_sd=0.05, seed=3))
plan = split(ds, seed=0)
train_ds, test_ds = ds.subset(plan.train_patients(0)), ds.subset(plan.test_patient_ids)
print(len(train_ds), "training samples,", len(test_ds), "test samples")

# %%
enc = Encoding("soft_progress_bar")
cfg = MlpConfig.for_encoding(ds.feature_dim, (64, 64), enc, scale.K, ds.n_findings)
result = train(cfg, TrainConfig(epochs=30, lr_max=5e-4), train_ds, enc, scale)
print("loss by epoch:", np.round(result.loss_history[::5], 4))

# %%
preds = predict_classes(forward(result.params, test_ds.features), enc, scale, ClassifierKind.L1_NEAREST)
for j, finding in enumerate(ds.findings):
    cm = ConfusionMatrix.from_labels(test_ds.labels[:, j], preds[:, j], scale.K)
    print(f"{finding:>18}  quadratic kappa {kappa(cm, Weighting.QUADRATIC).value:.3f}")
