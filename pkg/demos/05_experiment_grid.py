# %% [markdown]
# # The full comparison grid
#
# Six encodings, every compatible decoder, five patient-wise folds, three
# kappa weightings. Takes a few seconds at this size.

# %%
from ordreg import ExperimentConfig, SynthConfig, TrainConfig
from ordreg.harness import rank_change_report, render, run_experiment

config = ExperimentConfig(
    synth=SynthConfig(n_patients=100, samples_per_patient=10, feature_noise_sd=0.1, label_noise_prob=0.1, seed=5),
    train=TrainConfig(epochs=30, lr_max=5e-4),
)
table = run_experiment(config)

# %%
print(render(table, "md"))

# %% [markdown]
# How the ordering shifts as near misses earn partial credit:

# %%
print(rank_change_report(table).to_text())
