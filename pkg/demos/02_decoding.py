# %% [markdown]
# # Decoding model outputs
#
# A trained network emits arbitrary vectors. A classification function maps
# them back to a class. Not every decoder makes sense for every encoding.

# %%
import numpy as np

from ordreg import ClassifierKind, Encoding, EncodingKind, OrdinalScale, classify, is_compatible, target_matrix

scale = OrdinalScale()

# %%
print(f"{'':>18}" + "".join(f"{c.display_name:>8}" for c in ClassifierKind))
for kind in EncodingKind:
    marks = "".join(f"{'yes' if is_compatible(Encoding(kind), c) else '-':>8}" for c in ClassifierKind)
    print(f"{Encoding(kind).name:>18}{marks}")

# %% [markdown]
# A noisy soft-progress-bar output between classes 2 and 3:

# %%
tm = target_matrix(Encoding("soft_progress_bar"), scale)
y = np.array([0.9, 0.8, 0.4, 0.1, 0.05])
print("L1 distances:", np.abs(tm.rows - y).sum(axis=1))
print("L1 ->", scale.labels[classify(ClassifierKind.L1_NEAREST, y, tm) - 1])
print("DP ->", scale.labels[classify(ClassifierKind.DOT_NEAREST, y, tm) - 1])

# %% [markdown]
# One-hot decoders only agree while outputs stay inside [0, 1]. With two
# entries above one, L1 ties and falls back to the smaller class:

# %%
oh = target_matrix(Encoding("one_hot"), scale)
y = np.array([1.2, 1.5, 0.0, 0.0, 0.0])
print({c.display_name: classify(c, y, oh) for c in ClassifierKind})
