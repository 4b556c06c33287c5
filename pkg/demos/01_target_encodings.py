# %% [markdown]
# # Target encodings
#
# Each ordinal class k = 1..K gets a target vector. Print the full target
# matrix of every encoding on the five-level severity scale.

# %%
import numpy as np

from ordreg import Encoding, EncodingKind, OrdinalScale, target_matrix, vector_length

np.set_printoptions(precision=3, suppress=True)
scale = OrdinalScale()

# %%
for kind in EncodingKind:
    enc = Encoding(kind)
    tm = target_matrix(enc, scale)
    print(f"{enc.name}  (d = {vector_length(enc, scale.K)})")
    for label, row in zip(scale.labels, tm.rows):
        print(f"  {label:>5}  {row}")
    print()

# %% [markdown]
# The Gaussian rows are raw density values, so they do not sum to one.
# A wider kernel spreads more mass onto neighbouring classes:

# %%
for s2 in (0.25, 1.0, 4.0):
    print(s2, target_matrix(Encoding("gaussian", sigma_squared=s2), scale).row(3))
