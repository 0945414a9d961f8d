"""
The synthetic cross-view corpus
===============================

Every identity is a colour/proportion recipe; every pose a random skeleton.
Each (identity, pose) is rendered twice, once per camera view, and the
two renderings form a labelled cross-view pair.
"""

import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from pacgan import synthdata

ds = synthdata.generate_dataset(n_identities=6, n_poses_per_identity=4, n_skeletons=8, seed=0)
print(len(ds.view1), "view-1 images,", len(ds.view2), "view-2 images,", len(ds.skeletons), "skeletons")

# %%
# One row per identity: the four poses in view 1, then the same poses in view 2.
rows = []
for pid in sorted({s.person_id for s in ds.view1}):
    v1 = [s.pixels for s in ds.view1 if s.person_id == pid]
    v2 = [s.pixels for s in ds.view2 if s.person_id == pid]
    rows.append(np.concatenate(v1 + v2, axis=1))
grid = np.concatenate(rows, axis=0)

plt.figure(figsize=(8, 6))
plt.imshow(grid, interpolation="nearest")
plt.axis("off")
plt.title("view 1 (left four) | view 2 (right four)")
plt.savefig("corpus.png", dpi=100, bbox_inches="tight")

# %%
# The skeleton set is drawn independently of the identities.
plt.figure(figsize=(8, 2))
plt.imshow(np.concatenate([s.rendered for s in ds.skeletons], axis=1), interpolation="nearest")
plt.axis("off")
plt.savefig("skeletons.png", dpi=100, bbox_inches="tight")
