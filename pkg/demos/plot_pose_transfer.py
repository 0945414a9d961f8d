"""
Pose transfer with the coupled pose generator
=============================================

Train CPG-Net on the default corpus, then drive a few appearance images
with new skeletons. A pose estimator trained on the real images checks
whether the generated person follows the skeleton or the source image.

The full 200-epoch schedule takes about seven minutes on one core;
lower EPOCHS for a quick look.
"""

import numpy as np
import torch
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from pacgan import cpgnet, evaluation, skeleton, synthdata

EPOCHS = 200
torch.set_num_threads(1)

ds = synthdata.generate_dataset(seed=0)
net = cpgnet.CoupledCpgNet(sharing=(4, 4, 2), seed=0)
net, log = cpgnet.train_cpgnet(net, ds, cpgnet.CpgTrainConfig(epochs=EPOCHS))
l1 = [r["l1_v1"] + r["l1_v2"] for r in log.rows]
print(f"L1 fell from {l1[0]:.1f} to {l1[-1]:.1f}")

# %%
# Columns: appearance image, driving skeleton, view-1 output, view-2 image, view-2 output.
rows = []
for i in range(6):
    omega = ds.skeletons[i]
    a1, a2 = ds.view1[8 * i + 1], ds.view2[8 * i + 1]
    o1 = cpgnet.generate(net.G1, omega, a1, z=i)
    o2 = cpgnet.generate(net.G2, omega, a2, z=i)
    rows.append(np.concatenate([a1.pixels, omega.rendered, o1.pixels, a2.pixels, o2.pixels], axis=1))
plt.figure(figsize=(5, 8))
plt.imshow(np.concatenate(rows, axis=0), interpolation="nearest")
plt.axis("off")
plt.savefig("transfer.png", dpi=100, bbox_inches="tight")

# %%
# Re-extract keypoints from 100 generated samples.
with torch.random.fork_rng():
    torch.manual_seed(0)
    est = skeleton.PafEstimator(ds.image_size)
est, _ = skeleton.train_paf(est, ds.view1 + ds.view2, skeleton.PafTrainConfig(epochs=30, batch_size=32))
probe = evaluation.pose_transfer_probe(net, est, ds, n_transfers=100)
print(f"{probe.wins}/100 outputs sit closer to the driving skeleton than to the source pose")
