"""
Cross-view retrieval with and without pose augmentation
=======================================================

The matcher embeds view-1 images with one VAE and view-2 images with the
other, pulled into a common space by a learnt affine map. Retrieval runs
on 32 identities the models never saw.
"""

import numpy as np
import torch

from pacgan import cpgnet, crossgan, evaluation, synthdata

CPG_EPOCHS = 200
XG_EPOCHS = 8
torch.set_num_threads(1)

ds = synthdata.generate_dataset(seed=0)
held = synthdata.generate_dataset(seed=1000)
split = evaluation.single_shot_split(held, seed=0)

net, _ = cpgnet.train_cpgnet(cpgnet.CoupledCpgNet(seed=0), ds, cpgnet.CpgTrainConfig(epochs=CPG_EPOCHS))
A1, A2 = cpgnet.augment_dataset(net, ds.view1, ds.view2, ds.skeletons)
print("augmented views:", len(A1), len(A2))

# %%
curves, labels = [], []
for name, (v1, v2) in {"original": (ds.view1, ds.view2), "augmented": (A1, A2)}.items():
    matcher, _ = crossgan.train_crossgan(crossgan.CoupledCrossGan(seed=0), v1, v2,
                                         crossgan.CrossGanTrainConfig(epochs=XG_EPOCHS))
    curve = evaluation.embedding_cmc(split, lambda s: crossgan.embed(matcher, s, 1),
                                     lambda s: crossgan.embed(matcher, s, 2))
    print(f"{name}: rank-1 {curve.rates[0]:.3f}, rank-5 {curve.rates[4]:.3f}")
    curves.append(curve)
    labels.append(name)

evaluation.render_curve_plot(curves, labels, "cmc.png")
