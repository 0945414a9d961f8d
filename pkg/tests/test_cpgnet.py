import math

import numpy as np
import pytest
import torch

from oracles import gradient_relative_error
from pacgan import cpgnet, synthdata
from pacgan.synthdata import Origin

TINY = cpgnet.CpgArchConfig(image_size=(4, 2), enc_channels=(1, 1), dec_channels=(1,), disc_channels=(1,),
                            kernel=3, dropout=0.5, skip="both")


def tiny_net(sharing=(1, 1, 1), seed=0):
    return cpgnet.CoupledCpgNet(TINY, sharing, seed=seed).double()


def tiny_batch(seed, b=3):
    g = torch.Generator().manual_seed(seed)
    return tuple(torch.rand((b, 3, 4, 2), generator=g, dtype=torch.float64) for _ in range(3))


def n_unique_params(*modules):
    from pacgan._nn import unique_parameters

    return sum(p.numel() for p in unique_parameters(*modules))


def test_default_shapes_and_layer_counts():
    net = cpgnet.CoupledCpgNet()
    assert net.arch.m == net.arch.n
    img = synthdata.render_pedestrian(synthdata.make_identity(0), synthdata.make_pose(0), 1)
    ds = synthdata.generate_dataset(1, 1, 1)
    out = cpgnet.generate(net.G1, ds.skeletons[0], img, z=0)
    assert out.pixels.shape == img.pixels.shape
    assert out.origin is Origin.SYNTHESIZED and out.pose_id == ds.skeletons[0].skeleton_id


@pytest.mark.parametrize("size,chans", [((16, 8), (8, 8, 8, 8)), ((8, 8), (4, 4, 4))])
def test_generate_preserves_shape(size, chans):
    arch = cpgnet.CpgArchConfig(image_size=size, enc_channels=chans, dec_channels=chans[:-1])
    net = cpgnet.CoupledCpgNet(arch, (1, 1, 1))
    x = torch.rand(2, 3, *size)
    assert cpgnet.generate(net.G2, x, x, z=1).shape == x.shape


def test_bottleneck_must_be_one_by_one():
    with pytest.raises(ValueError):
        cpgnet.PoseGenerator(cpgnet.CpgArchConfig(enc_channels=(8, 8, 8)))


def test_discriminator_channel_contract():
    D = cpgnet.PoseDiscriminator()
    with pytest.raises(ValueError):
        D(torch.rand(1, 6, 32, 16))
    p = cpgnet.discriminate(D, torch.rand(1, 3, 32, 16), torch.rand(1, 3, 32, 16), torch.rand(1, 3, 32, 16))
    assert 0.0 < p < 1.0


def test_no_sharing_branches_independent():
    net = cpgnet.CoupledCpgNet(sharing=(0, 0, 0))
    assert net.tied_layers() == []
    before = [p.detach().clone() for p in net.G2.parameters()]
    with torch.no_grad():
        for p in net.G1.parameters():
            p.add_(1.0)
    assert all(torch.equal(a, b) for a, b in zip(before, net.G2.parameters()))


def test_tie_counts_and_storage():
    net = cpgnet.CoupledCpgNet(sharing=(4, 4, 2))
    m, r = net.arch.m, net.arch.r
    enc1, enc2 = net.G1.appearance_encoder.layers, net.G2.appearance_encoder.layers
    assert [enc1[i] is enc2[i] for i in range(m)] == [False] * (m - 4) + [True] * 4
    assert [net.G1.decoder.layers[j] is net.G2.decoder.layers[j] for j in range(net.arch.n)] == [True] * 4 + [False] * (net.arch.n - 4)
    assert [net.D1.layers[i] is net.D2.layers[i] for i in range(r)] == [False] * (r - 2) + [True] * 2
    # skeleton encoders stay independent
    assert not any(a is b for a, b in zip(net.G1.skeleton_encoder.layers, net.G2.skeleton_encoder.layers))


def test_retie_splits_storage():
    net = cpgnet.CoupledCpgNet(sharing=(4, 4, 2))
    cpgnet.tie_weights(net, 1, 1, 1)
    assert net.sharing == (1, 1, 1)
    assert len(net.tied_layers()) == 3
    with pytest.raises(ValueError):
        cpgnet.tie_weights(net, 99, 0, 0)


def test_l1_examples():
    y = torch.ones(1, 3, 32, 16)
    batch = (y, y, y)
    assert float(cpgnet.l1_loss(None, batch, fake=y)) == 0.0
    assert float(cpgnet.l1_loss(None, batch, fake=torch.zeros_like(y))) == 1536.0
    with pytest.raises(ValueError):
        cpgnet.l1_loss(None, (y[:0], y[:0], y[:0]), fake=y[:0])


def test_cgan_uninformative_discriminator():
    net = tiny_net()
    with torch.no_grad():
        net.D1.layers[-1].weight.zero_()
        net.D1.layers[-1].bias.zero_()
    v = cpgnet.cgan_loss(net.G1, net.D1, tiny_batch(0), z=1)
    assert v.item() == pytest.approx(2 * math.log(0.5), abs=1e-12)


def test_tiny_nets_are_small():
    net = tiny_net()
    assert n_unique_params(net.G1, net.D1) <= 1000
    assert n_unique_params(net) <= 1000


def test_cgan_gradient():
    net = tiny_net()
    batch = tiny_batch(1)
    params = [p for p in list(net.G1.parameters()) + list(net.D1.parameters())]
    err = gradient_relative_error(lambda: cpgnet.cgan_loss(net.G1, net.D1, batch, z=5), params)
    assert err < 1e-4


def test_l1_gradient():
    net = tiny_net()
    batch = tiny_batch(2)
    err = gradient_relative_error(lambda: cpgnet.l1_loss(net.G1, batch, z=5), list(net.G1.parameters()))
    assert err < 1e-4


def test_total_gradient_and_composition():
    net = tiny_net()
    b1, b2 = tiny_batch(3), tiny_batch(4)
    params = list(net.parameters())
    err = gradient_relative_error(lambda: cpgnet.cpgnet_total_loss(net, b1, b2, 100.0, z=7)[0], params)
    assert err < 1e-4
    total, comps = cpgnet.cpgnet_total_loss(net, b1, b2, 100.0, z=7)
    recomputed = (cpgnet.cgan_loss(net.G1, net.D1, b1, z=7) + cpgnet.cgan_loss(net.G2, net.D2, b2, z=7)
                  + 100.0 * (cpgnet.l1_loss(net.G1, b1, z=7) + cpgnet.l1_loss(net.G2, b2, z=7)))
    assert total.item() == pytest.approx(recomputed.item(), rel=1e-6)


def test_generate_noise_is_seeded():
    net = cpgnet.CoupledCpgNet()
    x = torch.rand(2, 3, 32, 16)
    assert torch.equal(cpgnet.generate(net.G1, x, x, z=3), cpgnet.generate(net.G1, x, x, z=3))
    assert not torch.equal(cpgnet.generate(net.G1, x, x, z=3), cpgnet.generate(net.G1, x, x, z=4))


def small_train(ds, **kw):
    cfg = dict(epochs=1, batch_size=4, optimizer="adam", lr=1e-3)
    cfg.update(kw)
    net = cpgnet.CoupledCpgNet(seed=0)
    return cpgnet.train_cpgnet(net, ds, cpgnet.CpgTrainConfig(**cfg))


def test_zero_lr_keeps_parameters(small_dataset):
    net = cpgnet.CoupledCpgNet(seed=0)
    before = {k: v.clone() for k, v in net.state_dict().items() if "running" not in k and "num_batches" not in k}
    cpgnet.train_cpgnet(net, small_dataset, cpgnet.CpgTrainConfig(epochs=2, lr=0.0, batch_size=4))
    after = net.state_dict()
    assert all(torch.equal(before[k], after[k]) for k in before)


def test_training_keeps_ties_and_logs(small_dataset):
    net, log = small_train(small_dataset, epochs=2)
    assert len(log.rows) == 2 and net.epochs_trained == 2 and net.steps_taken == 4
    for a, b in net.tied_layers():
        for (n1, p1), (n2, p2) in zip(net.get_submodule(a).named_parameters(), net.get_submodule(b).named_parameters()):
            assert p1 is p2
    row = log.rows[0]
    assert row["total"] == pytest.approx(row["cgan_v1"] + row["cgan_v2"] + 100 * (row["l1_v1"] + row["l1_v2"]), rel=1e-9)


def test_training_is_deterministic(small_dataset):
    _, a = small_train(small_dataset, epochs=2, targets="pose")
    _, b = small_train(small_dataset, epochs=2, targets="pose")
    assert a.rows == b.rows


def test_resumed_training_matches(small_dataset):
    _, full = small_train(small_dataset, epochs=2)
    net, first = small_train(small_dataset, epochs=1)
    _, second = cpgnet.train_cpgnet(net, small_dataset, cpgnet.CpgTrainConfig(epochs=1, batch_size=4, optimizer="adam", lr=1e-3))
    for r_full, r_part in zip(full.rows, first.rows + second.rows):
        for k in cpgnet.LOSS_COLUMNS:
            assert r_part[k] == pytest.approx(r_full[k], rel=1e-6)


def test_target_indices_same_person():
    ds = synthdata.generate_dataset(3, 4, 1)
    t = cpgnet.target_indices(ds.view1, "pose", np.random.default_rng(0))
    for i, j in enumerate(t):
        assert ds.view1[j].person_id == ds.view1[i].person_id and i != j
    assert np.array_equal(cpgnet.target_indices(ds.view1, "self", None), np.arange(12))


def test_augment_requires_training(small_dataset):
    net = cpgnet.CoupledCpgNet()
    with pytest.raises(RuntimeError):
        cpgnet.augment_dataset(net, small_dataset.view1, small_dataset.view2, small_dataset.skeletons)


def test_augment_cardinality_and_provenance(small_dataset):
    net, _ = small_train(small_dataset)
    ds = small_dataset
    A1, A2 = cpgnet.augment_dataset(net, ds.view1, ds.view2, ds.skeletons)
    n, k = len(ds.view1), len(ds.skeletons)
    assert len(A1) == len(A2) == n + n * k
    assert A1[:n] == ds.view1
    skel_ids = {s.skeleton_id for s in ds.skeletons}
    for s in A1[n:] + A2[n:]:
        assert s.origin is Origin.SYNTHESIZED and s.pose_id in skel_ids
        assert s.pixels.min() >= 0 and s.pixels.max() <= 1
    empty1, empty2 = cpgnet.augment_dataset(net, ds.view1, ds.view2, ds.skeletons, pairs=[])
    assert empty1 == list(ds.view1) and empty2 == list(ds.view2)
    picked = cpgnet.select_pairs(n, k, 2, seed=1)
    B1, _ = cpgnet.augment_dataset(net, ds.view1, ds.view2, ds.skeletons, pairs=picked)
    assert len(B1) - n == len(picked) == 2 * n


def test_view_batch_norm_keeps_statistics_per_view():
    from pacgan._nn import ViewBatchNorm2d

    bn = ViewBatchNorm2d(2).double()
    g = torch.Generator().manual_seed(3)
    x1 = torch.randn((5, 2, 3, 3), generator=g, dtype=torch.float64)
    x2 = 4.0 + 2.0 * torch.randn((5, 2, 3, 3), generator=g, dtype=torch.float64)
    bn(x1, 1)
    bn(x2, 2)

    def expected(x):
        v = x.numpy().transpose(1, 0, 2, 3).reshape(2, -1)
        return 0.1 * v.mean(axis=1), 0.9 + 0.1 * v.var(axis=1, ddof=1)

    for x, mean, var in ((x1, bn.running_mean, bn.running_var), (x2, bn.running_mean_v2, bn.running_var_v2)):
        m, s = expected(x)
        np.testing.assert_allclose(mean.numpy(), m, rtol=1e-12)
        np.testing.assert_allclose(var.numpy(), s, rtol=1e-12)
    assert int(bn.num_batches_tracked) == 1 and int(bn.num_batches_tracked_v2) == 1
    bn.eval()
    ref = (x2 - bn.running_mean_v2.view(1, -1, 1, 1)) / torch.sqrt(bn.running_var_v2.view(1, -1, 1, 1) + bn.eps)
    torch.testing.assert_close(bn(x2, 2), ref)


def test_tied_layers_share_parameters_not_statistics(small_dataset):
    net, _ = small_train(small_dataset, epochs=1)
    tied = [net.get_submodule(a) for a, _ in net.tied_layers()]
    norms = [m.norm for m in tied if getattr(m, "norm", None) is not None]
    assert norms
    for bn in norms:
        assert not torch.equal(bn.running_mean, bn.running_mean_v2)
