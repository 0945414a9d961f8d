import json
import struct

import pytest
import torch

from pacgan import checkpoint as ckpt
from pacgan import cpgnet, crossgan, synthdata

ARCH = cpgnet.CpgArchConfig.for_image((8, 4))
XARCH = crossgan.CrossGanArchConfig(image_size=(8, 4), latent_dim=3, vae_hidden=8, gen_channels=2,
                                    gen_stem_channels=2, disc_channels=2, disc_hidden=4)


@pytest.fixture(scope="module")
def data():
    return synthdata.generate_dataset(3, 2, 2, image_size=(8, 4), seed=4)


def cpg_cfg(epochs, seed=0):
    return cpgnet.CpgTrainConfig(epochs=epochs, batch_size=4, seed=seed)


def test_container_round_trip(tmp_path):
    tensors = {"a": torch.arange(6.0).view(2, 3), "b.c": torch.tensor(1.5), "e": torch.zeros(0, 2)}
    ckpt.write_tensors(tmp_path / "t.bin", tensors)
    raw = (tmp_path / "t.bin").read_bytes()
    assert raw[:8] == b"PACGANT\0"
    assert struct.unpack_from("<II", raw, 8) == (ckpt.FORMAT_VERSION, 3)
    back = ckpt.read_tensors(tmp_path / "t.bin")
    assert list(back) == list(tensors)
    for k in tensors:
        assert torch.equal(back[k], tensors[k])


def test_container_rejects_bad_input(tmp_path):
    ckpt.write_tensors(tmp_path / "t.bin", {"a": torch.ones(4)})
    raw = (tmp_path / "t.bin").read_bytes()
    (tmp_path / "short.bin").write_bytes(raw[:-3])
    with pytest.raises(ckpt.CheckpointError):
        ckpt.read_tensors(tmp_path / "short.bin")
    (tmp_path / "ver.bin").write_bytes(raw[:8] + struct.pack("<I", 99) + raw[12:])
    with pytest.raises(ckpt.CheckpointError, match="version"):
        ckpt.read_tensors(tmp_path / "ver.bin")
    (tmp_path / "junk.bin").write_bytes(b"hello world, not a checkpoint")
    with pytest.raises(ckpt.CheckpointError):
        ckpt.read_tensors(tmp_path / "junk.bin")
    with pytest.raises(ckpt.CheckpointError):
        ckpt.read_tensors(tmp_path / "absent.bin")


def test_cpgnet_forward_bit_identical(tmp_path, data):
    net, _ = cpgnet.train_cpgnet(cpgnet.CoupledCpgNet(ARCH, (2, 2, 1)), data, cpg_cfg(1))
    ckpt.save_checkpoint(net, tmp_path / "c.ckpt")
    back = ckpt.load_checkpoint(tmp_path / "c.ckpt")
    x = torch.rand(2, 3, 8, 4)
    for v in (1, 2):
        G, H = getattr(net, f"G{v}"), getattr(back, f"G{v}")
        assert torch.equal(cpgnet.generate(G, x, x, z=3), cpgnet.generate(H, x, x, z=3))
    assert back.tied_layers() == net.tied_layers()
    assert back.steps_taken == net.steps_taken


def test_tied_tensors_stored_once(tmp_path):
    net = cpgnet.CoupledCpgNet(ARCH, (2, 2, 1))
    ckpt.save_checkpoint(net, tmp_path / "c.ckpt")
    meta = json.loads(ckpt.sidecar_path(tmp_path / "c.ckpt").read_text())
    names = ckpt.read_tensors(tmp_path / "c.ckpt")
    assert meta["ties"] and not set(meta["ties"]) & set(names)
    assert set(meta["ties"].values()) <= set(names)


def test_loaded_ties_are_shared_storage(tmp_path, data):
    net = cpgnet.CoupledCpgNet(ARCH, (2, 2, 1))
    ckpt.save_checkpoint(net, tmp_path / "c.ckpt")
    back = ckpt.load_checkpoint(tmp_path / "c.ckpt")
    back, _ = cpgnet.train_cpgnet(back, data, cpg_cfg(1))
    for a, b in back.tied_layers():
        ma, mb = back.get_submodule(a), back.get_submodule(b)
        assert ma is mb


def test_continuation_matches_uninterrupted(tmp_path, data):
    full, log_full = cpgnet.train_cpgnet(cpgnet.CoupledCpgNet(ARCH, (2, 2, 1)), data, cpg_cfg(3))
    part, log_a = cpgnet.train_cpgnet(cpgnet.CoupledCpgNet(ARCH, (2, 2, 1)), data, cpg_cfg(1))
    ckpt.save_checkpoint(part, tmp_path / "p.ckpt")
    resumed, log_b = cpgnet.train_cpgnet(ckpt.load_checkpoint(tmp_path / "p.ckpt"), data, cpg_cfg(2))
    rows = log_a.rows + log_b.rows
    for r, s in zip(rows, log_full.rows):
        assert r["epoch"] == s["epoch"]
        assert r["total"] == pytest.approx(s["total"], rel=1e-6)


def test_crossgan_round_trip(tmp_path, data):
    net, _ = crossgan.train_crossgan(crossgan.CoupledCrossGan(XARCH), data.view1, data.view2,
                                     crossgan.CrossGanTrainConfig(epochs=1, batch_size=4))
    ckpt.save_checkpoint(net, tmp_path / "x.ckpt")
    back = ckpt.load_checkpoint(tmp_path / "x.ckpt", expect="crossgan")
    assert torch.equal(torch.as_tensor(crossgan.embed(net, data.view2, 2)), torch.as_tensor(crossgan.embed(back, data.view2, 2)))
    assert back.align.delta == net.align.delta
    with pytest.raises(ckpt.CheckpointError, match="expected cpgnet"):
        ckpt.load_checkpoint(tmp_path / "x.ckpt", expect="cpgnet")


def test_tie_mismatch_rejected(tmp_path):
    ckpt.save_checkpoint(cpgnet.CoupledCpgNet(ARCH, (2, 2, 1)), tmp_path / "c.ckpt")
    with pytest.raises(ckpt.CheckpointError, match="tie mismatch"):
        ckpt.load_checkpoint(tmp_path / "c.ckpt", into=cpgnet.CoupledCpgNet(ARCH, (1, 1, 1)))
    with pytest.raises(ckpt.CheckpointError):
        ckpt.load_checkpoint(tmp_path / "c.ckpt", into=crossgan.CoupledCrossGan(XARCH))


def test_shape_mismatch_names_tensor(tmp_path):
    ckpt.save_checkpoint(cpgnet.CoupledCpgNet(ARCH, (2, 2, 1)), tmp_path / "c.ckpt")
    wide = cpgnet.CpgArchConfig(image_size=(8, 4), enc_channels=(16, 32, 32), dec_channels=(32, 16))
    with pytest.raises(ckpt.CheckpointError, match="shape mismatch for"):
        ckpt.load_checkpoint(tmp_path / "c.ckpt", into=cpgnet.CoupledCpgNet(wide, (2, 2, 1)))


def test_sidecar_errors(tmp_path):
    path = ckpt.save_checkpoint(cpgnet.CoupledCpgNet(ARCH, (1, 1, 1)), tmp_path / "c.ckpt")
    side = ckpt.sidecar_path(path)
    meta = json.loads(side.read_text())
    meta["format_version"] = 7
    side.write_text(json.dumps(meta))
    with pytest.raises(ckpt.CheckpointError, match="version"):
        ckpt.load_checkpoint(path)
    side.unlink()
    with pytest.raises(ckpt.CheckpointError, match="metadata missing"):
        ckpt.load_checkpoint(path)
