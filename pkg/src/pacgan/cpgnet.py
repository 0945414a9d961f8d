"""Coupled conditional GAN for cross-view pose transfer.

Each view has a generator with two convolutional encoders (one for the
rendered skeleton, one for the appearance image) whose bottleneck codes are
concatenated and decoded by fractional-stride convolutions, and a
discriminator over the 9-channel stack ``skeleton ⋈ appearance ⋈ candidate``.
The two views share storage for the last ``p`` appearance-encoder layers, the
first ``q`` decoder layers and the last ``s`` discriminator layers.

Noise enters through decoder dropout whose masks are drawn from an explicit
``torch.Generator``; passing ``None`` disables it, which makes generation a
pure function of weights and inputs.
"""

from __future__ import annotations

import copy
import math
import logging
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from . import _nn, _raster
from .keypoints import KeypointSet
from .skeleton import SkeletonSample, image_tensor, rasterize_skeleton
from .synthdata import ImageSample, Origin

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CpgArchConfig:
    """Layer widths for the desk-scale networks.

    The stride-2 stack halves each spatial dimension until it reaches 1, so
    ``len(enc_channels)`` must bring the configured image down to 1×1.
    """

    image_size: tuple = (32, 16)
    enc_channels: tuple = (16, 32, 64, 64, 64)
    dec_channels: tuple = (64, 64, 32, 16)
    disc_channels: tuple = (16, 32, 64)
    kernel: int = 5
    dropout: float = 0.5
    dropout_layers: int = 2  # decoder layers (from the bottleneck) that carry dropout noise
    skip: str = "both"  # "skeleton", "appearance", "both" or "none"
    batch_norm: bool = True

    @classmethod
    def for_image(cls, image_size, **kw):
        """Default widths with the encoder depth matched to ``image_size``."""
        depth = max(1, math.ceil(math.log2(max(image_size))))
        widths = (16, 32) + (64,) * max(0, depth - 2)
        enc = widths[:depth]
        return cls(image_size=tuple(image_size), enc_channels=enc, dec_channels=enc[::-1][1:], **kw)

    @property
    def m(self):
        return len(self.enc_channels)

    @property
    def n(self):
        return len(self.dec_channels) + 1

    @property
    def r(self):
        return len(self.disc_channels) + 1


def _stride_schedule(size, n_layers, kernel):
    """Per-layer strides and the spatial size after each layer (index 0 = input)."""
    pad = kernel // 2
    sizes = [tuple(size)]
    strides = []
    for _ in range(n_layers):
        s = tuple(2 if d > 1 else 1 for d in sizes[-1])
        strides.append(s)
        sizes.append(tuple((d + 2 * pad - kernel) // st + 1 for d, st in zip(sizes[-1], s)))
    return strides, sizes


class ConvBlock(nn.Module):
    def __init__(self, in_ch, out_ch, kernel, stride, norm):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, kernel, stride, kernel // 2)
        self.norm = _nn.ViewBatchNorm2d(out_ch) if norm else None

    def forward(self, x, view=1):
        x = self.conv(x)
        if self.norm is not None:
            x = self.norm(x, view)
        return F.leaky_relu(x, 0.2)


class UpBlock(nn.Module):
    """Fractional-stride conv; hidden layers add BN, dropout noise and ReLU, the output layer a sigmoid."""

    def __init__(self, in_ch, out_ch, kernel, stride, output_padding, norm, final=False):
        super().__init__()
        self.conv = nn.ConvTranspose2d(in_ch, out_ch, kernel, stride, kernel // 2, output_padding)
        self.norm = _nn.ViewBatchNorm2d(out_ch) if (norm and not final) else None
        self.final = final

    def forward(self, x, dropout=0.0, noise=None, view=1):
        x = self.conv(x)
        if self.final:
            return torch.sigmoid(x)
        if self.norm is not None:
            x = self.norm(x, view)
        x = _nn.dropout_with(x, dropout, noise)
        return F.relu(x)


class Encoder(nn.Module):
    def __init__(self, arch: CpgArchConfig):
        super().__init__()
        strides, self.sizes = _stride_schedule(arch.image_size, arch.m, arch.kernel)
        chans = (3,) + tuple(arch.enc_channels)
        self.layers = nn.ModuleList(
            ConvBlock(chans[i], chans[i + 1], arch.kernel, strides[i], arch.batch_norm and i > 0) for i in range(arch.m)
        )

    def forward(self, x, view=1):
        """Returns the output of every layer; the last one is the bottleneck code."""
        outs = []
        for layer in self.layers:
            x = layer(x, view)
            outs.append(x)
        return outs


class Decoder(nn.Module):
    def __init__(self, arch: CpgArchConfig):
        super().__init__()
        strides, sizes = _stride_schedule(arch.image_size, arch.m, arch.kernel)
        m, n = arch.m, arch.n
        enc = tuple(arch.enc_channels)
        outs = tuple(arch.dec_channels) + (3,)
        layers = []
        in_ch = 2 * enc[-1]
        for j in range(n):
            # decoder layer j undoes encoder layer m-1-j
            src, dst = sizes[m - j], sizes[m - 1 - j]
            st = strides[m - 1 - j]
            op = tuple(t - (s - 1) * k - 1 for t, s, k in zip(dst, src, st))
            final = j == n - 1
            layers.append(UpBlock(in_ch, outs[j], arch.kernel, st, op, arch.batch_norm, final))
            n_src = {"none": 0, "both": 2}.get(arch.skip, 1)
            in_ch = outs[j] + (n_src * enc[m - 2 - j] if not final else 0)
        self.layers = nn.ModuleList(layers)
        self.skip = arch.skip
        self.dropout = arch.dropout
        self.dropout_layers = arch.dropout_layers

    def forward(self, code, skips, noise=None, view=1):
        x = code
        n = len(self.layers)
        for j, layer in enumerate(self.layers):
            x = layer(x, self.dropout if j < self.dropout_layers else 0.0, noise, view)
            if j < n - 1 and skips:
                x = torch.cat([x] + [src[-2 - j] for src in skips], dim=1)
        return x


class PoseGenerator(nn.Module):
    def __init__(self, arch: CpgArchConfig = CpgArchConfig(), view_id=1):
        super().__init__()
        self.view_id = view_id
        if arch.m != arch.n:
            raise ValueError(f"encoder and decoder depth must match, got m={arch.m}, n={arch.n}")
        if arch.skip not in ("skeleton", "appearance", "both", "none"):
            raise ValueError(f"unknown skip source {arch.skip!r}")
        self.arch = arch
        self.skeleton_encoder = Encoder(arch)
        self.appearance_encoder = Encoder(arch)
        if self.skeleton_encoder.sizes[-1] != (1, 1):
            raise ValueError(
                f"{arch.m} stride-2 layers reduce {arch.image_size} to {self.skeleton_encoder.sizes[-1]}, not 1x1"
            )
        self.decoder = Decoder(arch)

    def encode(self, skel, img):
        s_outs = self.skeleton_encoder(skel, self.view_id)
        a_outs = self.appearance_encoder(img, self.view_id)
        code = torch.cat([s_outs[-1], a_outs[-1]], dim=1)
        return code, s_outs, a_outs

    def forward(self, skel, img, noise=None):
        _check_size(skel, self.arch.image_size)
        _check_size(img, self.arch.image_size)
        code, s_outs, a_outs = self.encode(skel, img)
        skips = {"skeleton": [s_outs], "appearance": [a_outs], "both": [s_outs, a_outs], "none": []}[self.arch.skip]
        return self.decoder(code, skips, noise, self.view_id)


class PoseDiscriminator(nn.Module):
    """Stride-2 conv stack over the 9-channel triple, then a linear head; forward returns logits."""

    in_channels = 9

    def __init__(self, arch: CpgArchConfig = CpgArchConfig(), view_id=1):
        super().__init__()
        self.arch = arch
        self.view_id = view_id
        k = arch.r - 1
        strides, sizes = _stride_schedule(arch.image_size, k, arch.kernel)
        chans = (self.in_channels,) + tuple(arch.disc_channels)
        self.layers = nn.ModuleList(
            [ConvBlock(chans[i], chans[i + 1], arch.kernel, strides[i], arch.batch_norm and i > 0) for i in range(k)]
            + [nn.Linear(chans[-1] * sizes[-1][0] * sizes[-1][1], 1)]
        )

    def forward(self, stack):
        if stack.shape[1] != self.in_channels:
            raise ValueError(f"discriminator expects {self.in_channels} channels, got {stack.shape[1]}")
        _check_size(stack, self.arch.image_size)
        x = stack
        for layer in self.layers[:-1]:
            x = layer(x, self.view_id)
        return self.layers[-1](x.flatten(1)).squeeze(1)


def _check_size(x, size):
    if tuple(x.shape[-2:]) != tuple(size):
        raise ValueError(f"input size {tuple(x.shape[-2:])} does not match configured size {tuple(size)}")


class CoupledCpgNet(nn.Module):
    def __init__(self, arch: CpgArchConfig = CpgArchConfig(), sharing=(4, 4, 2), seed=0):
        super().__init__()
        self.arch = arch
        with _nn.seeded(seed):
            self.G1, self.G2 = PoseGenerator(arch, 1), PoseGenerator(arch, 2)
            self.D1, self.D2 = PoseDiscriminator(arch, 1), PoseDiscriminator(arch, 2)
        self.sharing = (0, 0, 0)
        self.steps_taken = 0
        self.epochs_trained = 0
        self.optimizer_state = None
        tie_weights(self, *sharing)

    def generators(self):
        return _nn.unique_parameters(self.G1, self.G2)

    def discriminators(self):
        return _nn.unique_parameters(self.D1, self.D2)

    def branch(self, view_id):
        return (self.G1, self.D1) if view_id == 1 else (self.G2, self.D2)

    def layer_lists(self):
        """(name, view-1 list, view-2 list) for every coupled layer stack."""
        return (
            ("appearance_encoder", self.G1.appearance_encoder.layers, self.G2.appearance_encoder.layers),
            ("decoder", self.G1.decoder.layers, self.G2.decoder.layers),
            ("discriminator", self.D1.layers, self.D2.layers),
        )

    def tied_layers(self):
        """Names of layers whose storage is shared, as (view-1 name, view-2 name) pairs."""
        prefix = {"appearance_encoder": ("G1.appearance_encoder.layers", "G2.appearance_encoder.layers"),
                  "decoder": ("G1.decoder.layers", "G2.decoder.layers"),
                  "discriminator": ("D1.layers", "D2.layers")}
        out = []
        for name, l1, l2 in self.layer_lists():
            p1, p2 = prefix[name]
            out += [(f"{p1}.{i}", f"{p2}.{i}") for i, (a, b) in enumerate(zip(l1, l2)) if a is b]
        return out


def _tie_list(list1, list2, tied_indices):
    for i in range(len(list1)):
        if i in tied_indices:
            list2[i] = list1[i]
        elif list2[i] is list1[i]:
            list2[i] = copy.deepcopy(list1[i])


def tie_weights(net: CoupledCpgNet, p: int, q: int, s: int) -> CoupledCpgNet:
    """Share storage of the last p appearance-encoder, first q decoder and last s discriminator layers.

    Previously tied layers outside the new counts are split into independent
    copies holding the current values.
    """
    arch = net.arch
    for name, v, hi in (("p", p, arch.m), ("q", q, arch.n), ("s", s, arch.r)):
        if not 0 <= v <= hi:
            raise ValueError(f"sharing count {name}={v} outside [0, {hi}]")
    _tie_list(net.G1.appearance_encoder.layers, net.G2.appearance_encoder.layers, set(range(arch.m - p, arch.m)))
    _tie_list(net.G1.decoder.layers, net.G2.decoder.layers, set(range(q)))
    _tie_list(net.D1.layers, net.D2.layers, set(range(arch.r - s, arch.r)))
    net.sharing = (int(p), int(q), int(s))
    return net


# ---------------------------------------------------------------------------
# sample-level API


def _as_tensor(x, dtype):
    if torch.is_tensor(x):
        return x.to(dtype)
    if isinstance(x, SkeletonSample):
        return image_tensor([x.rendered], dtype)
    if isinstance(x, ImageSample):
        return image_tensor([x.pixels], dtype)
    return image_tensor(list(x), dtype)


def _noise(z):
    if z is None or isinstance(z, torch.Generator):
        return z
    if isinstance(z, tuple):
        z = _nn.derived_seed(*z)
    return _nn.generator(z)


def _dtype(module):
    return next(module.parameters()).dtype


def encode_pair(G: PoseGenerator, omega, image):
    """Bottleneck code: skeleton code concatenated with appearance code along channels."""
    dtype = _dtype(G)
    s, a = _as_tensor(omega, dtype), _as_tensor(image, dtype)
    _check_size(s, G.arch.image_size)
    _check_size(a, G.arch.image_size)
    with _nn.eval_mode(G):
        return G.encode(s, a)[0]


def generate(G: PoseGenerator, omega, image, z=None):
    """Synthesize a sample with omega's pose and image's appearance.

    BN layers use running statistics, so the result does not depend on batch
    composition. ``z`` is a seed or torch.Generator for the dropout noise.
    Returns an ImageSample when given samples, a tensor when given tensors.
    """
    dtype = _dtype(G)
    s, a = _as_tensor(omega, dtype), _as_tensor(image, dtype)
    with _nn.eval_mode(G), torch.no_grad():
        out = G(s, a, _noise(z))
    if isinstance(image, ImageSample):
        kp = omega.keypoints if isinstance(omega, SkeletonSample) else None
        pose_id = omega.skeleton_id if isinstance(omega, SkeletonSample) else None
        px = out[0].permute(1, 2, 0).numpy()
        return ImageSample(px.astype(np.float32), image.view_id, image.person_id, pose_id, Origin.SYNTHESIZED, kp)
    return out


def triple(omega, image, candidate):
    return torch.cat([omega, image, candidate], dim=1)


def discriminate(D: PoseDiscriminator, omega, image, candidate):
    """Probability that the triple is real."""
    dtype = _dtype(D)
    t = triple(_as_tensor(omega, dtype), _as_tensor(image, dtype), _as_tensor(candidate, dtype))
    with _nn.eval_mode(D), torch.no_grad():
        p = torch.sigmoid(D(t))
    return float(p[0]) if p.numel() == 1 else p


# ---------------------------------------------------------------------------
# losses


def adversarial_value(real_logits, fake_logits):
    """Batch-mean log D(real) + batch-mean log(1 - D(fake)), computed from logits."""
    return F.logsigmoid(real_logits).mean() + F.logsigmoid(-fake_logits).mean()


def _check_batch(batch):
    omega, image, y = batch
    if omega.shape[0] == 0:
        raise ValueError("empty batch")
    return omega, image, y


def _d_logits(D, omega, image, real, fake):
    # one pass over [real; fake] keeps BN statistics shared between the halves
    b = real.shape[0]
    logits = D(torch.cat([triple(omega, image, real), triple(omega, image, fake)], dim=0))
    return logits[:b], logits[b:]


def cgan_loss(G, D, batch, z=None, fake=None):
    """Conditional GAN value over a batch of (omega, image, y) tensors."""
    omega, image, y = _check_batch(batch)
    if fake is None:
        fake = G(omega, image, _noise(z))
    real_logits, fake_logits = _d_logits(D, omega, image, y, fake)
    return adversarial_value(real_logits, fake_logits)


def l1_loss(G, batch, z=None, fake=None):
    """Batch mean of per-sample L1 distances between y and the generated image."""
    omega, image, y = _check_batch(batch)
    if fake is None:
        fake = G(omega, image, _noise(z))
    return (y - fake).abs().flatten(1).sum(dim=1).mean()


def cpgnet_total_loss(net: CoupledCpgNet, batch1, batch2, zeta, z=None):
    """Both branches' CGAN values plus zeta times both L1 terms; returns (total, components)."""
    comps = {}
    for v, (G, D), batch in ((1, net.branch(1), batch1), (2, net.branch(2), batch2)):
        omega, image, _ = _check_batch(batch)
        fake = G(omega, image, _noise(z))
        comps[f"cgan_v{v}"] = cgan_loss(G, D, batch, fake=fake)
        comps[f"l1_v{v}"] = l1_loss(G, batch, fake=fake)
    total = comps["cgan_v1"] + comps["cgan_v2"] + zeta * (comps["l1_v1"] + comps["l1_v2"])
    return total, comps


# ---------------------------------------------------------------------------
# training


@dataclass
class CpgTrainConfig:
    zeta: float = 100.0
    lr: float = 1e-3
    batch_size: int = 16
    epochs: int = 200
    optimizer: str = "adam"
    noise: bool = True
    targets: str = "pose"  # "self": y = I; "pose": y = same person, same view, another pose
    seed: int = 0

    def __post_init__(self):
        if self.targets not in ("self", "pose"):
            raise ValueError(f"unknown target mode {self.targets!r}")
        if self.zeta < 0:
            raise ValueError("zeta must be >= 0")
        if self.lr < 0:
            raise ValueError("learning rate must be >= 0")


LOSS_COLUMNS = ("cgan_v1", "cgan_v2", "l1_v1", "l1_v2", "total")


@dataclass
class TrainLog:
    columns: tuple
    rows: list = field(default_factory=list)

    def column(self, name):
        return [r[name] for r in self.rows]


def view_triples(samples, size, dtype=torch.float32):
    """Self-reconstruction triples: each image's own rasterized skeleton, the image, and the image as target."""
    if any(s.keypoints is None for s in samples):
        raise ValueError("training samples need keypoints to rasterize their skeletons")
    omega = image_tensor([rasterize_skeleton(s.keypoints, size).rendered for s in samples], dtype)
    image = image_tensor(samples, dtype)
    return omega, image, image


def target_indices(samples, mode, rng):
    """Index of the groundtruth y for every source image.

    ``self`` maps each image to itself. ``pose`` draws, per image, another
    sample of the same person in the same view (itself when it is the only one).
    """
    n = len(samples)
    if mode == "self":
        return np.arange(n)
    groups = {}
    for i, s in enumerate(samples):
        groups.setdefault(s.person_id, []).append(i)
    out = np.empty(n, dtype=np.int64)
    for i, s in enumerate(samples):
        g = [j for j in groups[s.person_id] if j != i] if s.person_id is not None else []
        out[i] = g[rng.integers(len(g))] if g else i
    return out


def _optim_pair(net, config):
    g_opt = _nn.make_optimizer(net.generators(), config.optimizer, config.lr)
    d_opt = _nn.make_optimizer(net.discriminators(), config.optimizer, config.lr)
    if net.optimizer_state is not None and net.optimizer_state.get("kind") == config.optimizer:
        g_opt.load_state_dict(net.optimizer_state["g"])
        d_opt.load_state_dict(net.optimizer_state["d"])
        for opt in (g_opt, d_opt):
            for group in opt.param_groups:
                group["lr"] = config.lr
    return g_opt, d_opt


def train_cpgnet(net: CoupledCpgNet, dataset, config: CpgTrainConfig | None = None, log_: TrainLog | None = None):
    """Alternating discriminator ascent / generator descent on both views.

    Epoch ``e`` draws its shuffles and dropout masks from ``(seed, e)``, so a
    run resumed from a checkpoint continues exactly where it stopped.
    Returns ``(net, log)``.
    """
    config = config or CpgTrainConfig()
    if not dataset.view1 or not dataset.view2:
        raise ValueError("train_cpgnet needs samples in both views")
    dtype = _dtype(net)
    size = net.arch.image_size
    samples = {1: list(dataset.view1), 2: list(dataset.view2)}
    data = {v: view_triples(samples[v], size, dtype)[:2] for v in (1, 2)}
    n = {v: data[v][0].shape[0] for v in (1, 2)}
    n_steps = int(np.ceil(max(n.values()) / config.batch_size))
    g_params, d_params = net.generators(), net.discriminators()
    g_opt, d_opt = _optim_pair(net, config)
    log_ = log_ or TrainLog(LOSS_COLUMNS)
    net.train()
    for _ in range(config.epochs):
        epoch = net.epochs_trained
        rng = np.random.default_rng([config.seed, epoch])
        order = {v: rng.permutation(n_steps * config.batch_size) % n[v] for v in (1, 2)}
        target = {v: target_indices(samples[v], config.targets, rng) for v in (1, 2)}
        sums = dict.fromkeys(LOSS_COLUMNS, 0.0)
        for step in range(n_steps):
            noise = _nn.generator(_nn.derived_seed(config.seed, epoch, step)) if config.noise else None
            batches = {}
            for v in (1, 2):
                idx = order[v][step * config.batch_size:(step + 1) * config.batch_size]
                tgt = torch.as_tensor(target[v][idx])
                skel, image = data[v]
                batches[v] = (skel[tgt], image[torch.as_tensor(idx)], image[tgt])
            fakes = {v: net.branch(v)[0](batches[v][0], batches[v][1], noise) for v in (1, 2)}

            # discriminator ascent on the CGAN value
            _nn.set_requires_grad(g_params, False)
            values = {v: cgan_loss(None, net.branch(v)[1], batches[v], fake=fakes[v].detach()) for v in (1, 2)}
            d_opt.zero_grad()
            (-(values[1] + values[2])).backward()
            d_opt.step()
            _nn.set_requires_grad(g_params, True)

            # generator descent on log(1 - D(fake)) + zeta * L1 against the updated discriminator
            _nn.set_requires_grad(d_params, False)
            g_loss = 0.0
            l1 = {}
            for v in (1, 2):
                omega, image, y = batches[v]
                _, fake_logits = _d_logits(net.branch(v)[1], omega, image, y, fakes[v])
                l1[v] = l1_loss(None, batches[v], fake=fakes[v])
                g_loss = g_loss + F.logsigmoid(-fake_logits).mean() + config.zeta * l1[v]
            g_opt.zero_grad()
            g_loss.backward()
            g_opt.step()
            _nn.set_requires_grad(d_params, True)
            net.steps_taken += 1

            sums["cgan_v1"] += values[1].item()
            sums["cgan_v2"] += values[2].item()
            sums["l1_v1"] += l1[1].item()
            sums["l1_v2"] += l1[2].item()
        row = {k: sums[k] / n_steps for k in LOSS_COLUMNS if k != "total"}
        row["total"] = row["cgan_v1"] + row["cgan_v2"] + config.zeta * (row["l1_v1"] + row["l1_v2"])
        row["epoch"] = epoch
        log_.rows.append(row)
        net.epochs_trained += 1
        log.info("cpgnet epoch %d: l1 %.2f/%.2f cgan %.3f/%.3f", epoch, row["l1_v1"], row["l1_v2"], row["cgan_v1"], row["cgan_v2"])
    net.optimizer_state = {"kind": config.optimizer, "g": g_opt.state_dict(), "d": d_opt.state_dict()}
    net.eval()
    return net, log_


# ---------------------------------------------------------------------------
# pose augmentation


def select_pairs(n_images, n_skeletons, per_image, seed=0):
    """Pick ``per_image`` distinct skeleton indices for every image index."""
    if per_image > n_skeletons:
        raise ValueError(f"per_image={per_image} exceeds {n_skeletons} skeletons")
    rng = np.random.default_rng([seed, 77])
    return [(l, int(k)) for l in range(n_images) for k in np.sort(rng.choice(n_skeletons, per_image, replace=False))]


def _require_trained(net):
    if net.steps_taken == 0:
        raise RuntimeError("CPG-Net has not been trained (no optimizer steps taken)")


def augment_dataset(net: CoupledCpgNet, images1, images2, skeletons, pairs=None, seed=0, batch_size=64):
    """Pose-augmented sets: originals plus one synthesized sample per (image index, skeleton index) pair.

    ``pairs=None`` applies every skeleton to every image. The same pairs are
    used in both views, so synthesized samples stay aligned by (person,
    skeleton). Synthesized pixels are snapped to the 8-bit grid.
    """
    _require_trained(net)
    if not images1 or not images2:
        raise ValueError("augment_dataset needs non-empty image sets")
    if not skeletons:
        raise ValueError("augment_dataset needs a non-empty skeleton set")
    out = []
    for v, images in ((1, images1), (2, images2)):
        if pairs is None:
            view_pairs = [(l, k) for l in range(len(images)) for k in range(len(skeletons))]
        else:
            view_pairs = list(pairs)
        G = net.branch(v)[0]
        dtype = _dtype(G)
        synth = []
        noise = _nn.generator(_nn.derived_seed(seed, v))
        for start in range(0, len(view_pairs), batch_size):
            chunk = view_pairs[start:start + batch_size]
            omega = image_tensor([skeletons[k].rendered for _, k in chunk], dtype)
            app = image_tensor([images[l].pixels for l, _ in chunk], dtype)
            gen = generate(G, omega, app, noise).permute(0, 2, 3, 1).numpy()
            for (l, k), px in zip(chunk, gen):
                sk = skeletons[k]
                synth.append(ImageSample(_raster.quantize8(px), v, images[l].person_id, sk.skeleton_id,
                                         Origin.SYNTHESIZED, sk.keypoints))
        out.append(list(images) + synth)
    return out[0], out[1]
