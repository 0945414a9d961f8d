"""Coupled VAE + latent alignment + coupled GAN matcher.

Per view, an MLP VAE encodes an image into a Gaussian posterior; a single
affine map carries view-2 latents into the view-1 latent space; a pair of
latent-to-image generators and image discriminators with partially tied
layers adds the adversarial term. All losses are written in minimization
form: the KL term is the negated evidence-bound KL, the reconstruction term
is a per-sample sum of squared errors.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from . import _nn
from .skeleton import image_tensor
from .synthdata import ImageSample, Origin

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CrossGanArchConfig:
    image_size: tuple = (32, 16)
    latent_dim: int = 20
    vae_hidden: int = 256
    gen_channels: int = 20
    gen_stem_channels: int = 8
    disc_channels: int = 20
    disc_hidden: int = 64

    @property
    def input_dim(self):
        return 3 * self.image_size[0] * self.image_size[1]


@dataclass
class LatentVariable:
    """Batched posterior parameters and the reparameterized draw, all (B, J)."""

    mean: torch.Tensor
    sigma: torch.Tensor
    sample: torch.Tensor
    epsilon: torch.Tensor


class ViewVae(nn.Module):
    def __init__(self, arch: CrossGanArchConfig = CrossGanArchConfig()):
        super().__init__()
        self.arch = arch
        d, h, j = arch.input_dim, arch.vae_hidden, arch.latent_dim
        self.encoder = nn.Sequential(nn.Flatten(), nn.Linear(d, h), nn.ReLU(), nn.Linear(h, 2 * j))
        self.decoder = nn.Sequential(nn.Linear(j, h), nn.ReLU(), nn.Linear(h, d), nn.Sigmoid())

    def posterior(self, x):
        """(mean, log variance) of q(z | x)."""
        if x[0].numel() != self.arch.input_dim:
            raise ValueError(f"input has {x[0].numel()} values per sample, encoder expects {self.arch.input_dim}")
        out = self.encoder(x)
        return out.chunk(2, dim=1)

    def reconstruct(self, z):
        return self.decoder(z)


class GenBlock(nn.Module):
    def __init__(self, in_ch, out_ch, kernel, relu=True, stem=None):
        super().__init__()
        self.stem = stem
        self.conv = nn.Conv2d(in_ch, out_ch, kernel, 1, kernel // 2)
        self.norm = _nn.ViewBatchNorm2d(out_ch)
        self.relu = relu

    def forward(self, x, view=1):
        if self.stem is not None:
            x = self.stem(x)
        x = self.norm(self.conv(x), view)
        return F.relu(x) if self.relu else x


class _Stem(nn.Module):
    """Linear projection of a latent vector onto a full-resolution feature map."""

    def __init__(self, latent_dim, channels, size):
        super().__init__()
        self.shape = (channels,) + tuple(size)
        self.fc = nn.Linear(latent_dim, channels * size[0] * size[1])

    def forward(self, z):
        return self.fc(z).view(z.shape[0], *self.shape)


class LatentGenerator(nn.Module):
    """Five stride-1 conv layers; the first carries the latent projection, the last emits RGB."""

    def __init__(self, arch: CrossGanArchConfig = CrossGanArchConfig(), view_id=1):
        super().__init__()
        self.view_id = view_id
        c, c0 = arch.gen_channels, arch.gen_stem_channels
        self.layers = nn.ModuleList(
            [
                GenBlock(c0, c, 5, stem=_Stem(arch.latent_dim, c0, arch.image_size)),
                GenBlock(c, c, 5),
                GenBlock(c, c, 5),
                GenBlock(c, c, 3),
                GenBlock(c, 3, 3, relu=False),
            ]
        )

    def forward(self, z):
        x = z
        for layer in self.layers:
            x = layer(x, self.view_id)
        return torch.sigmoid(x)


class DiscBlock(nn.Module):
    def __init__(self, in_ch, out_ch):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 5, 1, 2)

    def forward(self, x):
        return F.leaky_relu(F.max_pool2d(self.conv(x), 2, ceil_mode=True), 0.2)


class ImageDiscriminator(nn.Module):
    """Three conv/max-pool blocks and two fully connected layers; forward returns logits."""

    def __init__(self, arch: CrossGanArchConfig = CrossGanArchConfig()):
        super().__init__()
        c = arch.disc_channels
        h, w = arch.image_size
        for _ in range(3):
            h, w = -(-h // 2), -(-w // 2)
        self.layers = nn.ModuleList(
            [
                DiscBlock(3, c),
                DiscBlock(c, c),
                DiscBlock(c, c),
                nn.Sequential(nn.Flatten(), nn.Linear(c * h * w, arch.disc_hidden), nn.ReLU()),
                nn.Linear(arch.disc_hidden, 1),
            ]
        )

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x.squeeze(1)


class AlignmentModel(nn.Module):
    """Affine map of view-2 latents into view-1 latent space, identity at initialization."""

    def __init__(self, latent_dim=20, delta=0.1):
        super().__init__()
        if delta < 0:
            raise ValueError("delta must be >= 0")
        self.latent_dim = latent_dim
        self.delta = float(delta)
        self.linear = nn.Linear(latent_dim, latent_dim)
        with torch.no_grad():
            self.linear.weight.copy_(torch.eye(latent_dim))
            self.linear.bias.zero_()

    def forward(self, z):
        if z.shape[-1] != self.latent_dim:
            raise ValueError(f"latent dimension {z.shape[-1]} != alignment dimension {self.latent_dim}")
        return self.linear(z)


# generator layers 1-4 tied, layer 5 free; discriminator layer 5 tied, 1-4 free
GEN_TIED = (0, 1, 2, 3)
DISC_TIED = (4,)


class CoupledCrossGan(nn.Module):
    def __init__(self, arch: CrossGanArchConfig = CrossGanArchConfig(), delta=0.1, seed=0):
        super().__init__()
        self.arch = arch
        with _nn.seeded(seed):
            self.vae1, self.vae2 = ViewVae(arch), ViewVae(arch)
            self.align = AlignmentModel(arch.latent_dim, delta)
            self.G1, self.G2 = LatentGenerator(arch, 1), LatentGenerator(arch, 2)
            self.D1, self.D2 = ImageDiscriminator(arch), ImageDiscriminator(arch)
        for i in GEN_TIED:
            self.G2.layers[i] = self.G1.layers[i]
        for i in DISC_TIED:
            self.D2.layers[i] = self.D1.layers[i]
        self.steps_taken = 0
        self.epochs_trained = 0
        self.optimizer_state = None

    def vae(self, view_id):
        return self.vae1 if view_id == 1 else self.vae2

    def gan(self, view_id):
        return (self.G1, self.D1) if view_id == 1 else (self.G2, self.D2)

    def discriminators(self):
        return _nn.unique_parameters(self.D1, self.D2)

    def generative(self):
        return _nn.unique_parameters(self.vae1, self.vae2, self.align, self.G1, self.G2)

    def tied_layers(self):
        out = [(f"G1.layers.{i}", f"G2.layers.{i}") for i, (a, b) in enumerate(zip(self.G1.layers, self.G2.layers)) if a is b]
        out += [(f"D1.layers.{i}", f"D2.layers.{i}") for i, (a, b) in enumerate(zip(self.D1.layers, self.D2.layers)) if a is b]
        return out


# ---------------------------------------------------------------------------
# VAE pieces


def _images(x, dtype):
    if torch.is_tensor(x):
        return x.to(dtype)
    if isinstance(x, ImageSample):
        return image_tensor([x], dtype)
    return image_tensor(list(x), dtype)


def _dtype(module):
    return next(module.parameters()).dtype


def reparameterize(mean, sigma, eps):
    return mean + sigma * eps


def vae_encode(vae: ViewVae, images, eps=None) -> LatentVariable:
    """Posterior of a batch and a reparameterized draw.

    ``eps`` may be a tensor shaped like the mean, a torch.Generator, an int
    seed, or None for zero noise (then the draw equals the mean).
    """
    x = _images(images, _dtype(vae))
    mean, logvar = vae.posterior(x)
    sigma = torch.exp(0.5 * logvar)
    if eps is None:
        eps = torch.zeros_like(mean)
    elif not torch.is_tensor(eps):
        gen = eps if isinstance(eps, torch.Generator) else _nn.generator(eps)
        eps = torch.randn(mean.shape, generator=gen, dtype=mean.dtype)
    elif eps.shape != mean.shape:
        raise ValueError(f"noise shape {tuple(eps.shape)} != latent shape {tuple(mean.shape)}")
    return LatentVariable(mean, sigma, reparameterize(mean, sigma, eps), eps)


def vae_kl_loss(lat) -> torch.Tensor:
    """KL(N(mean, sigma^2) || N(0, I)) summed over latent dimensions, one value per sample.

    Accepts a LatentVariable or a ``(mean, sigma)`` pair.
    """
    mean, sigma = (lat.mean, lat.sigma) if isinstance(lat, LatentVariable) else lat
    mean, sigma = torch.as_tensor(mean), torch.as_tensor(sigma)
    if torch.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    log_var = torch.log(sigma**2)
    return -0.5 * (1.0 + log_var - mean**2 - sigma**2).sum(dim=-1)


def reconstruction_loss(vae: ViewVae, images, z) -> torch.Tensor:
    """Per-sample sum of squared reconstruction errors (Gaussian likelihood up to constants)."""
    x = _images(images, _dtype(vae)).flatten(1)
    return ((vae.reconstruct(z) - x) ** 2).sum(dim=1)


def view_vae_loss(lat, recon):
    return vae_kl_loss(lat) + recon


def coupled_vae_loss(lat1, lat2, recon1, recon2) -> torch.Tensor:
    """Mean over the m pairs of both views' (KL + reconstruction) terms."""
    per1 = view_vae_loss(lat1, recon1)
    per2 = view_vae_loss(lat2, recon2)
    if per1.numel() == 0:
        raise ValueError("empty batch")
    return (per1 + per2).mean()


# ---------------------------------------------------------------------------
# alignment and adversarial terms


def align(model: AlignmentModel, z2):
    return model(torch.as_tensor(z2))


def alignment_loss(model: AlignmentModel, z1, z2, delta=None) -> torch.Tensor:
    """Mean over pairs of max(||z1 - Align(z2)||^2, delta)."""
    delta = model.delta if delta is None else float(delta)
    z1, z2 = torch.as_tensor(z1), torch.as_tensor(z2)
    if z1.shape[0] == 0:
        raise ValueError("empty batch")
    d2 = ((z1 - model(z2)) ** 2).sum(dim=-1)
    return torch.clamp(d2, min=delta).mean()


def coupled_gan_loss(net: CoupledCrossGan, images1, images2, z1, z2) -> torch.Tensor:
    """Sum over views of batch-mean log D(real) + batch-mean log(1 - D(G(z)))."""
    dtype = _dtype(net)
    x1, x2 = _images(images1, dtype), _images(images2, dtype)
    if x1.shape[0] == 0 or x2.shape[0] == 0:
        raise ValueError("empty batch")
    total = 0.0
    for (G, D), x, z in ((net.gan(1), x1, z1), (net.gan(2), x2, z2)):
        total = total + F.logsigmoid(D(x)).mean() + F.logsigmoid(-D(G(z))).mean()
    return total


def crossgan_components(net: CoupledCrossGan, images1, images2, eps1=None, eps2=None, delta=None):
    """Evaluate the VAE, alignment and GAN terms on one batch of pairs."""
    dtype = _dtype(net)
    x1, x2 = _images(images1, dtype), _images(images2, dtype)
    lat1, lat2 = vae_encode(net.vae1, x1, eps1), vae_encode(net.vae2, x2, eps2)
    rec1 = reconstruction_loss(net.vae1, x1, lat1.sample)
    rec2 = reconstruction_loss(net.vae2, x2, lat2.sample)
    return {
        "vae": coupled_vae_loss(lat1, lat2, rec1, rec2),
        "align": alignment_loss(net.align, lat1.sample, lat2.sample, delta),
        "gan": coupled_gan_loss(net, x1, x2, lat1.sample, lat2.sample),
    }


def crossgan_total_loss(components) -> torch.Tensor:
    return components["vae"] + components["align"] + components["gan"]


# ---------------------------------------------------------------------------
# training


@dataclass
class CrossGanTrainConfig:
    lr: float = 5e-4
    batch_size: int = 16
    epochs: int = 200
    optimizer: str = "adam"
    pairing: str = "label"  # "label" or "shuffled"
    delta: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("learning rate must be >= 0")
        if self.pairing not in ("label", "shuffled"):
            raise ValueError(f"unknown pairing mode {self.pairing!r}")


LOSS_COLUMNS = ("vae", "align", "gan", "total")


@dataclass
class TrainLog:
    columns: tuple = LOSS_COLUMNS
    rows: list = field(default_factory=list)

    def column(self, name):
        return [r[name] for r in self.rows]


def pair_views(A1, A2, mode="label", seed=0):
    """Index pairs (i, j) joining the two augmented views.

    ``label`` joins the k-th sample with a given (person, pose, origin) in A1
    to the k-th such sample in A2; ``shuffled`` ignores identities and joins
    ``A1[i]`` with a seeded permutation of A2.
    """
    if len(A1) != len(A2):
        raise ValueError(f"view sizes differ: {len(A1)} vs {len(A2)}")
    if not A1:
        raise ValueError("empty training data")
    if mode == "shuffled":
        perm = np.random.default_rng([seed, 5]).permutation(len(A2))
        return [(i, int(j)) for i, j in enumerate(perm)]
    if mode != "label":
        raise ValueError(f"unknown pairing mode {mode!r}")
    return match_by_key(A1, A2)


def _key(s):
    return (s.person_id, s.pose_id, Origin(s.origin))


def match_by_key(A1, A2):
    """Occurrence-order matching of equal (person, pose, origin) keys across views."""
    slots = {}
    for j, s in enumerate(A2):
        slots.setdefault(_key(s), []).append(j)
    seen = {}
    pairs = []
    for i, s in enumerate(A1):
        k = _key(s)
        n = seen.get(k, 0)
        seen[k] = n + 1
        if n < len(slots.get(k, ())):
            pairs.append((i, slots[k][n]))
    if not pairs:
        raise ValueError("no label-matched pairs between the two views")
    return pairs


def train_crossgan(net: CoupledCrossGan, A1, A2, config: CrossGanTrainConfig | None = None, log_: TrainLog | None = None):
    """Alternate discriminator ascent with a joint VAE + alignment + generator descent step.

    Logged components come from the descent step, so ``total`` is their exact
    sum. Returns ``(net, log)``.
    """
    config = config or CrossGanTrainConfig()
    pairs = pair_views(A1, A2, config.pairing, config.seed)
    dtype = _dtype(net)
    x1 = image_tensor([A1[i] for i, _ in pairs], dtype)
    x2 = image_tensor([A2[j] for _, j in pairs], dtype)
    n = len(pairs)
    d_params, g_params = net.discriminators(), net.generative()
    d_opt = _nn.make_optimizer(d_params, config.optimizer, config.lr)
    g_opt = _nn.make_optimizer(g_params, config.optimizer, config.lr)
    if net.optimizer_state is not None and net.optimizer_state.get("kind") == config.optimizer:
        d_opt.load_state_dict(net.optimizer_state["d"])
        g_opt.load_state_dict(net.optimizer_state["g"])
        for opt in (d_opt, g_opt):
            for group in opt.param_groups:
                group["lr"] = config.lr
    log_ = log_ or TrainLog()
    net.train()
    for _ in range(config.epochs):
        epoch = net.epochs_trained
        order = np.random.default_rng([config.seed, epoch]).permutation(n)
        sums = dict.fromkeys(LOSS_COLUMNS, 0.0)
        n_steps = 0
        for step, start in enumerate(range(0, n, config.batch_size)):
            idx = torch.as_tensor(order[start:start + config.batch_size])
            b1, b2 = x1[idx], x2[idx]
            gen = _nn.generator(_nn.derived_seed(config.seed, epoch, step))
            eps1 = torch.randn((len(idx), net.arch.latent_dim), generator=gen, dtype=dtype)
            eps2 = torch.randn((len(idx), net.arch.latent_dim), generator=gen, dtype=dtype)

            with torch.no_grad():
                z1 = vae_encode(net.vae1, b1, eps1).sample
                z2 = vae_encode(net.vae2, b2, eps2).sample
            value = coupled_gan_loss(net, b1, b2, z1, z2)
            d_opt.zero_grad()
            (-value).backward()
            d_opt.step()

            _nn.set_requires_grad(d_params, False)
            comps = crossgan_components(net, b1, b2, eps1, eps2, config.delta)
            total = crossgan_total_loss(comps)
            g_opt.zero_grad()
            total.backward()
            g_opt.step()
            _nn.set_requires_grad(d_params, True)
            net.steps_taken += 1
            n_steps += 1
            for k in ("vae", "align", "gan"):
                sums[k] += comps[k].item()
        row = {k: sums[k] / n_steps for k in ("vae", "align", "gan")}
        row["total"] = row["vae"] + row["align"] + row["gan"]
        row["epoch"] = epoch
        log_.rows.append(row)
        net.epochs_trained += 1
        log.info("crossgan epoch %d: vae %.2f align %.3f gan %.3f", epoch, row["vae"], row["align"], row["gan"])
    net.optimizer_state = {"kind": config.optimizer, "g": g_opt.state_dict(), "d": d_opt.state_dict()}
    net.eval()
    return net, log_


# ---------------------------------------------------------------------------
# retrieval


@torch.no_grad()
def embed(net: CoupledCrossGan, images, view_id: int):
    """Deterministic embedding: view 1 -> posterior mean, view 2 -> aligned posterior mean.

    One ImageSample gives a (J,) array; a sequence or tensor gives (N, J).
    """
    if net.steps_taken == 0:
        raise RuntimeError("Cross-GAN has not been trained (no optimizer steps taken)")
    if view_id not in (1, 2):
        raise ValueError(f"view_id must be 1 or 2, got {view_id}")
    single = isinstance(images, ImageSample)
    with _nn.eval_mode(net):
        mean, _ = net.vae(view_id).posterior(_images(images, _dtype(net)))
        if view_id == 2:
            mean = net.align(mean)
    out = mean.numpy().astype(np.float64)
    return out[0] if single else out


def export_embeddings(path, net, samples, view_id):
    """CSV with columns sample_id, view, v_1..v_J (6-decimal fixed point)."""
    vecs = embed(net, list(samples), view_id)
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "view"] + [f"v_{i + 1}" for i in range(vecs.shape[1])])
        for s, v in zip(samples, vecs):
            w.writerow([f"{s.person_id}_{s.pose_id}", view_id] + [f"{x:.6f}" for x in v])
    return path


def read_embeddings(path):
    with Path(path).open() as fh:
        rows = list(csv.reader(fh))
    ids = [r[0] for r in rows[1:]]
    views = [int(r[1]) for r in rows[1:]]
    vecs = np.array([[float(x) for x in r[2:]] for r in rows[1:]])
    return ids, views, vecs
