"""Skeleton samples: exact rasterization plus a toy multi-stage PAF estimator.

The estimator follows the two-branch stage recursion: stage 1 predicts
confidence maps and part affinity fields from image features alone, every
later stage sees ``features ⋈ maps ⋈ fields`` of the previous stage.
"""

from __future__ import annotations

import colorsys
import logging
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from . import _raster
from ._nn import make_optimizer
from .keypoints import LIMBS, NUM_JOINTS, NUM_LIMBS, KeypointSet

log = logging.getLogger(__name__)

GT_SIGMA = 1.5
FIELD_HALF_WIDTH = 1.5
SKELETON_LINE_HALF_WIDTH = 0.6

LIMB_COLORS = tuple(colorsys.hsv_to_rgb(i / NUM_LIMBS, 1.0, 1.0) for i in range(NUM_LIMBS))


@dataclass(eq=False)
class SkeletonSample:
    keypoints: KeypointSet
    rendered: np.ndarray
    skeleton_id: int | None = None

    def __eq__(self, other):
        if not isinstance(other, SkeletonSample):
            return NotImplemented
        return (
            self.skeleton_id == other.skeleton_id
            and self.keypoints == other.keypoints
            and np.array_equal(self.rendered, other.rendered)
        )


def rasterize_skeleton(kp: KeypointSet, size, skeleton_id=None) -> SkeletonSample:
    """Draw every limb as an anti-aliased line in its fixed color on black."""
    h, w = size
    canvas = np.zeros((h, w, 3), dtype=np.float64)
    px = kp.to_pixels(size)
    for (a, b), color in zip(kp.limb_topology, LIMB_COLORS):
        dist = _raster.segment_distance(size, px[a], px[b])
        _raster.paint(canvas, _raster.coverage(dist, SKELETON_LINE_HALF_WIDTH), color)
    return SkeletonSample(kp, _raster.quantize8(canvas), skeleton_id)


def keypoint_heatmaps(kp: KeypointSet, size, sigma=GT_SIGMA) -> np.ndarray:
    """Gaussian bump per joint, shape (K, H, W), peak value 1 at the joint."""
    cols, rows = _raster.pixel_grid(size)
    px = kp.to_pixels(size)
    d2 = (cols[None] - px[:, 0, None, None]) ** 2 + (rows[None] - px[:, 1, None, None]) ** 2
    return np.exp(-d2 / (2.0 * sigma**2))


def limb_fields(kp: KeypointSet, size, half_width=FIELD_HALF_WIDTH) -> np.ndarray:
    """Unit limb direction inside a ribbon around each limb, zero elsewhere; shape (L, 2, H, W)."""
    h, w = size
    px = kp.to_pixels(size)
    out = np.zeros((len(kp.limb_topology), 2, h, w))
    for i, (a, b) in enumerate(kp.limb_topology):
        d = px[b] - px[a]
        norm = np.hypot(*d)
        if norm < 1e-9:
            continue
        mask = _raster.segment_distance(size, px[a], px[b]) <= half_width
        out[i, 0][mask] = d[0] / norm
        out[i, 1][mask] = d[1] / norm
    return out


def extract_keypoints(confidence_maps) -> KeypointSet:
    """Per-map argmax, ties resolved by first occurrence in row-major order."""
    maps = confidence_maps.detach().cpu().numpy() if torch.is_tensor(confidence_maps) else np.asarray(confidence_maps)
    if maps.ndim != 3 or maps.shape[0] != NUM_JOINTS:
        raise ValueError(f"expected ({NUM_JOINTS}, H, W) confidence maps, got {maps.shape}")
    k, h, w = maps.shape
    flat = maps.reshape(k, -1)
    idx = np.argmax(flat, axis=1)
    rows, cols = np.divmod(idx, w)
    pts = np.stack([cols / max(w - 1, 1), rows / max(h - 1, 1)], axis=1)
    conf = flat[np.arange(k), idx]
    return KeypointSet(pts, conf)


# ---------------------------------------------------------------------------
# toy PAF estimator


def _branch(in_ch, hidden, out_ch):
    return nn.Sequential(
        nn.Conv2d(in_ch, hidden, 3, padding=1),
        nn.ReLU(),
        nn.Conv2d(hidden, hidden, 3, padding=1),
        nn.ReLU(),
        nn.Conv2d(hidden, out_ch, 1),
    )


class PafStage(nn.Module):
    def __init__(self, in_ch, hidden, n_joints, n_limbs):
        super().__init__()
        self.in_channels = in_ch
        self.maps = _branch(in_ch, hidden, n_joints)
        self.fields = _branch(in_ch, hidden, 2 * n_limbs)

    def forward(self, x):
        return self.maps(x), self.fields(x)


class PafEstimator(nn.Module):
    """Feature net (stand-in for a pretrained backbone) followed by ``n_stages`` refinement stages."""

    def __init__(self, image_size=(32, 16), n_stages=3, feature_channels=16, branch_channels=32,
                 n_joints=NUM_JOINTS, n_limbs=NUM_LIMBS):
        super().__init__()
        if n_stages < 1:
            raise ValueError("n_stages must be >= 1")
        self.image_size = tuple(image_size)
        self.n_joints = n_joints
        self.n_limbs = n_limbs
        f = feature_channels
        self.features = nn.Sequential(
            nn.Conv2d(3, f, 3, padding=1),
            nn.ReLU(),
            nn.Conv2d(f, f, 3, padding=1),
            nn.ReLU(),
            nn.Conv2d(f, f, 3, padding=1),
            nn.ReLU(),
        )
        refine_in = f + n_joints + 2 * n_limbs
        self.stages = nn.ModuleList(
            [PafStage(f if t == 0 else refine_in, branch_channels, n_joints, n_limbs) for t in range(n_stages)]
        )

    @property
    def n_stages(self):
        return len(self.stages)

    def forward(self, x):
        """x: (B, 3, H, W). Returns a list of (maps (B,K,H,W), fields (B,L,2,H,W)) per stage."""
        if tuple(x.shape[-2:]) != self.image_size:
            raise ValueError(f"image size {tuple(x.shape[-2:])} does not match estimator size {self.image_size}")
        feats = self.features(x)
        outputs = []
        inp = feats
        for stage in self.stages:
            maps, flds = stage(inp)
            outputs.append((maps, flds.view(flds.shape[0], self.n_limbs, 2, *flds.shape[-2:])))
            inp = torch.cat([feats, maps, flds], dim=1)
        return outputs


@dataclass
class PafStageOutput:
    """Batched stage output: maps (B, K, H, W) and fields (B, L, 2, H, W)."""

    confidence_maps: torch.Tensor
    affinity_fields: torch.Tensor
    stage_index: int


def image_tensor(images, dtype=torch.float32):
    """Stack ImageSamples, SkeletonSamples or H×W×3 arrays into a (B, 3, H, W) tensor."""
    arrs = [im.rendered if isinstance(im, SkeletonSample) else getattr(im, "pixels", im) for im in images]
    return torch.as_tensor(np.stack(arrs), dtype=dtype).permute(0, 3, 1, 2).contiguous()


def paf_forward(estimator: PafEstimator, image) -> list[PafStageOutput]:
    """Run all stages on one ImageSample (or a prepared (B,3,H,W) tensor)."""
    if torch.is_tensor(image):
        x = image
    else:
        p = image.pixels
        if tuple(p.shape[:2]) != estimator.image_size:
            raise ValueError(f"image size {tuple(p.shape[:2])} does not match estimator size {estimator.image_size}")
        x = image_tensor([image], dtype=next(estimator.parameters()).dtype)
    return [PafStageOutput(m, f, t + 1) for t, (m, f) in enumerate(estimator(x))]


def paf_stage_loss(out: PafStageOutput, gt_maps, gt_fields, weight_mask):
    """Weighted squared error of one stage: returns (maps term, fields term).

    ``weight_mask`` is broadcast over (B, H, W); terms are summed over parts,
    locations and batch.
    """
    maps, flds = out.confidence_maps, out.affinity_fields
    gt_maps = torch.as_tensor(gt_maps, dtype=maps.dtype)
    gt_fields = torch.as_tensor(gt_fields, dtype=flds.dtype)
    if gt_maps.shape != maps.shape:
        raise ValueError(f"confidence map shape {tuple(maps.shape)} != groundtruth {tuple(gt_maps.shape)}")
    if gt_fields.shape != flds.shape:
        raise ValueError(f"affinity field shape {tuple(flds.shape)} != groundtruth {tuple(gt_fields.shape)}")
    w = torch.as_tensor(weight_mask, dtype=maps.dtype)
    if torch.any(w < 0):
        raise ValueError("weight mask must be non-negative")
    w = torch.broadcast_to(w, maps.shape[:1] + maps.shape[-2:])
    loss_maps = (w[:, None] * (maps - gt_maps) ** 2).sum()
    # squared L2 norm of the 2-vector at each location
    loss_fields = (w[:, None] * ((flds - gt_fields) ** 2).sum(dim=2)).sum()
    return loss_maps, loss_fields


def paf_total_loss(stage_losses):
    if len(stage_losses) == 0:
        raise ValueError("need at least one stage loss")
    total = 0.0
    for a, b in stage_losses:
        total = total + a + b
    return total


@dataclass
class PafTrainConfig:
    epochs: int = 200
    lr: float = 1e-3
    batch_size: int = 16
    optimizer: str = "adam"
    seed: int = 0


@dataclass
class PafTrainLog:
    epoch_loss: list = field(default_factory=list)


def paf_targets(samples, size):
    maps = np.stack([keypoint_heatmaps(s.keypoints, size) for s in samples])
    flds = np.stack([limb_fields(s.keypoints, size) for s in samples])
    # single-figure data: no overlapping annotations to mask out
    weight = np.ones((len(samples),) + tuple(size))
    return maps, flds, weight


def train_paf(estimator: PafEstimator, samples, config: PafTrainConfig | None = None):
    """Fit the estimator to samples carrying ground-truth keypoints.

    Returns ``(estimator, log)``; ``log.epoch_loss`` holds the mean per-sample
    total loss of each epoch.
    """
    config = config or PafTrainConfig()
    samples = list(samples)
    if not samples:
        raise ValueError("train_paf needs at least one sample")
    if any(s.keypoints is None for s in samples):
        raise ValueError("every training sample needs ground-truth keypoints")
    dtype = next(estimator.parameters()).dtype
    x_all = image_tensor(samples, dtype)
    maps, flds, weight = (torch.as_tensor(a, dtype=dtype) for a in paf_targets(samples, estimator.image_size))
    opt = make_optimizer(estimator.parameters(), config.optimizer, config.lr)
    history = PafTrainLog()
    n = len(samples)
    estimator.train()
    for epoch in range(config.epochs):
        order = np.random.default_rng([config.seed, epoch]).permutation(n)
        running = 0.0
        for start in range(0, n, config.batch_size):
            idx = torch.as_tensor(order[start:start + config.batch_size])
            outs = paf_forward(estimator, x_all[idx])
            total = paf_total_loss([paf_stage_loss(o, maps[idx], flds[idx], weight[idx]) for o in outs])
            opt.zero_grad()
            (total / len(idx)).backward()
            opt.step()
            running += total.item()
        history.epoch_loss.append(running / n)
        log.debug("paf epoch %d loss %.4f", epoch, history.epoch_loss[-1])
    estimator.eval()
    return estimator, history


@torch.no_grad()
def estimate_keypoints(estimator: PafEstimator, images) -> list[KeypointSet]:
    """Decode final-stage confidence maps of a batch of images into keypoints."""
    x = images if torch.is_tensor(images) else image_tensor(images, next(estimator.parameters()).dtype)
    maps = estimator(x)[-1][0]
    return [extract_keypoints(m) for m in maps]
