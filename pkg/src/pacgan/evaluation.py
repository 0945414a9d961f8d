"""Single-shot retrieval protocol, CMC curves and the cross-view generation distance."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import cpgnet
from .skeleton import image_tensor


def pairwise_distance(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64).ravel(), np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.size} vs {b.size}")
    return float(np.linalg.norm(a - b))


@dataclass
class CMCCurve:
    rates: np.ndarray
    n_queries: int

    def __post_init__(self):
        self.rates = np.asarray(self.rates, dtype=np.float64)

    def __len__(self):
        return len(self.rates)


@dataclass
class RetrievalSplit:
    """Queries and a single-shot gallery, each a list of (sample, person_id)."""

    queries: list
    gallery: list

    def __post_init__(self):
        ids = [pid for _, pid in self.gallery]
        if len(ids) != len(set(ids)):
            raise ValueError("single-shot gallery must hold exactly one sample per person")


def single_shot_split(ds, seed=0) -> RetrievalSplit:
    """One seeded view-1 query and one seeded view-2 gallery sample per identity."""
    rng = np.random.default_rng([seed, 71])
    by1, by2 = {}, {}
    for s in ds.view1:
        by1.setdefault(s.person_id, []).append(s)
    for s in ds.view2:
        by2.setdefault(s.person_id, []).append(s)
    missing = set(by1) ^ set(by2)
    if missing:
        raise ValueError(f"identities missing from one view: {sorted(missing)}")
    queries, gallery = [], []
    for pid in sorted(by1):
        queries.append((by1[pid][rng.integers(len(by1[pid]))], pid))
        gallery.append((by2[pid][rng.integers(len(by2[pid]))], pid))
    return RetrievalSplit(queries, gallery)


def true_match_ranks(scores, query_ids, gallery_ids) -> np.ndarray:
    """1-based rank of each query's true match; ties go to the lower gallery index.

    Queries without a match in the gallery get rank ``len(gallery) + 1``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    gallery_ids = list(gallery_ids)
    pos = {pid: j for j, pid in enumerate(gallery_ids)}
    n_g = len(gallery_ids)
    ranks = np.full(len(query_ids), n_g + 1, dtype=np.int64)
    cols = np.arange(n_g)
    for i, pid in enumerate(query_ids):
        j = pos.get(pid)
        if j is None:
            continue
        row = scores[i]
        ranks[i] = 1 + np.count_nonzero(row > row[j]) + np.count_nonzero((row == row[j]) & (cols < j))
    return ranks


def cmc_from_scores(scores, query_ids, gallery_ids) -> CMCCurve:
    """CMC of a query × gallery similarity matrix (higher = more similar)."""
    if len(query_ids) == 0 or len(gallery_ids) == 0:
        raise ValueError("empty split")
    scores = np.asarray(scores)
    if scores.shape != (len(query_ids), len(gallery_ids)):
        raise ValueError(f"score matrix shape {scores.shape} != ({len(query_ids)}, {len(gallery_ids)})")
    ranks = true_match_ranks(scores, query_ids, gallery_ids)
    n_g = len(gallery_ids)
    counts = np.bincount(ranks, minlength=n_g + 2)[1 : n_g + 1]
    return CMCCurve(np.cumsum(counts) / len(query_ids), len(query_ids))


def cmc_curve(split: RetrievalSplit, score_fn) -> CMCCurve:
    """CMC curve with ``score_fn(query_sample, gallery_sample)`` as similarity."""
    if not split.queries or not split.gallery:
        raise ValueError("empty split")
    scores = np.array([[float(score_fn(q, g)) for g, _ in split.gallery] for q, _ in split.queries])
    return cmc_from_scores(scores, [p for _, p in split.queries], [p for _, p in split.gallery])


def embedding_cmc(split: RetrievalSplit, embed_query, embed_gallery) -> CMCCurve:
    """CMC using negative Euclidean distance between batch embeddings."""
    q = np.asarray(embed_query([s for s, _ in split.queries]), dtype=np.float64)
    g = np.asarray(embed_gallery([s for s, _ in split.gallery]), dtype=np.float64)
    d = np.linalg.norm(q[:, None, :] - g[None, :, :], axis=-1)
    return cmc_from_scores(-d, [p for _, p in split.queries], [p for _, p in split.gallery])


def rank_k_rate(curve: CMCCurve, k: int) -> float:
    if not 1 <= k <= len(curve.rates):
        raise ValueError(f"k={k} outside 1..{len(curve.rates)}")
    return float(curve.rates[k - 1])


# ---------------------------------------------------------------------------
# cross-view generation distance


def normalized_image_distance(x1, x2) -> float:
    """‖x1 − x2‖₂ / √(number of values): per-value RMS difference."""
    x1, x2 = np.asarray(x1, dtype=np.float64), np.asarray(x2, dtype=np.float64)
    if x1.shape != x2.shape:
        raise ValueError(f"shape mismatch: {x1.shape} vs {x2.shape}")
    return float(np.linalg.norm((x1 - x2).ravel()) / np.sqrt(x1.size))


def cross_view_generation_distance(net, dataset, n_pairs=64, seed=0) -> float:
    """Mean normalized distance between the two branches' outputs for the same skeleton.

    Each draw picks a cross-view pair (I1, I2) of one person and a skeleton ω,
    then compares G1(ω, I1) against G2(ω, I2) under identical dropout noise.
    """
    if net.steps_taken == 0:
        raise RuntimeError("CPG-Net has not been trained (no optimizer steps taken)")
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    rng = np.random.default_rng([seed, 73])
    pair_idx = rng.integers(len(dataset.pairing), size=n_pairs)
    skel_idx = rng.integers(len(dataset.skeletons), size=n_pairs)
    dtype = cpgnet._dtype(net)
    omega = image_tensor([dataset.skeletons[k] for k in skel_idx], dtype)
    im1 = image_tensor([dataset.view1[dataset.pairing[k][0]] for k in pair_idx], dtype)
    im2 = image_tensor([dataset.view2[dataset.pairing[k][1]] for k in pair_idx], dtype)
    # per-draw noise seeds keep each distance independent of its position in the batch
    out1 = torch.cat([cpgnet.generate(net.G1, omega[i : i + 1], im1[i : i + 1], z=(seed, i)) for i in range(n_pairs)])
    out2 = torch.cat([cpgnet.generate(net.G2, omega[i : i + 1], im2[i : i + 1], z=(seed, i)) for i in range(n_pairs)])
    d = [normalized_image_distance(a.numpy(), b.numpy()) for a, b in zip(out1, out2)]
    return float(np.mean(d))


@dataclass
class TransferProbe:
    """Per-transfer keypoint errors against the driving skeleton and the appearance image."""

    to_skeleton: np.ndarray
    to_appearance: np.ndarray

    @property
    def wins(self) -> int:
        return int(np.count_nonzero(self.to_skeleton < self.to_appearance))

    @property
    def win_rate(self) -> float:
        return self.wins / len(self.to_skeleton)


def pose_transfer_probe(net, estimator, dataset, n_transfers=100, seed=0) -> TransferProbe:
    """Re-extract keypoints from generated samples and compare against both source poses.

    Transfers alternate between the views; each draws a random image of that
    view and a random skeleton.
    """
    from .keypoints import mean_keypoint_error
    from .skeleton import estimate_keypoints

    if n_transfers < 1:
        raise ValueError("n_transfers must be >= 1")
    rng = np.random.default_rng([seed, 79])
    d_skel, d_app = [], []
    for t in range(n_transfers):
        v = 1 + t % 2
        images = dataset.view1 if v == 1 else dataset.view2
        image = images[rng.integers(len(images))]
        omega = dataset.skeletons[rng.integers(len(dataset.skeletons))]
        out = cpgnet.generate(net.G1 if v == 1 else net.G2, omega, image, z=(seed, t))
        kp = estimate_keypoints(estimator, [out])[0]
        d_skel.append(mean_keypoint_error(kp, omega.keypoints))
        d_app.append(mean_keypoint_error(kp, image.keypoints))
    return TransferProbe(np.array(d_skel), np.array(d_app))


# ---------------------------------------------------------------------------
# artifacts


def export_curve(curve: CMCCurve, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "rate"])
        for k, r in enumerate(curve.rates, start=1):
            w.writerow([k, f"{r:.6f}"])
    return path


def read_curve(path) -> CMCCurve:
    with Path(path).open() as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["rank", "rate"]:
        raise ValueError(f"{path}: not a CMC CSV")
    return CMCCurve(np.array([float(r[1]) for r in rows[1:]]), n_queries=0)


def render_curve_plot(curves, labels, path):
    """Line plot of rate against rank, one line per curve."""
    curves, labels = list(curves), list(labels)
    if not labels:
        raise ValueError("need at least one label")
    if len(curves) != len(labels):
        raise ValueError(f"{len(curves)} curves but {len(labels)} labels")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    for c, lab in zip(curves, labels):
        ax.plot(np.arange(1, len(c.rates) + 1), c.rates * 100, marker=".", label=lab)
    ax.set_xlabel("rank")
    ax.set_ylabel("matching rate (%)")
    ax.set_ylim(0, 100)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    try:
        fig.savefig(path, dpi=100)
    finally:
        plt.close(fig)
    return Path(path)


DISTANCE_COLUMNS = ("gen_sharing", "disc_sharing", "distance")


def write_distance_csv(rows, path):
    """rows: iterable of (gen_sharing, disc_sharing, distance)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DISTANCE_COLUMNS)
        for g, d, dist in rows:
            w.writerow([int(g), int(d), f"{dist:.6f}"])
    return path


def read_distance_csv(path):
    with Path(path).open() as fh:
        rows = list(csv.reader(fh))
    return [(int(g), int(d), float(x)) for g, d, x in rows[1:]]
