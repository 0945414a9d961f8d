"""Keypoint sets for the 14-joint articulated figure and their text format."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

JOINT_NAMES = (
    "head",
    "neck",
    "r_shoulder",
    "r_elbow",
    "r_wrist",
    "l_shoulder",
    "l_elbow",
    "l_wrist",
    "r_hip",
    "r_knee",
    "r_ankle",
    "l_hip",
    "l_knee",
    "l_ankle",
)
NUM_JOINTS = len(JOINT_NAMES)

# (parent, child) pairs; a tree rooted at the neck
LIMBS = (
    (1, 0),
    (1, 2),
    (2, 3),
    (3, 4),
    (1, 5),
    (5, 6),
    (6, 7),
    (1, 8),
    (8, 9),
    (9, 10),
    (1, 11),
    (11, 12),
    (12, 13),
)
NUM_LIMBS = len(LIMBS)


def _is_tree(n_nodes, edges):
    if len(edges) != n_nodes - 1:
        return False
    parent = list(range(n_nodes))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra == rb:
            return False
        parent[ra] = rb
    return True


@dataclass(eq=False)
class KeypointSet:
    """K ordered joints in normalized image space.

    ``points[:, 0]`` is x (column direction), ``points[:, 1]`` is y (row
    direction), both in [0, 1]. Pixel coordinates follow the endpoint-inclusive
    convention ``col = x * (W - 1)``, ``row = y * (H - 1)``.
    """

    points: np.ndarray
    confidences: np.ndarray
    limb_topology: tuple = LIMBS

    def __post_init__(self):
        self.points = np.clip(np.asarray(self.points, dtype=np.float64), 0.0, 1.0)
        self.confidences = np.clip(np.asarray(self.confidences, dtype=np.float64), 0.0, 1.0)
        if self.points.shape != (NUM_JOINTS, 2):
            raise ValueError(f"expected {NUM_JOINTS} points of shape (2,), got {self.points.shape}")
        if self.confidences.shape != (NUM_JOINTS,):
            raise ValueError(f"expected {NUM_JOINTS} confidences, got {self.confidences.shape}")
        self.limb_topology = tuple(tuple(int(i) for i in e) for e in self.limb_topology)
        if not _is_tree(NUM_JOINTS, self.limb_topology):
            raise ValueError("limb topology must be a spanning tree over the joints")

    def __eq__(self, other):
        if not isinstance(other, KeypointSet):
            return NotImplemented
        return (
            np.array_equal(self.points, other.points)
            and np.array_equal(self.confidences, other.confidences)
            and self.limb_topology == other.limb_topology
        )

    def to_pixels(self, size):
        """Return (K, 2) array of (col, row) pixel coordinates."""
        h, w = size
        return self.points * np.array([w - 1, h - 1], dtype=np.float64)

    def rounded(self, decimals=6):
        return KeypointSet(np.round(self.points, decimals), np.round(self.confidences, decimals), self.limb_topology)


def mean_keypoint_error(a, b, size=None):
    """Mean Euclidean joint distance; in pixels when ``size`` is given, else normalized units."""
    pa = a.points if isinstance(a, KeypointSet) else np.asarray(a)
    pb = b.points if isinstance(b, KeypointSet) else np.asarray(b)
    if size is not None:
        scale = np.array([size[1] - 1, size[0] - 1], dtype=np.float64)
        pa, pb = pa * scale, pb * scale
    return float(np.mean(np.linalg.norm(pa - pb, axis=1)))


def write_kpts(path, kp):
    lines = [f"{x:.6f} {y:.6f} {c:.6f}" for (x, y), c in zip(kp.points, kp.confidences)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_kpts(path):
    path = Path(path)
    try:
        rows = [line.split() for line in path.read_text().splitlines() if line.strip()]
        arr = np.array(rows, dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise ValueError(f"{path}: cannot parse keypoint file ({exc})") from exc
    if arr.shape != (NUM_JOINTS, 3):
        raise ValueError(f"{path}: expected {NUM_JOINTS} lines of 'x y confidence', got shape {arr.shape}")
    return KeypointSet(arr[:, :2], arr[:, 2])
