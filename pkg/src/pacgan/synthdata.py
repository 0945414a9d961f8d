"""Deterministic synthetic cross-view pedestrian corpus.

Each identity is a colored stick figure (torso garment, sleeves, trousers,
skin/head). Poses come from a bounded articulated-figure model. Camera view 2
differs from view 1 by a fixed horizontal shear of the figure and a hue
rotation of the whole frame.

On-disk layout::

    <root>/manifest                     JSON: sizes, counts, seed, per-sample table
    <root>/view1/<person>_<pose>.png    8-bit RGB
    <root>/view1/<person>_<pose>.kpts   ground-truth joints of that image
    <root>/view2/...
    <root>/skeletons/<id>.png, <id>.kpts
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import _raster
from .keypoints import NUM_JOINTS, KeypointSet, read_kpts, write_kpts
from .skeleton import SkeletonSample, rasterize_skeleton

DEFAULT_IMAGE_SIZE = (32, 16)
MANIFEST_NAME = "manifest"
FORMAT_VERSION = 1

# figure model, lengths in units of image height
_ASPECT = 2.0  # height / width of the frames the figure is laid out for
_HEAD = 0.09
_SHOULDER = 0.07
_HIP = 0.045
_TORSO = 0.28
_UPPER_ARM, _FOREARM = 0.13, 0.12
_THIGH, _SHIN = 0.17, 0.16

VIEW2_SHEAR = 0.2
VIEW2_HUE_DEGREES = 50.0
BACKGROUND = (0.42, 0.47, 0.55)


class Origin(str, enum.Enum):
    ORIGINAL = "original"
    SYNTHESIZED = "synthesized"


class DatasetError(ValueError):
    """Raised for unreadable or inconsistent dataset directories."""


@dataclass(frozen=True)
class AppearanceSpec:
    identity_id: int
    torso_color: tuple
    limb_color: tuple
    head_color: tuple
    # torso garment length, sleeve length, head radius, limb width (fractions of image height)
    body_proportions: tuple


@dataclass(eq=False)
class ImageSample:
    pixels: np.ndarray
    view_id: int
    person_id: int | None = None
    pose_id: int | None = None
    origin: Origin = Origin.ORIGINAL
    keypoints: KeypointSet | None = None

    def __post_init__(self):
        if self.view_id not in (1, 2):
            raise ValueError(f"view_id must be 1 or 2, got {self.view_id}")
        self.origin = Origin(self.origin)

    @property
    def size(self):
        return tuple(self.pixels.shape[:2])

    def __eq__(self, other):
        if not isinstance(other, ImageSample):
            return NotImplemented
        return (
            self.view_id == other.view_id
            and self.person_id == other.person_id
            and self.pose_id == other.pose_id
            and self.origin == other.origin
            and self.keypoints == other.keypoints
            and self.pixels.shape == other.pixels.shape
            and np.array_equal(self.pixels, other.pixels)
        )


@dataclass(eq=False)
class CrossViewDataset:
    view1: list
    view2: list
    skeletons: list
    pairing: list
    image_size: tuple = DEFAULT_IMAGE_SIZE
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.pairing = [(int(i), int(j)) for i, j in self.pairing]
        for i, j in self.pairing:
            if self.view1[i].person_id != self.view2[j].person_id:
                raise ValueError(f"pairing ({i}, {j}) joins different persons")

    def __eq__(self, other):
        if not isinstance(other, CrossViewDataset):
            return NotImplemented
        return (
            tuple(self.image_size) == tuple(other.image_size)
            and self.view1 == other.view1
            and self.view2 == other.view2
            and self.skeletons == other.skeletons
            and self.pairing == other.pairing
        )

    def view(self, view_id):
        return self.view1 if view_id == 1 else self.view2

    def person_ids(self, view_id):
        return sorted({s.person_id for s in self.view(view_id)})


def _derived_seed(*parts):
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def make_identity(seed: int) -> AppearanceSpec:
    if seed < 0:
        raise ValueError("seed must be >= 0")
    rng = np.random.default_rng([seed, 11])
    colors = rng.uniform(0.0, 1.0, size=(2, 3))
    skin = rng.uniform(0.45, 1.0) * np.array([1.0, rng.uniform(0.65, 0.85), rng.uniform(0.45, 0.7)])
    props = (
        rng.uniform(0.24, 0.30),  # garment reaches from the neck this far down the torso
        rng.uniform(0.06, 0.25),  # sleeve length along the arm
        rng.uniform(0.055, 0.075),
        rng.uniform(0.06, 0.10),
    )
    rnd = lambda a: tuple(round(float(v), 6) for v in a)
    return AppearanceSpec(seed, rnd(colors[0]), rnd(colors[1]), rnd(skin), rnd(props))


def _to_norm(origin, offset_h):
    """Offset in height units to normalized image coordinates."""
    return np.array([origin[0] + offset_h[0] * _ASPECT, origin[1] + offset_h[1]])


def make_pose(seed: int) -> KeypointSet:
    """Sample a standing figure with bounded joint angles; all joints stay in frame."""
    if seed < 0:
        raise ValueError("seed must be >= 0")
    rng = np.random.default_rng([seed, 23])
    u = rng.uniform
    pts = np.zeros((NUM_JOINTS, 2))
    neck = np.array([0.5 + u(-0.05, 0.05), 0.2 + u(-0.02, 0.02)])
    lean = u(-0.12, 0.12)
    down = np.array([np.sin(lean), np.cos(lean)])
    across = np.array([np.cos(lean), -np.sin(lean)])  # toward image right

    def limb(start, angle, length, side):
        # angle measured from straight down, positive swings outward
        return _to_norm(start, length * np.array([side * np.sin(angle), np.cos(angle)]))

    tilt = u(-0.25, 0.25)
    pts[0] = _to_norm(neck, _HEAD * np.array([np.sin(tilt), -np.cos(tilt)]))
    pts[1] = neck
    pelvis = _to_norm(neck, _TORSO * down)
    for side, (sh, el, wr) in ((-1, (2, 3, 4)), (1, (5, 6, 7))):
        pts[sh] = _to_norm(neck, side * _SHOULDER * across)
        a_up = u(-0.3, 1.2)
        pts[el] = limb(pts[sh], a_up, _UPPER_ARM, side)
        pts[wr] = limb(pts[el], a_up + u(-1.3, 1.3), _FOREARM, side)
    for side, (hp, kn, an) in ((-1, (8, 9, 10)), (1, (11, 12, 13))):
        pts[hp] = _to_norm(pelvis, side * _HIP * across)
        a_th = u(-0.2, 0.45)
        pts[kn] = limb(pts[hp], a_th, _THIGH, side)
        pts[an] = limb(pts[kn], a_th + u(-0.6, 0.25), _SHIN, side)
    return KeypointSet(np.round(np.clip(pts, 0.0, 1.0), 6), np.ones(NUM_JOINTS))


def view_keypoints(pose: KeypointSet, view_id: int) -> KeypointSet:
    """Joint positions as seen from a camera view (view 2 is horizontally sheared)."""
    if view_id not in (1, 2):
        raise ValueError(f"view_id must be 1 or 2, got {view_id}")
    if view_id == 1:
        return pose
    pts = pose.points.copy()
    pts[:, 0] = pts[:, 0] + VIEW2_SHEAR * (pts[:, 1] - 0.5)
    return KeypointSet(np.round(np.clip(pts, 0.0, 1.0), 6), pose.confidences, pose.limb_topology)


def _partial_polyline(points, length):
    """Cut a polyline (in pixels) after ``length`` pixels of arc; returns its segments."""
    out = []
    remaining = length
    for a, b in zip(points[:-1], points[1:]):
        seg = float(np.hypot(*(b - a)))
        if remaining <= 0:
            break
        if seg <= remaining:
            out.append((a, b))
        else:
            out.append((a, a + (b - a) * (remaining / seg)))
        remaining -= seg
    return out


def render_pedestrian(appearance: AppearanceSpec, pose: KeypointSet, view_id: int, size=DEFAULT_IMAGE_SIZE) -> ImageSample:
    kp = view_keypoints(pose, view_id)
    h, w = size
    px = kp.to_pixels(size)
    garment, sleeve, head_r, limb_w = appearance.body_proportions
    scale = h - 1
    limb_half = max(limb_w * scale / 2.0, 0.5)
    canvas = np.empty((h, w, 3))
    canvas[:] = BACKGROUND

    def stroke(p0, p1, half, color):
        _raster.paint(canvas, _raster.coverage(_raster.segment_distance(size, p0, p1), half), color)

    for hp, kn, an in ((8, 9, 10), (11, 12, 13)):
        stroke(px[hp], px[kn], limb_half, appearance.limb_color)
        stroke(px[kn], px[an], limb_half, appearance.limb_color)
    pelvis = (px[8] + px[11]) / 2.0
    torso_dir = pelvis - px[1]
    torso_len = max(float(np.hypot(*torso_dir)), 1e-6)
    garment_end = px[1] + torso_dir * min(garment * scale / torso_len, 1.1)
    torso_half = max(float(np.hypot(*(px[5] - px[2]))) / 2.0, 1.0)
    stroke(px[1], pelvis, torso_half * 0.8, appearance.head_color)
    stroke(px[1], garment_end, torso_half, appearance.torso_color)
    for sh, el, wr in ((2, 3, 4), (5, 6, 7)):
        stroke(px[sh], px[el], limb_half, appearance.head_color)
        stroke(px[el], px[wr], limb_half, appearance.head_color)
        for a, b in _partial_polyline(px[[sh, el, wr]], sleeve * scale):
            stroke(a, b, limb_half, appearance.torso_color)
    stroke(px[0], px[0], head_r * scale, appearance.head_color)
    if view_id == 2:
        canvas = _raster.hue_rotate(canvas, VIEW2_HUE_DEGREES)
    return ImageSample(_raster.quantize8(canvas), view_id, appearance.identity_id, None, Origin.ORIGINAL, kp)


def _pose_key(kp):
    return tuple(np.round(kp.points, 6).ravel().tolist())


def generate_dataset(n_identities=32, n_poses_per_identity=8, n_skeletons=16, image_size=DEFAULT_IMAGE_SIZE, seed=0) -> CrossViewDataset:
    for name, v in (("n_identities", n_identities), ("n_poses_per_identity", n_poses_per_identity), ("n_skeletons", n_skeletons)):
        if int(v) < 1:
            raise ValueError(f"{name} must be >= 1, got {v}")
    if min(image_size) < 2:
        raise ValueError(f"image_size too small: {image_size}")
    if n_identities >= 100_000:
        raise ValueError("n_identities must be < 100000")
    image_size = tuple(int(v) for v in image_size)
    view1, view2 = [], []
    used = set()
    for i in range(n_identities):
        app = make_identity(seed * 100_000 + i)
        for p in range(n_poses_per_identity):
            pose = make_pose(_derived_seed(seed, 1, i, p))
            used.add(_pose_key(pose))
            pose_id = i * n_poses_per_identity + p
            for view_list, v in ((view1, 1), (view2, 2)):
                s = render_pedestrian(app, pose, v, image_size)
                s.pose_id = pose_id
                view_list.append(s)
    skeletons = []
    base = n_identities * n_poses_per_identity
    attempt = 0
    while len(skeletons) < n_skeletons:
        pose = make_pose(_derived_seed(seed, 2, attempt))
        attempt += 1
        key = _pose_key(pose)
        if key in used:
            continue
        used.add(key)
        skeletons.append(rasterize_skeleton(pose, image_size, skeleton_id=base + len(skeletons)))
    meta = {
        "seed": int(seed),
        "n_identities": int(n_identities),
        "n_poses_per_identity": int(n_poses_per_identity),
        "n_skeletons": int(n_skeletons),
    }
    pairing = [(k, k) for k in range(len(view1))]
    return CrossViewDataset(view1, view2, skeletons, pairing, image_size, meta)


# ---------------------------------------------------------------------------
# persistence


def _write_png(path, pixels):
    Image.fromarray(np.round(np.clip(pixels, 0, 1) * 255).astype(np.uint8), mode="RGB").save(path)


def _read_png(path):
    try:
        with Image.open(path) as im:
            im.load()
            arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    except Exception as exc:  # PIL raises a zoo of types for bad files
        raise DatasetError(f"{path}: cannot decode image ({exc})") from exc
    return arr.astype(np.float32)


def sample_stem(s: ImageSample):
    return f"{s.person_id}_{s.pose_id}"


def save_dataset(ds: CrossViewDataset, path):
    root = Path(path)
    entries = {}
    for name, samples in (("view1", ds.view1), ("view2", ds.view2)):
        d = root / name
        d.mkdir(parents=True, exist_ok=True)
        rows = []
        used = {}
        for s in samples:
            stem = sample_stem(s)
            # synthesized samples can repeat (person, pose); number the repeats
            n = used.get(stem, 0)
            used[stem] = n + 1
            if n:
                stem = f"{stem}_{n}"
            _write_png(d / f"{stem}.png", s.pixels)
            row = {"file": f"{stem}.png", "person_id": s.person_id, "pose_id": s.pose_id, "origin": s.origin.value}
            if s.keypoints is not None:
                write_kpts(d / f"{stem}.kpts", s.keypoints)
                row["kpts"] = f"{stem}.kpts"
            rows.append(row)
        entries[name] = rows
    sk_dir = root / "skeletons"
    sk_dir.mkdir(parents=True, exist_ok=True)
    sk_rows = []
    for k, sk in enumerate(ds.skeletons):
        sid = sk.skeleton_id if sk.skeleton_id is not None else k
        _write_png(sk_dir / f"{sid}.png", sk.rendered)
        write_kpts(sk_dir / f"{sid}.kpts", sk.keypoints)
        sk_rows.append({"id": sid, "file": f"{sid}.png", "kpts": f"{sid}.kpts"})
    manifest = {
        "format": "pacgan-dataset",
        "version": FORMAT_VERSION,
        "image_size": list(ds.image_size),
        **{k: v for k, v in ds.meta.items() if k not in ("image_size",)},
        "counts": {"view1": len(ds.view1), "view2": len(ds.view2), "skeletons": len(ds.skeletons)},
        "view1": entries["view1"],
        "view2": entries["view2"],
        "skeletons": sk_rows,
        "pairing": [list(p) for p in ds.pairing],
    }
    (root / MANIFEST_NAME).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return root


def load_dataset(path) -> CrossViewDataset:
    root = Path(path)
    if not root.is_dir():
        raise DatasetError(f"{root}: dataset directory does not exist")
    mpath = root / MANIFEST_NAME
    if not mpath.is_file():
        raise DatasetError(f"{mpath}: manifest missing")
    try:
        manifest = json.loads(mpath.read_text())
        size = tuple(int(v) for v in manifest["image_size"])
        rows = {k: manifest[k] for k in ("view1", "view2", "skeletons", "pairing")}
    except (ValueError, KeyError, TypeError) as exc:
        raise DatasetError(f"{mpath}: malformed manifest ({exc})") from exc
    if manifest.get("version", FORMAT_VERSION) != FORMAT_VERSION:
        raise DatasetError(f"{mpath}: unsupported format version {manifest.get('version')}")
    views = {}
    for vid, name in ((1, "view1"), (2, "view2")):
        d = root / name
        if not d.is_dir():
            raise DatasetError(f"{d}: view directory missing")
        samples = []
        for row in rows[name]:
            f = d / row["file"]
            if not f.is_file():
                raise DatasetError(f"{f}: image file missing")
            px = _read_png(f)
            if px.shape[:2] != size:
                raise DatasetError(f"{f}: image size {px.shape[:2]} != manifest size {size}")
            kp = read_kpts(d / row["kpts"]) if row.get("kpts") else None
            samples.append(ImageSample(px, vid, row.get("person_id"), row.get("pose_id"), row.get("origin", "original"), kp))
        views[vid] = samples
    sk_dir = root / "skeletons"
    skeletons = []
    for row in rows["skeletons"]:
        f = sk_dir / row["file"]
        if not f.is_file():
            raise DatasetError(f"{f}: skeleton image missing")
        px = _read_png(f)
        kp = read_kpts(sk_dir / row["kpts"])
        skeletons.append(SkeletonSample(kp, px, row.get("id")))
    meta = {k: manifest[k] for k in ("seed", "n_identities", "n_poses_per_identity", "n_skeletons") if k in manifest}
    try:
        return CrossViewDataset(views[1], views[2], skeletons, rows["pairing"], size, meta)
    except (ValueError, IndexError) as exc:
        raise DatasetError(f"{mpath}: inconsistent pairing ({exc})") from exc


def load_image_folders(path, image_size=DEFAULT_IMAGE_SIZE) -> CrossViewDataset:
    """Build a dataset from bare ``view1/``, ``view2/`` folders of ``<person>_<pose>.png`` files.

    Images are resized to ``image_size``; no keypoints or skeletons are
    attached. Pairs join the first view-2 image of each person to every view-1
    image of that person.
    """
    root = Path(path)
    views = {}
    for vid in (1, 2):
        d = root / f"view{vid}"
        if not d.is_dir():
            raise DatasetError(f"{d}: view directory missing")
        samples = []
        for f in sorted(d.glob("*.png")):
            try:
                person, pose = (int(t) for t in f.stem.split("_")[:2])
            except ValueError as exc:
                raise DatasetError(f"{f}: file name is not <person>_<pose>.png") from exc
            try:
                with Image.open(f) as im:
                    im = im.convert("RGB").resize((image_size[1], image_size[0]), Image.BILINEAR)
                    px = np.asarray(im, dtype=np.float32) / 255.0
            except Exception as exc:
                raise DatasetError(f"{f}: cannot decode image ({exc})") from exc
            samples.append(ImageSample(px, vid, person, pose))
        views[vid] = samples
    first2 = {}
    for j, s in enumerate(views[2]):
        first2.setdefault(s.person_id, j)
    pairing = [(i, first2[s.person_id]) for i, s in enumerate(views[1]) if s.person_id in first2]
    return CrossViewDataset(views[1], views[2], [], pairing, tuple(image_size), {})
