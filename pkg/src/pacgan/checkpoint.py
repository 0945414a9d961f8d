"""Model checkpoints: a named-tensor container plus a JSON metadata sidecar.

Container layout (all integers little-endian)::

    b"PACGANT\\0"  uint32 version  uint32 n_tensors
    per tensor: uint16 name_len, name (utf-8), uint8 ndim, uint32 dims[ndim],
                float32 values in row-major order

Storage shared between the two branches is written once under its first
name; the sidecar maps every alias to that name so loading can rebuild (and
verify) the sharing.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path

import numpy as np
import torch

from . import cpgnet, crossgan

FORMAT_VERSION = 1
MAGIC = b"PACGANT\0"
SIDECAR_SUFFIX = ".json"
_OPT_PREFIX = "__optim__"


class CheckpointError(ValueError):
    pass


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + SIDECAR_SUFFIX)


# ---------------------------------------------------------------------------
# raw container


def write_tensors(path, tensors: dict):
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(tensors)))
        for name, t in tensors.items():
            arr = np.asarray(t.detach().cpu().numpy(), dtype="<f4")
            raw = name.encode()
            fh.write(struct.pack("<H", len(raw)) + raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes(order="C"))


def read_tensors(path) -> dict:
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc.strerror}") from None
    if buf[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint container")
    version, count = struct.unpack_from("<II", buf, 8)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: container version {version}, this build reads version {FORMAT_VERSION}")
    pos = 16
    out = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", buf, pos)
            name = buf[pos + 2 : pos + 2 + n].decode()
            pos += 2 + n
            (ndim,) = struct.unpack_from("<B", buf, pos)
            shape = struct.unpack_from(f"<{ndim}I", buf, pos + 1)
            pos += 1 + 4 * ndim
            size = int(np.prod(shape, dtype=np.int64))
            arr = np.frombuffer(buf, dtype="<f4", count=size, offset=pos).reshape(shape)
            pos += 4 * size
            out[name] = torch.from_numpy(arr.astype(np.float32))
    except (struct.error, ValueError):
        raise CheckpointError(f"{path}: truncated or corrupt container") from None
    return out


# ---------------------------------------------------------------------------
# model state


def _storage_map(net):
    """(canonical tensors by name, alias -> canonical name) from the module's state."""
    canon, aliases, seen = {}, {}, {}
    for name, t in net.state_dict(keep_vars=True).items():
        key = id(t)
        if key in seen:
            aliases[name] = seen[key]
        else:
            seen[key] = name
            canon[name] = t
    return canon, aliases


def _model_id(net):
    if isinstance(net, cpgnet.CoupledCpgNet):
        return "cpgnet"
    if isinstance(net, crossgan.CoupledCrossGan):
        return "crossgan"
    raise CheckpointError(f"unsupported model type {type(net).__name__}")


def _flatten_optimizer(state):
    tensors, meta = {}, {}
    if state is None:
        return tensors, None
    for which in ("g", "d"):
        sd = state[which]
        for pid, slots in sd["state"].items():
            for key, val in slots.items():
                tensors[f"{_OPT_PREFIX}.{which}.{pid}.{key}"] = torch.as_tensor(val)
        meta[which] = {"param_groups": sd["param_groups"]}
    meta["kind"] = state["kind"]
    return tensors, meta


def _unflatten_optimizer(meta, tensors):
    if meta is None:
        return None
    out = {"kind": meta["kind"]}
    for which in ("g", "d"):
        st = {}
        for name, t in tensors.items():
            _, w, pid, key = name.split(".", 3)
            if w == which:
                st.setdefault(int(pid), {})[key] = t.clone()
        out[which] = {"state": st, "param_groups": meta[which]["param_groups"]}
    return out


def save_checkpoint(net, path, config=None) -> Path:
    """Write ``path`` and its ``.json`` sidecar; returns ``path``."""
    path = Path(path)
    model_id = _model_id(net)
    canon, aliases = _storage_map(net)
    opt_tensors, opt_meta = _flatten_optimizer(net.optimizer_state)
    meta = {
        "format_version": FORMAT_VERSION,
        "model": model_id,
        "arch": dataclasses.asdict(net.arch),
        "ties": aliases,
        "tied_layers": [list(t) for t in net.tied_layers()],
        "steps_taken": net.steps_taken,
        "epochs_trained": net.epochs_trained,
        "optimizer": opt_meta,
        "config": config,
    }
    if model_id == "cpgnet":
        meta["sharing"] = list(net.sharing)
    else:
        meta["delta"] = net.align.delta
    write_tensors(path, {**canon, **opt_tensors})
    sidecar_path(path).write_text(json.dumps(meta, indent=1, sort_keys=True))
    return path


def _arch_from(cls, d):
    return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


def read_metadata(path) -> dict:
    side = sidecar_path(path)
    try:
        meta = json.loads(side.read_text())
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint metadata missing: {side}") from None
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{side}: malformed metadata ({exc.msg})") from None
    if meta.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{side}: checkpoint format version {meta.get('format_version')}, this build reads version {FORMAT_VERSION}"
        )
    return meta


def build_model(meta):
    if meta["model"] == "cpgnet":
        return cpgnet.CoupledCpgNet(_arch_from(cpgnet.CpgArchConfig, meta["arch"]), tuple(meta["sharing"]))
    if meta["model"] == "crossgan":
        return crossgan.CoupledCrossGan(_arch_from(crossgan.CrossGanArchConfig, meta["arch"]), meta["delta"])
    raise CheckpointError(f"unknown model identifier {meta['model']!r}")


def load_checkpoint(path, into=None, expect=None):
    """Restore a model; ``into`` loads into an existing net whose sharing must match.

    ``expect`` ("cpgnet" or "crossgan") rejects checkpoints of the other model.
    """
    meta = read_metadata(path)
    if expect is not None and meta["model"] != expect:
        raise CheckpointError(f"{path}: holds a {meta['model']} model, expected {expect}")
    net = build_model(meta) if into is None else into
    if _model_id(net) != meta["model"]:
        raise CheckpointError(f"{path}: holds a {meta['model']} model, cannot load into {_model_id(net)}")
    canon, aliases = _storage_map(net)
    if aliases != meta["ties"]:
        ours = {tuple(t) for t in net.tied_layers()}
        theirs = {tuple(t) for t in meta["tied_layers"]}
        raise CheckpointError(
            f"{path}: tie mismatch; checkpoint ties {len(theirs)} layer pairs, model ties {len(ours)} "
            f"(sharing {meta.get('sharing', 'fixed')} vs {getattr(net, 'sharing', 'fixed')})"
        )
    tensors = read_tensors(path)
    model_tensors = {k: v for k, v in tensors.items() if not k.startswith(_OPT_PREFIX)}
    missing = set(canon) - set(model_tensors)
    extra = set(model_tensors) - set(canon)
    if missing or extra:
        raise CheckpointError(f"{path}: tensor names differ from the model (missing {sorted(missing)[:3]}, extra {sorted(extra)[:3]})")
    with torch.no_grad():
        for name, dst in canon.items():
            src = model_tensors[name]
            if tuple(src.shape) != tuple(dst.shape):
                raise CheckpointError(f"{path}: shape mismatch for {name}: stored {tuple(src.shape)}, model {tuple(dst.shape)}")
            dst.copy_(src.to(dst.dtype))
    net.steps_taken = meta["steps_taken"]
    net.epochs_trained = meta["epochs_trained"]
    net.optimizer_state = _unflatten_optimizer(
        meta["optimizer"], {k: v for k, v in tensors.items() if k.startswith(_OPT_PREFIX)}
    )
    net.eval()
    return net
