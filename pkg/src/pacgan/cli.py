"""Command-line entry points wiring the pipeline stages together.

    pacgan gen-data        --out DIR
    pacgan train-cpgnet    --data DIR [--resume CKPT] --out DIR
    pacgan augment         --checkpoint CKPT --data DIR --out DIR
    pacgan train-crossgan  --data AUG_DIR [--resume CKPT] --out DIR
    pacgan eval            --checkpoint CKPT --data DIR [--oracle] --out DIR
    pacgan ablate-sharing  --data DIR --out DIR

Global flags: ``--config PATH``, ``--seed N``, ``--out DIR``, repeatable
``--set section.key=value``.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from . import checkpoint as ckpt
from . import cpgnet, crossgan, evaluation, synthdata
from .config import ConfigError, load_config

log = logging.getLogger("pacgan")

CPG_CHECKPOINT = "cpgnet.ckpt"
CROSSGAN_CHECKPOINT = "crossgan.ckpt"


def write_loss_csv(path, train_log):
    """``epoch,<components>,total`` with one row per trained epoch."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", *train_log.columns])
        for row in train_log.rows:
            w.writerow([row["epoch"]] + [f"{row[c]:.9g}" for c in train_log.columns])
    return Path(path)


def read_loss_csv(path):
    with Path(path).open() as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(v) if k == "epoch" else float(v)) for k, v in r.items()} for r in rows]


# ---------------------------------------------------------------------------
# config → library objects


def cpg_arch(cfg):
    c = cfg.cpgnet
    return cpgnet.CpgArchConfig.for_image((cfg.data.height, cfg.data.width), dropout=c.dropout, skip=c.skip)


def cpg_train_config(cfg):
    c = cfg.cpgnet
    return cpgnet.CpgTrainConfig(zeta=c.zeta, lr=c.lr, batch_size=c.batch_size, epochs=c.epochs,
                                 optimizer=c.optimizer, noise=c.noise, targets=c.targets, seed=cfg.run.seed)


def crossgan_arch(cfg):
    return crossgan.CrossGanArchConfig(image_size=(cfg.data.height, cfg.data.width), latent_dim=cfg.crossgan.latent_dim)


def crossgan_train_config(cfg):
    c = cfg.crossgan
    return crossgan.CrossGanTrainConfig(lr=c.lr, batch_size=c.batch_size, epochs=c.epochs, optimizer=c.optimizer,
                                        pairing=c.pairing, delta=c.delta, seed=cfg.run.seed)


def sharing(cfg, arch=None):
    """(p, q, s) from the config, clipped to the depth of ``arch`` when it is shallower."""
    want = (cfg.sharing.p, cfg.sharing.q, cfg.sharing.s)
    if arch is None:
        return want
    got = (min(want[0], arch.m), min(want[1], arch.n), min(want[2], arch.r))
    if got != want:
        log.warning("sharing %s clipped to %s for a %s image", want, got, arch.image_size)
    return got


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(cfg, out):
    d = cfg.data
    ds = synthdata.generate_dataset(d.n_identities, d.n_poses, d.n_skeletons, (d.height, d.width), cfg.run.seed)
    synthdata.save_dataset(ds, out)
    return {"view1": len(ds.view1), "view2": len(ds.view2), "skeletons": len(ds.skeletons)}


def _load_data(path):
    if path is None:
        raise ConfigError("--data is required")
    return synthdata.load_dataset(path)


def cmd_train_cpgnet(cfg, data_path, out, resume=None):
    ds = _load_data(data_path)
    if resume is not None:
        net = ckpt.load_checkpoint(resume, expect="cpgnet")
    else:
        arch = cpg_arch(cfg)
        net = cpgnet.CoupledCpgNet(arch, sharing(cfg, arch), seed=cfg.run.seed)
    net, train_log = cpgnet.train_cpgnet(net, ds, cpg_train_config(cfg))
    out.mkdir(parents=True, exist_ok=True)
    ckpt.save_checkpoint(net, out / CPG_CHECKPOINT, cfg.to_dict())
    write_loss_csv(out / "cpgnet_loss.csv", train_log)
    return {"epochs": len(train_log.rows), "checkpoint": str(out / CPG_CHECKPOINT)}


def augmented_dataset(ds, net, per_image, seed, batch_size=64):
    """Definition-2 augmentation of both views, returned as a dataset with label pairs."""
    if per_image == 0:
        A1, A2 = list(ds.view1), list(ds.view2)
    else:
        n = len(ds.skeletons)
        pairs = None if per_image >= n else cpgnet.select_pairs(min(len(ds.view1), len(ds.view2)), n, per_image, seed)
        A1, A2 = cpgnet.augment_dataset(net, ds.view1, ds.view2, ds.skeletons, pairs, seed, batch_size)
    pairing = crossgan.match_by_key(A1, A2)
    meta = dict(ds.meta, augmented=True, per_image=per_image)
    return synthdata.CrossViewDataset(A1, A2, list(ds.skeletons), pairing, ds.image_size, meta)


def cmd_augment(cfg, checkpoint_path, data_path, out):
    if checkpoint_path is None:
        raise ConfigError("--checkpoint is required")
    ds = _load_data(data_path)
    net = ckpt.load_checkpoint(checkpoint_path, expect="cpgnet")
    if tuple(net.arch.image_size) != tuple(ds.image_size):
        raise ckpt.CheckpointError(
            f"{checkpoint_path}: model image size {tuple(net.arch.image_size)} != dataset size {tuple(ds.image_size)}"
        )
    aug = augmented_dataset(ds, net, cfg.augment.per_image, cfg.run.seed, cfg.augment.batch_size)
    synthdata.save_dataset(aug, out)
    return {"view1": len(aug.view1), "view2": len(aug.view2)}


def cmd_train_crossgan(cfg, data_path, out, resume=None):
    ds = _load_data(data_path)
    if resume is not None:
        net = ckpt.load_checkpoint(resume, expect="crossgan")
    else:
        net = crossgan.CoupledCrossGan(crossgan_arch(cfg), cfg.crossgan.delta, seed=cfg.run.seed)
    net, train_log = crossgan.train_crossgan(net, ds.view1, ds.view2, crossgan_train_config(cfg))
    out.mkdir(parents=True, exist_ok=True)
    ckpt.save_checkpoint(net, out / CROSSGAN_CHECKPOINT, cfg.to_dict())
    write_loss_csv(out / "crossgan_loss.csv", train_log)
    return {"epochs": len(train_log.rows), "checkpoint": str(out / CROSSGAN_CHECKPOINT)}


def crossgan_cmc(net, split):
    return evaluation.embedding_cmc(split, lambda xs: crossgan.embed(net, xs, 1), lambda xs: crossgan.embed(net, xs, 2))


def oracle_cmc(split):
    return evaluation.cmc_curve(split, lambda q, g: float(q.person_id == g.person_id))


def cmd_eval(cfg, checkpoint_path, data_path, out, oracle=False):
    ds = _load_data(data_path)
    split = evaluation.single_shot_split(ds, cfg.run.seed)
    if oracle or cfg.eval.oracle:
        curve, label = oracle_cmc(split), "oracle"
    else:
        if checkpoint_path is None:
            raise ConfigError("--checkpoint is required unless --oracle is given")
        net = ckpt.load_checkpoint(checkpoint_path, expect="crossgan")
        curve, label = crossgan_cmc(net, split), "Cross-GAN"
    out.mkdir(parents=True, exist_ok=True)
    evaluation.export_curve(curve, out / "cmc.csv")
    evaluation.render_curve_plot([curve], [label], out / "cmc.png")
    ks = [k for k in (1, 5, 10, 20) if k <= len(curve)]
    return {f"rank{k}": round(evaluation.rank_k_rate(curve, k), 6) for k in ks}


ABLATION_GRID = ((1, 2), (4, 2), (4, 0), (4, 4))


def ablation_configs(arch):
    """(p=q, s) points: generator sharing swept at the default s, discriminator sharing swept at full p=q."""
    gen_hi = min(4, arch.m, arch.n)
    return [(min(g, gen_hi), min(d, arch.r)) for g, d in ABLATION_GRID]


def sharing_distance(cfg, ds, gen, disc, seed, epochs):
    c = cfg.cpgnet
    tcfg = cpgnet.CpgTrainConfig(zeta=c.zeta, lr=c.lr, batch_size=c.batch_size, epochs=epochs,
                                 optimizer=c.optimizer, noise=c.noise, targets=c.targets, seed=seed)
    net = cpgnet.CoupledCpgNet(cpg_arch(cfg), (gen, gen, disc), seed=seed)
    cpgnet.train_cpgnet(net, ds, tcfg)
    return evaluation.cross_view_generation_distance(net, ds, cfg.eval.n_pairs, seed)


def cmd_ablate_sharing(cfg, data_path, out):
    ds = _load_data(data_path)
    e = cfg.eval
    rows = []
    for gen, disc in ablation_configs(cpg_arch(cfg)):
        dists = [sharing_distance(cfg, ds, gen, disc, cfg.run.seed + k, e.ablation_epochs) for k in range(e.ablation_seeds)]
        rows.append((gen, disc, float(np.mean(dists))))
        log.info("sharing p=q=%d s=%d: distance %.4f", gen, disc, rows[-1][2])
    out.mkdir(parents=True, exist_ok=True)
    evaluation.write_distance_csv(rows, out / "sharing_distance.csv")
    return {f"g{g}_d{d}": round(x, 6) for g, d, x in rows}


# ---------------------------------------------------------------------------
# argument handling


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI run configuration")
    common.add_argument("--seed", type=int, help="global seed (overrides run.seed)")
    common.add_argument("--out", type=Path, help="output directory (overrides run.out)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="pacgan", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[common], help="write the synthetic cross-view corpus")
    p = sub.add_parser("train-cpgnet", parents=[common], help="train the coupled pose generator")
    p.add_argument("--data", type=Path)
    p.add_argument("--resume", type=Path)
    p = sub.add_parser("augment", parents=[common], help="write the pose-augmented dataset")
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--data", type=Path)
    p = sub.add_parser("train-crossgan", parents=[common], help="train the cross-view matcher")
    p.add_argument("--data", type=Path)
    p.add_argument("--resume", type=Path)
    p = sub.add_parser("eval", parents=[common], help="single-shot CMC evaluation")
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--data", type=Path)
    p.add_argument("--oracle", action="store_true", help="score by ground-truth identity")
    p = sub.add_parser("ablate-sharing", parents=[common], help="weight-sharing sweep of the cross-view distance")
    p.add_argument("--data", type=Path)
    return parser


def run(args):
    cfg = load_config(args.config, args.overrides)
    if args.seed is not None:
        cfg.run.seed = args.seed
    if args.out is not None:
        cfg.run.out = str(args.out)
    out = Path(cfg.run.out)
    torch.manual_seed(cfg.run.seed)
    if args.command == "gen-data":
        return cmd_gen_data(cfg, out)
    if args.command == "train-cpgnet":
        return cmd_train_cpgnet(cfg, args.data, out, args.resume)
    if args.command == "augment":
        return cmd_augment(cfg, args.checkpoint, args.data, out)
    if args.command == "train-crossgan":
        return cmd_train_crossgan(cfg, args.data, out, args.resume)
    if args.command == "eval":
        return cmd_eval(cfg, args.checkpoint, args.data, out, args.oracle)
    if args.command == "ablate-sharing":
        return cmd_ablate_sharing(cfg, args.data, out)
    raise ConfigError(f"unknown command {args.command}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        summary = run(args)
    except (ConfigError, ckpt.CheckpointError, synthdata.DatasetError, ValueError, RuntimeError, OSError) as exc:
        print(f"pacgan {args.command}: error: {exc}", file=sys.stderr)
        return 1
    print(" ".join(f"{k}={v}" for k, v in summary.items()))
    return 0


if __name__ == "__main__":
    sys.exit(main())
