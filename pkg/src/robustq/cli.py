"""Command-line front end: train / eval / surface / bound / gradcheck / dataset.

Every command resolves a flat RunConfig (defaults < --config file < flags),
writes the fully-resolved config next to its outputs, and exits 0 only when
all requested outputs were written.  Budgets given on the command line
(--eps, --alpha, --eps-max) are in /255 pixel units, as robustness tables
conventionally quote them; internally everything lives in [0, 1].
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import engine
from .attacks import ATTACK_KINDS, AttackSpec
from .data import (DataFormatError, load_checkpoint, load_cifar10,
                   load_mnist, mnist_paths, save_checkpoint)
from .digits import build_digits_corpus
from .evaluate import bound_report, evaluate, loss_surface
from .mmd import MMDError
from .model import ArchConfig, Model, build_model
from .quantize import QuantError
from .train import PerturbationSet, TrainConfig, train_natural, train_odgq

DEFAULTS = {
    # data
    "dataset": "mnist",
    "data_dir": None,          # None: synthesize the stand-in digit corpus
    "train_limit": None,
    "test_limit": None,
    # architecture
    "in_channels": 1,
    "num_classes": 10,
    "widths": [8, 16, 32],
    "blocks_per_stage": 1,
    "bits_w": 4,
    "bits_a": 4,
    "quantize_first_last": False,
    "binarize_granularity": "per_channel",
    # training
    "mode": "odgq",
    "epochs": 40,
    "batch_size": 128,
    "lr": 0.1,
    "momentum": 0.9,
    "weight_decay": 0.0,
    "lr_decay": 0.1,
    "milestones": None,
    "lam": None,               # None: 3.0, or 0.003 for 1-bit weights
    "eps": 8.0,                # /255 units
    "eps_local": None,         # /255 units; None: same as eps
    "n_domains": 4,
    "sigma": None,
    "mmd_grad_natural": False,
    "seed": 0,
    "deterministic": True,
    # evaluation
    "attacks": "gn,fgsm,bim,pgd,tpgd",
    "eval_eps": 8.0,
    "eval_alpha": 4.0,
    "eval_steps": 20,
    "eval_rho": 1.0,
    "eval_batch": 500,
    "attack_seed": 0,
    # surfaces / bound
    "surface_loss": "ce",
    "surface_index": 0,
    "surface_eps_max": 8.0,
    "surface_grid": 25,
    "surface_window": 64,
    "bound_attack": "pgd",
    "bound_cap": 2000,
    # output
    "out_dir": "runs/latest",
}


class CliError(ValueError):
    pass


def _load_config_file(path):
    try:
        with open(path) as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise CliError(f"cannot read config {path}: {e}") from e
    if not isinstance(doc, dict):
        raise CliError(f"config {path} must be a JSON object")
    unknown = sorted(set(doc) - set(DEFAULTS))
    if unknown:
        raise CliError(f"unknown config keys: {', '.join(unknown)}")
    return doc


def resolve_config(args):
    """defaults < config file < explicit CLI flags; returns the flat dict."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(_load_config_file(args.config))
    for key in DEFAULTS:
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    if cfg["lam"] is None:
        cfg["lam"] = 0.003 if cfg["bits_w"] == 1 else 3.0
    return cfg


def _write_resolved(cfg, out_dir, command):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{command}-config.json")
    with open(path, "w") as f:
        json.dump(cfg, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def _config_hash(cfg):
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def _arch_from_cfg(cfg):
    return ArchConfig(
        in_channels=cfg["in_channels"],
        num_classes=cfg["num_classes"],
        widths=tuple(cfg["widths"]),
        blocks_per_stage=cfg["blocks_per_stage"],
        bits_w=cfg["bits_w"],
        bits_a=cfg["bits_a"],
        quantize_first_last=cfg["quantize_first_last"],
        binarize_granularity=cfg["binarize_granularity"],
    )


def _train_cfg(cfg):
    return TrainConfig(
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        lr=cfg["lr"],
        momentum=cfg["momentum"],
        weight_decay=cfg["weight_decay"],
        lr_decay=cfg["lr_decay"],
        milestones=tuple(cfg["milestones"]) if cfg["milestones"] else None,
        lam=cfg["lam"],
        eps=cfg["eps"] / 255.0,
        eps_local=None if cfg["eps_local"] is None else cfg["eps_local"] / 255.0,
        n_domains=cfg["n_domains"],
        sigma=cfg["sigma"],
        mmd_grad_natural=cfg["mmd_grad_natural"],
        seed=cfg["seed"],
    )


def _load_split(cfg, split):
    kind = cfg["dataset"]
    data_dir = cfg["data_dir"]
    if kind == "mnist":
        if data_dir is None:
            data_dir = os.environ.get("ROBUSTQ_MNIST_DIR")
        if data_dir is None:
            data_dir = os.path.join(cfg["out_dir"], "digits-data")
            build_digits_corpus(data_dir)
        imgs, labels = mnist_paths(data_dir, split)
        ds = load_mnist(imgs, labels, split=split)
    elif kind == "cifar10":
        if data_dir is None:
            raise CliError("cifar10 requires data_dir (directory of *.bin batches)")
        names = sorted(n for n in os.listdir(data_dir) if n.endswith(".bin"))
        picked = [n for n in names if ("test" in n) == (split == "test")]
        if not picked:
            raise CliError(f"no cifar10 {split} batches under {data_dir}")
        ds = load_cifar10([os.path.join(data_dir, n) for n in picked], split=split)
    else:
        raise CliError(f"unknown dataset kind {cfg['dataset']!r}")
    limit = cfg["train_limit" if split == "train" else "test_limit"]
    if limit:
        ds = ds.subset(np.arange(min(limit, len(ds))))
    return ds


def _save_pertset(path, pert_set, meta):
    save_checkpoint(path, {
        "store": pert_set.store,
        "update_counts": pert_set.update_counts,
    }, meta)


def _load_pertset(path):
    tensors, meta = load_checkpoint(path)
    if "store" not in tensors:
        raise DataFormatError(f"{path}: not a perturbation-set file (no 'store')")
    store = tensors["store"]
    ps = PerturbationSet(store.shape[0], store.shape[1], store.shape[2:])
    ps.store = store
    ps.update_counts = tensors.get(
        "update_counts", np.zeros(store.shape[0], np.int64))
    return ps, meta


def load_model_checkpoint(path, bits_w=None, bits_a=None):
    """Rebuild (model, params, meta) from a checkpoint.

    bits_w / bits_a override the stored widths for cross-bitwidth
    evaluation; a mismatch is allowed (the parameter tensors are identical
    across bitwidths) but warned about.
    """
    params, meta = load_checkpoint(path)
    if "arch" not in meta:
        raise DataFormatError(f"{path}: checkpoint meta lacks an architecture config")
    arch = ArchConfig.from_dict(meta["arch"])
    overrides = {}
    if bits_w is not None and bits_w != arch.bits_w:
        overrides["bits_w"] = bits_w
    if bits_a is not None and bits_a != arch.bits_a:
        overrides["bits_a"] = bits_a
    if overrides:
        import warnings
        warnings.warn(
            f"bitwidth override {overrides} differs from checkpoint "
            f"(bits_w={arch.bits_w}, bits_a={arch.bits_a}); evaluating anyway")
        d = arch.to_dict()
        d.update(overrides)
        arch = ArchConfig.from_dict(d)
    model = Model(arch)
    expect = set(model.init_params(0))
    got = set(params)
    if expect != got:
        missing, extra = sorted(expect - got), sorted(got - expect)
        raise DataFormatError(
            f"{path}: parameter names do not match the architecture "
            f"(missing {missing[:3]}, unexpected {extra[:3]})")
    return model, params, meta


def _parse_attacks(cfg):
    names = [a.strip() for a in cfg["attacks"].split(",") if a.strip()]
    specs = []
    eps = cfg["eval_eps"] / 255.0
    alpha = cfg["eval_alpha"] / 255.0
    for name in names:
        if name == "natural":
            continue
        if name not in ATTACK_KINDS:
            raise CliError(f"unknown attack name {name!r}; known: {ATTACK_KINDS}")
        specs.append(AttackSpec(
            kind=name, eps=eps, alpha=alpha,
            steps=cfg["eval_steps"] if name in ("bim", "pgd", "tpgd") else 1,
            rho=cfg["eval_rho"], seed=cfg["attack_seed"]))
    return specs


# -- commands -----------------------------------------------------------------


def cmd_train(args):
    cfg = resolve_config(args)
    if cfg["mode"] not in ("natural", "odgq"):
        raise CliError(f"mode must be natural or odgq, got {cfg['mode']!r}")
    out = cfg["out_dir"]
    _write_resolved(cfg, out, "train")
    train_ds = _load_split(cfg, "train")
    arch = _arch_from_cfg(cfg)
    tcfg = _train_cfg(cfg)
    model, params = build_model(arch, seed=cfg["seed"])
    log_path = os.path.join(out, "log.jsonl")
    meta = {
        "arch": arch.to_dict(),
        "mode": cfg["mode"],
        "seed": cfg["seed"],
        "config_hash": _config_hash(cfg),
        "dataset": cfg["dataset"],
        "n_train": len(train_ds),
    }
    with open(log_path, "w") as log_file:
        def hook(epoch, _params, entry):
            log_file.write(json.dumps(entry) + "\n")
            log_file.flush()
            print(f"epoch {entry['epoch']:3d}  loss {entry['task_loss']:.4f}  "
                  f"mmd {entry['mmd_loss']:.5f}  acc {entry['train_acc']:.4f}  "
                  f"lr {entry['lr']:g}  ({entry['wall_time']:.1f}s)")

        if cfg["mode"] == "natural":
            _, log = train_natural(model, params, train_ds, tcfg, epoch_hook=hook)
            epochs_run = len(log)
        else:
            _, log, pert_set = train_odgq(model, params, train_ds, tcfg, epoch_hook=hook)
            epochs_run = len(log)
            _save_pertset(os.path.join(out, "pertset.ckpt"), pert_set,
                          dict(meta, kind="perturbation-set"))
    meta["epoch"] = epochs_run
    save_checkpoint(os.path.join(out, "model.ckpt"), params, meta)
    print(f"wrote {out}/model.ckpt ({epochs_run} epochs)")
    return 0


def cmd_eval(args):
    cfg = resolve_config(args)
    out = cfg["out_dir"]
    _write_resolved(cfg, out, "eval")
    model, params, meta = load_model_checkpoint(args.ckpt, args.bits_w, args.bits_a)
    test_ds = _load_split(cfg, "test")
    specs = _parse_attacks(cfg)
    surrogate = None
    if args.blackbox:
        if not args.surrogate:
            raise CliError("--blackbox requires --surrogate <checkpoint>")
        smodel, surrogate, smeta = load_model_checkpoint(args.surrogate)
        if smeta["arch"] != meta["arch"]:
            raise CliError("surrogate architecture differs from target")
    report = evaluate(model, params, test_ds, specs,
                      batch_size=cfg["eval_batch"], surrogate_params=surrogate,
                      model_label=meta.get("mode", "model"))
    report.meta = {"ckpt": args.ckpt, "eps": cfg["eval_eps"],
                   "alpha": cfg["eval_alpha"], "steps": cfg["eval_steps"]}
    with open(os.path.join(out, "eval-report.json"), "w") as f:
        json.dump(report.to_dict(), f, indent=2)
        f.write("\n")
    table = format_eval_table(report)
    with open(os.path.join(out, "eval-table.txt"), "w") as f:
        f.write(table + "\n")
    print(table)
    return 0


def format_eval_table(report):
    rows = [("natural", report.clean_accuracy, report.clean_loss)]
    rows += [(r.label, r.accuracy, r.mean_loss) for r in report.results]
    name_w = max(len(r[0]) for r in rows) + 2
    lines = [
        f"model: {report.model_label}   samples: {report.n_samples}",
        f"{'attack':<{name_w}}{'accuracy':>10}{'mean loss':>12}",
    ]
    for name, acc, loss in rows:
        lines.append(f"{name:<{name_w}}{acc:>10.4f}{loss:>12.4f}")
    return "\n".join(lines)


def cmd_surface(args):
    cfg = resolve_config(args)
    out = cfg["out_dir"]
    _write_resolved(cfg, out, "surface")
    model, params, _meta = load_model_checkpoint(args.ckpt)
    test_ds = _load_split(cfg, "test")
    kind = {"ce": "cross-entropy", "mmd": "mmd-vs-clean-batch"}.get(
        cfg["surface_loss"], cfg["surface_loss"])
    grid = loss_surface(
        model, params, test_ds, cfg["surface_index"], kind=kind,
        eps_max=cfg["surface_eps_max"] / 255.0, resolution=cfg["surface_grid"],
        seed=cfg["seed"], window=cfg["surface_window"])
    path = os.path.join(out, "surface.csv")
    grid.save_csv(path)
    print(f"wrote {path} ({cfg['surface_grid']}x{cfg['surface_grid']} grid, "
          f"max value {grid.values.max():.4f})")
    return 0


def cmd_bound(args):
    cfg = resolve_config(args)
    out = cfg["out_dir"]
    _write_resolved(cfg, out, "bound")
    model, params, _meta = load_model_checkpoint(args.ckpt)
    pert_set, _pmeta = _load_pertset(args.pertset)
    test_ds = _load_split(cfg, "test")
    spec = AttackSpec(
        kind=cfg["bound_attack"], eps=cfg["eval_eps"] / 255.0,
        alpha=cfg["eval_alpha"] / 255.0, steps=cfg["eval_steps"],
        rho=cfg["eval_rho"], seed=cfg["attack_seed"])
    report = bound_report(
        model, params, pert_set, test_ds, spec,
        eps=cfg["eps"] / 255.0,
        eps_local=None if cfg["eps_local"] is None else cfg["eps_local"] / 255.0,
        sample_cap=cfg["bound_cap"], batch_size=cfg["eval_batch"],
        seed=cfg["seed"])
    path = os.path.join(out, "bound.json")
    with open(path, "w") as f:
        json.dump(report.to_dict(), f, indent=2)
        f.write("\n")
    print(f"target risk {report.target_risk:.4f}  lambda_hat {report.lambda_hat:.4f}  "
          f"rhs {report.rhs:.4f}  holds: {report.holds}")
    return 0


# -- gradient checking --------------------------------------------------------


def _gradcheck_cases():
    """(name, builder, point) for every differentiable primitive."""
    rng = np.random.default_rng(0)
    v6 = rng.standard_normal(6)
    m34 = rng.standard_normal((3, 4))
    img = rng.standard_normal((2, 3, 6, 6))
    w = rng.standard_normal((4, 3, 3, 3)) * 0.4
    other = engine.Tensor(rng.standard_normal((3, 4)))
    w43 = engine.Tensor(rng.standard_normal((4, 3)))
    gamma = engine.Tensor(np.abs(rng.standard_normal(3)) + 0.5, requires_grad=False)
    beta = engine.Tensor(rng.standard_normal(3))
    labels = rng.integers(0, 4, size=3)
    targets = np.abs(rng.standard_normal((3, 4)))
    targets /= targets.sum(axis=1, keepdims=True)
    feat = engine.Tensor(rng.standard_normal((5, 4)))

    def bn_builder(tape, x):
        rm, rv = np.zeros(3), np.ones(3)
        h = engine.batchnorm(tape, x, gamma, beta, mode="train",
                             running_mean=rm, running_var=rv,
                             momentum=0.9, update_running=False)
        return engine.tsum(tape, engine.square(tape, h))

    def sq(tape, t):
        return engine.tsum(tape, engine.square(tape, t))

    cases = [
        ("add", lambda tp, x: sq(tp, engine.add(tp, x, other)), m34),
        ("sub", lambda tp, x: sq(tp, engine.sub(tp, other, x)), m34),
        ("mul-scalar", lambda tp, x: sq(tp, engine.mul_scalar(tp, x, -1.7)), m34),
        ("matmul", lambda tp, x: sq(tp, engine.matmul(tp, x, w43)), m34),
        ("conv2d", lambda tp, x: sq(tp, engine.conv2d(tp, x, engine.Tensor(w), stride=2, pad=1)), img),
        ("relu", lambda tp, x: sq(tp, engine.relu(tp, x)), v6 + np.sign(v6) * 0.05),
        ("batchnorm", bn_builder, img),
        ("avgpool2d", lambda tp, x: sq(tp, engine.avgpool2d(tp, x, (3, 2))), img),
        ("flatten", lambda tp, x: sq(tp, engine.flatten(tp, x)), img),
        ("softmax-cross-entropy",
         lambda tp, x: engine.softmax_cross_entropy(tp, x, labels=labels), m34),
        ("softmax-cross-entropy[soft]",
         lambda tp, x: engine.softmax_cross_entropy(tp, x, targets=targets), m34),
        ("sum", lambda tp, x: engine.tsum(tp, engine.square(tp, engine.tsum(tp, x, axis=0))), m34),
        ("mean", lambda tp, x: engine.tsum(tp, engine.square(tp, engine.tmean(tp, x, axis=1))), m34),
        ("exp", lambda tp, x: engine.tsum(tp, engine.exp(tp, x)), v6 * 0.3),
        ("square", lambda tp, x: engine.tsum(tp, engine.square(tp, x)), v6),
        ("pairwise-sq-dist",
         lambda tp, x: sq(tp, engine.pairwise_sq_dist(tp, x, feat)), m34),
        ("clip", lambda tp, x: engine.tsum(tp, engine.clip(tp, x, -0.5, 0.5)),
         np.linspace(-2, 2, 9) + 0.013),
        ("concat", lambda tp, x: sq(tp, engine.concat(tp, x, other)), m34),
        ("slice-rows", lambda tp, x: sq(tp, engine.slice_rows(tp, x, 1, 3)), m34),
    ]
    return cases


def _gradcheck_model_case():
    """Full-graph check: tiny full-precision model, loss wrt input and weights."""
    from .model import cross_entropy, wrap_params

    arch = ArchConfig(in_channels=2, num_classes=4, widths=(4,), blocks_per_stage=1)
    model, params = build_model(arch, seed=5)
    params64 = {k: v.astype(np.float64) for k, v in params.items()}
    rng = np.random.default_rng(6)
    x0 = rng.uniform(0.1, 0.9, (3, 2, 8, 8))
    labels = rng.integers(0, 4, size=3)

    def wrt_input(tape, x):
        pt = wrap_params({k: v.copy() for k, v in params64.items()},
                         requires_grad=False)
        out = model.forward(tape, pt, x, mode="train", update_running=False)
        return cross_entropy(tape, out.logits, labels)

    def make_wrt(name):
        def builder(tape, t):
            pp = {k: v.copy() for k, v in params64.items()}
            pt = wrap_params(pp, requires_grad=False)
            pt[name] = t
            out = model.forward(tape, pt, engine.Tensor(x0), mode="train",
                                update_running=False)
            return cross_entropy(tape, out.logits, labels)
        return builder

    cases = [("model-graph[input]", wrt_input, x0)]
    for name in ("stem.conv.w", "s0.b0.conv2.w", "s0.b0.bn1.gamma", "head.w", "head.b"):
        cases.append((f"model-graph[{name}]", make_wrt(name), params64[name]))
    return cases


def gradcheck_report(step=1e-5, tol=1e-4):
    """Run all finite-difference checks; returns [(name, max_rel_err, ok)]."""
    results = []
    for name, builder, point in _gradcheck_cases() + _gradcheck_model_case():
        err = engine.finite_diff_check(builder, point, step=step)
        results.append((name, err, err <= tol))
    return results


def cmd_gradcheck(args):
    results = gradcheck_report()
    ok = True
    for name, err, passed in results:
        print(f"{name:<34s} rel err {err:.3e}  {'PASS' if passed else 'FAIL'}")
        ok = ok and passed
    print("gradcheck:", "all passed" if ok else "FAILURES")
    return 0 if ok else 1


# -- dataset verification -----------------------------------------------------


def _sha256_files(paths):
    h = hashlib.sha256()
    for p in paths:
        with open(p, "rb") as f:
            h.update(f.read())
    return h.hexdigest()


def cmd_dataset(args):
    if args.dataset_cmd == "synth":
        paths = build_digits_corpus(args.out, args.train_count, args.test_count,
                                    seed=args.seed or 0)
        print("wrote:")
        for p in paths:
            print(" ", p)
        return 0

    kind, path = args.kind, args.path
    summary = {"kind": kind, "path": path}
    if kind == "mnist":
        splits = {}
        for split in ("train", "test"):
            try:
                imgs, labels = mnist_paths(path, split)
            except FileNotFoundError:
                continue
            ds = load_mnist(imgs, labels, split=split)
            splits[split] = {
                "count": len(ds),
                "image_shape": list(ds.images.shape[1:]),
                "label_histogram": np.bincount(ds.labels, minlength=10).tolist(),
                "sha256": _sha256_files([imgs, labels]),
            }
        if not splits:
            raise CliError(f"no MNIST files found under {path}")
        summary["splits"] = splits
    elif kind == "cifar10":
        if os.path.isdir(path):
            files = sorted(os.path.join(path, n) for n in os.listdir(path)
                           if n.endswith(".bin"))
        else:
            files = [path]
        if not files:
            raise CliError(f"no cifar10 .bin files under {path}")
        ds = load_cifar10(files)
        summary.update({
            "count": len(ds),
            "image_shape": list(ds.images.shape[1:]),
            "label_histogram": np.bincount(ds.labels, minlength=10).tolist(),
            "sha256": _sha256_files(files),
        })
    else:
        raise CliError(f"unknown dataset kind {kind!r}")
    print(json.dumps(summary, indent=2))
    return 0


# -- argument parsing ---------------------------------------------------------


def _add_config_flags(p, keys):
    """Flags for a subset of RunConfig keys (None = not given)."""
    # Types for keys whose default is None (list-valued keys stay config-only).
    none_types = {"data_dir": str, "train_limit": int, "test_limit": int,
                  "lam": float, "eps_local": float, "sigma": float}
    skip = {"widths", "milestones"}
    for key in keys:
        if key in skip:
            continue
        default = DEFAULTS[key]
        flag = "--" + key.replace("_", "-")
        if key == "lam":
            flag = "--lambda"
        elif key == "n_domains":
            flag = "--nk"
        elif key == "batch_size":
            flag = "--batch"
        if isinstance(default, bool):
            p.add_argument(flag, dest=key, action="store_const", const=True, default=None)
        elif default is None:
            p.add_argument(flag, dest=key, type=none_types[key], default=None)
        elif isinstance(default, int):
            p.add_argument(flag, dest=key, type=int, default=None)
        elif isinstance(default, float):
            p.add_argument(flag, dest=key, type=float, default=None)
        else:
            p.add_argument(flag, dest=key, type=str, default=None)


def build_parser():
    p = argparse.ArgumentParser(
        prog="robustq",
        description="Adversarially robust training and evaluation of "
                    "low-bitwidth quantized CNNs.")
    sub = p.add_subparsers(dest="command", required=True)

    pt = sub.add_parser("train", help="train a model (natural or odgq mode)")
    pt.add_argument("--config")
    _add_config_flags(pt, [
        "mode", "dataset", "data_dir", "train_limit", "test_limit", "out_dir",
        "bits_w", "bits_a", "epochs", "batch_size", "lr", "lam", "eps",
        "eps_local", "n_domains", "seed", "deterministic", "mmd_grad_natural",
        "blocks_per_stage", "quantize_first_last"])
    pt.set_defaults(func=cmd_train)

    pe = sub.add_parser("eval", help="robustness report for a checkpoint")
    pe.add_argument("--ckpt", required=True)
    pe.add_argument("--blackbox", action="store_true")
    pe.add_argument("--surrogate")
    pe.add_argument("--config")
    pe.add_argument("--eps", dest="eval_eps", type=float, default=None)
    pe.add_argument("--alpha", dest="eval_alpha", type=float, default=None)
    pe.add_argument("--steps", dest="eval_steps", type=int, default=None)
    pe.add_argument("--bits-w", dest="bits_w", type=int, default=None)
    pe.add_argument("--bits-a", dest="bits_a", type=int, default=None)
    _add_config_flags(pe, ["attacks", "dataset", "data_dir", "test_limit",
                           "out_dir", "eval_batch", "attack_seed", "eval_rho", "seed"])
    pe.set_defaults(func=cmd_eval)

    ps = sub.add_parser("surface", help="loss surface grid around test images")
    ps.add_argument("--ckpt", required=True)
    ps.add_argument("--index", dest="surface_index", type=int, default=None)
    ps.add_argument("--loss", dest="surface_loss", choices=["ce", "mmd"], default=None)
    ps.add_argument("--eps-max", dest="surface_eps_max", type=float, default=None)
    ps.add_argument("--grid", dest="surface_grid", type=int, default=None)
    ps.add_argument("--window", dest="surface_window", type=int, default=None)
    ps.add_argument("--config")
    _add_config_flags(ps, ["dataset", "data_dir", "test_limit", "out_dir", "seed"])
    ps.set_defaults(func=cmd_surface)

    pb = sub.add_parser("bound", help="multi-domain risk-bound report")
    pb.add_argument("--ckpt", required=True)
    pb.add_argument("--pertset", required=True)
    pb.add_argument("--attack", dest="bound_attack", default=None)
    pb.add_argument("--eps", dest="eval_eps", type=float, default=None)
    pb.add_argument("--config")
    _add_config_flags(pb, ["dataset", "data_dir", "test_limit", "out_dir",
                           "bound_cap", "eval_batch", "eval_alpha", "eval_steps",
                           "attack_seed", "seed"])
    pb.set_defaults(func=cmd_bound)

    pg = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    pg.set_defaults(func=cmd_gradcheck)

    pd = sub.add_parser("dataset", help="dataset utilities")
    dsub = pd.add_subparsers(dest="dataset_cmd", required=True)
    pv = dsub.add_parser("verify", help="parse and summarise a dataset")
    pv.add_argument("--kind", required=True, choices=["mnist", "cifar10"])
    pv.add_argument("--path", required=True)
    pv.set_defaults(func=cmd_dataset)
    py = dsub.add_parser("synth", help="build the stand-in digit corpus")
    py.add_argument("--out", required=True)
    py.add_argument("--train-count", type=int, default=10000)
    py.add_argument("--test-count", type=int, default=2000)
    py.add_argument("--seed", type=int, default=0)
    py.set_defaults(func=cmd_dataset)

    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, DataFormatError, QuantError, MMDError,
            engine.EngineError, ValueError, FileNotFoundError, IndexError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
