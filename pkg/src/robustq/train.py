"""Online multi-domain adversarial training with feature alignment.

The method treats adversarially perturbed views of the training stream as
extra domains and trains the network to generalize across them.  It keeps a
global perturbation store P of shape [N_k, B, C, H, W], one slot per domain,
initialised to zero and *never* clipped in storage (clipping happens at
application time):

    per batch, with k the epoch's slot index:
      x_g   = clamp01(x0 + clip(P[k, :rows], -eps, eps))     (apply slot k)
      p_l   = eps_l * sign(d CE(h(x_g), y) / d x_g)          (backward 1)
      P[k:, :rows] += p_l                                    (rotating update:
                                                              slots k..N_k-1)
      x_adv = clamp01(x_g + clip(p_l, -eps, eps))
      update weights on CE(h(x_adv), y) + lam * mmd2(F_adv, F_nat)
                                                             (backward 2)
    k advances by one (mod N_k) at the end of each epoch.

The store update feeds slots k..N_k-1, so older slots accumulate longer
histories: after e epochs slot j has absorbed the local perturbations of
epochs 0..min(e-1, j)... precisely, slot j is touched in epoch e iff the
epoch's slot index (e mod N_k) is <= j.  The scheme runs for half the epoch
budget of plain training (each step already costs two backward passes).

The alignment term compares the align features of the perturbed batch with
those of the clean batch under the *same* batch statistics.  By default the
clean branch is an unrecorded forward (its features enter the loss as
constants): gradients through a second full branch would roughly triple the
cost of the weight pass for little benefit.  ``mmd_grad_natural=True``
switches to one recorded forward over the concatenated [adv; clean] batch
with gradients through both halves and joint batch statistics.

With lam == 0 the clean branch is skipped entirely, and with eps == eps_l
== 0 every step degenerates to plain training on x0: the same arithmetic,
bit for bit, as ``train_natural`` (the local-perturbation pass still runs,
but it never updates running statistics).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import engine, mmd
from .data import batches
from .engine import Tensor
from .model import accuracy, cross_entropy, wrap_params


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40             # plain-training budget; the online scheme runs epochs // 2
    batch_size: int = 128
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 0.0
    lr_decay: float = 0.1
    milestones: tuple | None = None  # None: thirds of the run length
    lam: float = 3.0             # alignment weight (use 0.003 for 1-bit weights)
    eps: float = 8 / 255         # global perturbation budget
    eps_local: float | None = None   # local step size; None -> eps
    n_domains: int = 4
    sigma: float | None = None   # None -> median heuristic per batch
    mmd_grad_natural: bool = False
    seed: int = 0
    debug_checks: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.n_domains < 1:
            raise ValueError("n_domains must be >= 1")
        if self.eps < 0 or (self.eps_local is not None and self.eps_local < 0):
            raise ValueError("eps and eps_local must be >= 0")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")

    @property
    def eps_l(self):
        return self.eps if self.eps_local is None else self.eps_local


class PerturbationSet:
    """Global perturbation store: one [B, C, H, W] slot per domain.

    The store accumulates raw (unclipped) signed steps; the budget clip is
    applied when a slot is applied to a batch.  Partial batches touch only
    the leading rows of each slot.
    """

    def __init__(self, n_domains, batch_size, image_shape, dtype=np.float32):
        if n_domains < 1:
            raise ValueError("n_domains must be >= 1")
        self.store = np.zeros((n_domains, batch_size) + tuple(image_shape), dtype)
        # increments received per slot, over the store's lifetime
        self.update_counts = np.zeros(n_domains, dtype=np.int64)

    @property
    def n_domains(self):
        return self.store.shape[0]

    def max_abs(self):
        return float(np.abs(self.store).max())


def apply_global(pert_set, k, x0, eps):
    """x0 plus slot k's perturbation, clipped to the eps ball and [0, 1]."""
    if not 0 <= k < pert_set.n_domains:
        raise IndexError(f"slot {k} out of range 0..{pert_set.n_domains - 1}")
    rows = x0.shape[0]
    if rows > pert_set.store.shape[1]:
        raise ValueError(
            f"batch of {rows} rows exceeds slot capacity {pert_set.store.shape[1]}")
    eps = x0.dtype.type(eps)
    delta = np.clip(pert_set.store[k, :rows], -eps, eps)
    return np.clip(x0 + delta, 0.0, 1.0)


def accumulate_update(pert_set, k, p_l):
    """Add the local perturbation to slots k..N_k-1 (the rotating schedule)."""
    rows = p_l.shape[0]
    pert_set.store[k:, :rows] += p_l
    pert_set.update_counts[k:] += 1


def local_perturbation(model, pt, x_g, y, eps_l):
    """One signed-gradient step against the current batch, train-mode stats.

    Uses batch statistics (the network as the update will see it) but never
    touches running statistics.  Returns eps_l * sign(grad); the gradient's
    sign convention is np.sign (sign(0) == 0).
    """
    tape = engine.Tape()
    xt = Tensor(x_g, requires_grad=True)
    # Detach the parameters so the tape only tracks the input path; the
    # backward pass then skips every weight-gradient product.
    frozen = {name: Tensor(t.data, requires_grad=False) for name, t in pt.items()}
    out = model.forward(tape, frozen, xt, mode="train", update_running=False)
    loss = cross_entropy(tape, out.logits, y)
    g = engine.grad_for(engine.backward(tape, loss), xt)
    return (x_g.dtype.type(eps_l) * np.sign(g)).astype(x_g.dtype, copy=False)


def _lr_at(epoch, total, cfg):
    if cfg.milestones is None:
        m1, m2 = round(total / 3), round(2 * total / 3)
    else:
        m1, m2 = cfg.milestones
    return cfg.lr * cfg.lr_decay ** int((epoch >= m1) + (epoch >= m2))


def _epoch_seed(seed, epoch):
    return int(np.random.SeedSequence(entropy=seed, spawn_key=(epoch,)).generate_state(1)[0])


def sgd_update(pt, grads, velocity, lr, momentum, weight_decay):
    """In-place SGD with momentum over the trainable entries of a param bundle."""
    for name, tensor in pt.items():
        if not tensor.requires_grad:
            continue
        g = grads.get(tensor.id)
        if g is None:
            continue
        if weight_decay:
            g = g + np.float32(weight_decay) * tensor.data
        v = velocity.get(name)
        if v is None:
            v = np.zeros_like(tensor.data)
            velocity[name] = v
        v *= np.float32(momentum)
        v += g
        tensor.data -= np.float32(lr) * v


def _finite_or_raise(value, what):
    if not np.isfinite(value):
        raise engine.NonFiniteError(f"{what} became non-finite ({value})")


def train_natural(model, params, dataset, cfg: TrainConfig, epoch_hook=None):
    """Plain SGD training; returns (params, per-epoch log)."""
    pt = wrap_params(params)
    velocity = {}
    log = []
    for epoch in range(cfg.epochs):
        t0 = time.monotonic()
        lr = _lr_at(epoch, cfg.epochs, cfg)
        losses, accs, weights = [], [], []
        for batch in batches(dataset, cfg.batch_size, seed=_epoch_seed(cfg.seed, epoch)):
            tape = engine.Tape()
            out = model.forward(tape, pt, batch.x, mode="train")
            loss = cross_entropy(tape, out.logits, batch.y)
            _finite_or_raise(float(loss.data), "training loss")
            grads = engine.backward(tape, loss)
            sgd_update(pt, grads, velocity, lr, cfg.momentum, cfg.weight_decay)
            losses.append(float(loss.data))
            accs.append(accuracy(out.logits, batch.y))
            weights.append(len(batch.y))
        w = np.asarray(weights, np.float64)
        entry = {
            "epoch": epoch,
            "lr": lr,
            "task_loss": float(np.average(losses, weights=w)),
            "mmd_loss": 0.0,
            "train_acc": float(np.average(accs, weights=w)),
            "wall_time": time.monotonic() - t0,
        }
        log.append(entry)
        if epoch_hook:
            epoch_hook(epoch, params, entry)
    return params, log


def odgq_step(model, pt, pert_set, k, batch, cfg: TrainConfig, velocity, lr):
    """One online step against domain slot k; returns metrics for the batch."""
    before = engine.stats["backward_passes"]
    x0, y = batch.x, batch.y

    x_g = apply_global(pert_set, k, x0, cfg.eps)
    p_l = local_perturbation(model, pt, x_g, y, cfg.eps_l)
    accumulate_update(pert_set, k, p_l)
    eps = x0.dtype.type(cfg.eps)
    x_adv = np.clip(x_g + np.clip(p_l, -eps, eps), 0.0, 1.0)

    tape = engine.Tape()
    if cfg.lam == 0.0:
        out = model.forward(tape, pt, x_adv, mode="train")
        ce = cross_entropy(tape, out.logits, y)
        loss, mmd_value = ce, 0.0
    elif cfg.mmd_grad_natural:
        x_cat = np.concatenate([x_adv, x0], axis=0)
        rows = x0.shape[0]
        out = model.forward(tape, pt, x_cat, mode="train")
        logits_adv = engine.slice_rows(tape, out.logits, 0, rows)
        f_adv = engine.slice_rows(tape, out.features, 0, rows)
        f_nat = engine.slice_rows(tape, out.features, rows, 2 * rows)
        ce = cross_entropy(tape, logits_adv, y)
        m2 = mmd.mmd_squared(tape, f_adv, f_nat, sigma=cfg.sigma)
        loss = engine.add(tape, ce, engine.mul_scalar(tape, m2, cfg.lam))
        mmd_value = float(m2.data)
    else:
        stats = {}
        out = model.forward(tape, pt, x_adv, mode="train", stats_out=stats)
        nat = model.forward(None, pt, x0, mode="train", stats_in=stats)
        ce = cross_entropy(tape, out.logits, y)
        m2 = mmd.mmd_squared(tape, out.features, Tensor(nat.features.data), sigma=cfg.sigma)
        loss = engine.add(tape, ce, engine.mul_scalar(tape, m2, cfg.lam))
        mmd_value = float(m2.data)

    _finite_or_raise(float(loss.data), "training loss")
    grads = engine.backward(tape, loss)
    sgd_update(pt, grads, velocity, lr, cfg.momentum, cfg.weight_decay)

    if cfg.debug_checks:
        assert engine.stats["backward_passes"] - before == 2
        assert np.abs(x_g - x0).max() <= cfg.eps + 1e-6
        assert np.abs(x_adv - x_g).max() <= cfg.eps + 1e-6
        for arr in (x_g, x_adv):
            assert arr.min() >= 0.0 and arr.max() <= 1.0

    return {
        "task_loss": float(ce.data),
        "mmd_loss": mmd_value,
        "train_acc": accuracy(out.logits.data[: len(y)], y),
        "n": len(y),
    }


def train_odgq(model, params, dataset, cfg: TrainConfig, epoch_hook=None):
    """Online multi-domain adversarial training.

    Runs cfg.epochs // 2 epochs (each step costs two backward passes).
    Returns (params, per-epoch log, perturbation store).
    """
    total = cfg.epochs // 2
    if total < 1:
        raise ValueError("epochs must be >= 2 (the scheme runs epochs // 2 rounds)")
    image_shape = dataset.images.shape[1:]
    pert_set = PerturbationSet(cfg.n_domains, cfg.batch_size, image_shape)
    pt = wrap_params(params)
    velocity = {}
    log = []
    k = 0
    for epoch in range(total):
        t0 = time.monotonic()
        lr = _lr_at(epoch, total, cfg)
        losses, mmds, accs, weights = [], [], [], []
        for batch in batches(dataset, cfg.batch_size, seed=_epoch_seed(cfg.seed, epoch)):
            m = odgq_step(model, pt, pert_set, k, batch, cfg, velocity, lr)
            losses.append(m["task_loss"])
            mmds.append(m["mmd_loss"])
            accs.append(m["train_acc"])
            weights.append(m["n"])
        w = np.asarray(weights, np.float64)
        entry = {
            "epoch": epoch,
            "lr": lr,
            "task_loss": float(np.average(losses, weights=w)),
            "mmd_loss": float(np.average(mmds, weights=w)),
            "train_acc": float(np.average(accs, weights=w)),
            "wall_time": time.monotonic() - t0,
            "k": k,
            "max_store": pert_set.max_abs(),
            "update_counts": pert_set.update_counts.tolist(),
        }
        log.append(entry)
        if epoch_hook:
            epoch_hook(epoch, params, entry)
        k = (k + 1) % cfg.n_domains
    return params, log, pert_set
