"""l-inf adversarial attacks on image batches in [0, 1].

All attacks are pure functions of (model, params, inputs, labels, spec):
randomized kinds draw their noise from per-sample generator streams keyed by
(spec.seed, attack kind, global sample index), so results do not depend on
how a dataset is batched during evaluation.

Kinds:

* ``gn``    Gaussian noise x0 + eps * N(0, 1), a gradient-free baseline.
            Like every kind it is projected into the eps ball and [0, 1].
* ``fgsm``  one signed-gradient step of size eps.
* ``bim``   iterated fgsm with step alpha, re-projected every step.
* ``pgd``   bim from a uniform random start in the eps ball.
* ``tpgd``  pgd variant whose objective adds the KL divergence between the
            clean-point class distribution and the perturbed one, weighted
            1/rho; the start is x0 + 0.001 * N(0, 1).

Every gradient-based attack returns a point satisfying
``||x_adv - x0||_inf <= eps`` and ``0 <= x_adv <= 1`` exactly (fgsm/bim/pgd/
tpgd share the same final projection).  Gradients are taken through the
perturbed input only; the clean-point distribution in tpgd is a constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine
from .engine import Tensor
from .model import cross_entropy, wrap_params

ATTACK_KINDS = ("gn", "fgsm", "bim", "pgd", "tpgd")

_KIND_STREAM = {"gn": 0, "pgd": 1, "tpgd": 2}


class AttackError(ValueError):
    pass


@dataclass(frozen=True)
class AttackSpec:
    """Attack kind plus its budget and schedule.

    eps, alpha are absolute pixel units (pass 8/255, not 8).  steps counts
    gradient iterations; rho weights the tpgd KL term as 1/rho.
    """

    kind: str
    eps: float
    alpha: float = 0.0
    steps: int = 1
    rho: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise AttackError(f"unknown attack kind {self.kind!r}; known: {ATTACK_KINDS}")
        if self.eps < 0:
            raise AttackError(f"eps must be >= 0, got {self.eps}")
        if self.alpha < 0:
            raise AttackError(f"alpha must be >= 0, got {self.alpha}")
        if not isinstance(self.steps, (int, np.integer)) or self.steps < 1:
            raise AttackError(f"steps must be a positive int, got {self.steps!r}")
        if self.kind in ("bim", "pgd", "tpgd") and self.alpha == 0 and self.eps > 0:
            raise AttackError(f"{self.kind} with eps > 0 needs alpha > 0")
        if self.rho <= 0:
            raise AttackError(f"rho must be > 0, got {self.rho}")

    def label(self):
        if self.kind in ("bim", "pgd", "tpgd"):
            return f"{self.kind.upper()}-{self.steps}"
        return self.kind.upper()


def clip_project(x_adv, x0, eps):
    """Project onto the intersection of the eps ball around x0 and [0, 1]."""
    if eps < 0:
        raise AttackError(f"eps must be >= 0, got {eps}")
    x_adv = np.asarray(x_adv)
    x0 = np.asarray(x0)
    if x_adv.shape != x0.shape:
        raise AttackError(f"shape mismatch {x_adv.shape} vs {x0.shape}")
    eps = x0.dtype.type(eps)
    delta = np.clip(x_adv - x0, -eps, eps)
    return np.clip(x0 + delta, 0.0, 1.0)


def _per_sample_noise(seed, kind, indices, shape, draw):
    """One independent generator stream per (seed, kind, sample index)."""
    out = np.empty((len(indices),) + shape, np.float32)
    stream = _KIND_STREAM[kind]
    for row, idx in enumerate(indices):
        ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(stream, int(idx)))
        out[row] = draw(np.random.default_rng(ss))
    return out


def _indices_or_default(x0, sample_indices):
    if sample_indices is None:
        return np.arange(x0.shape[0])
    sample_indices = np.asarray(sample_indices)
    if sample_indices.shape != (x0.shape[0],):
        raise AttackError(
            f"sample_indices shape {sample_indices.shape} != ({x0.shape[0]},)")
    return sample_indices


def _input_gradient(model, pt, x, y, soft_targets=None, rho=None):
    """d loss / d x at x, params frozen; loss is CE (+ KL/rho for tpgd)."""
    tape = engine.Tape()
    xt = Tensor(x, requires_grad=True)
    out = model.forward(tape, pt, xt, mode="eval")
    loss = cross_entropy(tape, out.logits, y)
    if soft_targets is not None:
        kl = engine.softmax_cross_entropy(tape, out.logits, targets=soft_targets)
        loss = engine.add(tape, loss, engine.mul_scalar(tape, kl, 1.0 / rho))
    g = engine.grad_for(engine.backward(tape, loss), xt)
    if not np.all(np.isfinite(g)):
        raise AttackError("non-finite input gradient")
    return g


def _softmax(z):
    ez = np.exp(z - z.max(axis=1, keepdims=True))
    return ez / ez.sum(axis=1, keepdims=True)


def gaussian_noise(model, params, x0, y, spec, sample_indices=None):
    idx = _indices_or_default(x0, sample_indices)
    shape = x0.shape[1:]
    noise = _per_sample_noise(
        spec.seed, "gn", idx, shape,
        lambda rng: rng.standard_normal(shape, dtype=np.float32))
    return clip_project(x0 + x0.dtype.type(spec.eps) * noise, x0, spec.eps)


def fgsm(model, params, x0, y, spec, sample_indices=None):
    pt = wrap_params(params, requires_grad=False)
    g = _input_gradient(model, pt, x0, y)
    return clip_project(x0 + x0.dtype.type(spec.eps) * np.sign(g), x0, spec.eps)


def _iterated(model, params, x0, y, spec, start):
    pt = wrap_params(params, requires_grad=False)
    alpha = x0.dtype.type(spec.alpha)
    soft = None
    if spec.kind == "tpgd":
        clean = model.forward(None, pt, x0, mode="eval")
        soft = _softmax(clean.logits.data)
    x = start
    for _ in range(spec.steps):
        g = _input_gradient(model, pt, x, y, soft_targets=soft, rho=spec.rho)
        x = clip_project(x + alpha * np.sign(g), x0, spec.eps)
    return clip_project(x, x0, spec.eps)


def bim(model, params, x0, y, spec, sample_indices=None):
    return _iterated(model, params, x0, y, spec, start=x0)


def pgd(model, params, x0, y, spec, sample_indices=None):
    idx = _indices_or_default(x0, sample_indices)
    shape = x0.shape[1:]
    noise = _per_sample_noise(
        spec.seed, "pgd", idx, shape,
        lambda rng: rng.uniform(-spec.eps, spec.eps, shape).astype(np.float32))
    start = clip_project(x0 + noise, x0, spec.eps)
    return _iterated(model, params, x0, y, spec, start=start)


def tpgd(model, params, x0, y, spec, sample_indices=None):
    idx = _indices_or_default(x0, sample_indices)
    shape = x0.shape[1:]
    noise = _per_sample_noise(
        spec.seed, "tpgd", idx, shape,
        lambda rng: rng.standard_normal(shape, dtype=np.float32))
    start = x0 + np.float32(0.001) * noise
    return _iterated(model, params, x0, y, spec, start=start)


_DISPATCH = {
    "gn": gaussian_noise,
    "fgsm": fgsm,
    "bim": bim,
    "pgd": pgd,
    "tpgd": tpgd,
}


def run_attack(model, params, spec, x0, y, sample_indices=None):
    """Apply ``spec`` to a batch; returns the perturbed batch (new array).

    ``sample_indices`` are the positions of the rows in their parent dataset
    and seed the per-sample noise streams; by default rows are numbered
    0..B-1.  Deterministic: equal arguments give bitwise-equal results.
    """
    x0 = np.asarray(x0)
    y = np.asarray(y)
    if x0.ndim != 4:
        raise AttackError(f"x0 must be [B,C,H,W], got {x0.shape}")
    if y.shape != (x0.shape[0],):
        raise AttackError(f"labels shape {y.shape} != ({x0.shape[0]},)")
    fn = _DISPATCH.get(spec.kind)
    if fn is None:
        raise AttackError(f"unknown attack kind {spec.kind!r}; known: {ATTACK_KINDS}")
    return fn(model, params, x0, y, spec, sample_indices)
