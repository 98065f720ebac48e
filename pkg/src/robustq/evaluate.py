"""Evaluation harness: robustness tables, loss surfaces, bound reports.

Three consumers of a trained checkpoint:

* ``evaluate`` measures clean and per-attack accuracy.  White-box attacks
  take gradients from the evaluated model itself; passing surrogate
  parameters adds transfer (black-box) rows where the attack is generated
  on the surrogate and scored on the target.
* ``loss_surface`` samples loss values on a 2-d grid of perturbations
  x0 + e1 * r + e2 * d, where r is a seeded random sign field and d is the
  signed input gradient at the clean point.  The cross-entropy variant walks
  a single image; the feature-distance variant perturbs a window of images
  and reports the squared MMD between perturbed and clean align features.
* ``bound_report`` audits the multi-domain generalization inequality on a
  trained perturbation store: per-domain 0/1 risks and feature MMD distances
  to the attacked target distribution, the smallest constant lambda-hat
  making the inequality tight, and whether it holds.

All randomness is seeded and keyed per sample, so reports do not depend on
evaluation batch size.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import engine, mmd
from .attacks import AttackSpec, run_attack
from .data import Dataset
from .engine import Tensor
from .model import accuracy, cross_entropy, wrap_params
from .train import PerturbationSet, apply_global


@dataclass
class AttackResult:
    label: str
    accuracy: float
    mean_loss: float
    transfer: bool
    wall_time: float


@dataclass
class EvalReport:
    model_label: str
    clean_accuracy: float
    clean_loss: float
    results: list
    n_samples: int
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "model": self.model_label,
            "n_samples": self.n_samples,
            "clean_accuracy": self.clean_accuracy,
            "clean_loss": self.clean_loss,
            "attacks": [asdict(r) for r in self.results],
            "meta": self.meta,
        }


def _forward_batched(model, pt, images, batch_size, want_features=False):
    logits, feats = [], []
    for lo in range(0, images.shape[0], batch_size):
        out = model.forward(None, pt, images[lo:lo + batch_size], mode="eval")
        logits.append(out.logits.data)
        if want_features:
            feats.append(out.features.data)
    logits = np.concatenate(logits)
    return (logits, np.concatenate(feats)) if want_features else logits


def predict_logits(model, params, images, batch_size=500):
    """Eval-mode logits for an image array, computed in batches."""
    return _forward_batched(model, wrap_params(params, False), images, batch_size)


def align_features(model, params, images, batch_size=500):
    """Eval-mode align features (post-pool flattened vector) for images."""
    _, f = _forward_batched(model, wrap_params(params, False), images,
                            batch_size, want_features=True)
    return f


def _mean_ce(logits, labels):
    z = logits.astype(np.float64)
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    return float((lse - z[np.arange(len(labels)), labels]).mean())


def evaluate(model, params, dataset, attack_specs, batch_size=500,
             surrogate_params=None, model_label="model"):
    """Robustness report over a dataset.

    ``attack_specs`` is a sequence of AttackSpec.  Every spec yields a
    white-box row; when ``surrogate_params`` is given each spec also yields
    a transfer row (attack generated on the surrogate, scored on the
    evaluated model).  Results are independent of ``batch_size``.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    pt = wrap_params(params, False)
    images, labels = dataset.images, dataset.labels
    logits = _forward_batched(model, pt, images, batch_size)
    report = EvalReport(
        model_label=model_label,
        clean_accuracy=accuracy(logits, labels),
        clean_loss=_mean_ce(logits, labels),
        results=[],
        n_samples=len(dataset),
    )
    sources = [(False, params)]
    if surrogate_params is not None:
        sources.append((True, surrogate_params))
    for spec in attack_specs:
        for transfer, source in sources:
            t0 = time.monotonic()
            accs, losses, weights = [], [], []
            for lo in range(0, len(dataset), batch_size):
                sel = slice(lo, min(lo + batch_size, len(dataset)))
                x_adv = run_attack(model, source, spec, images[sel], labels[sel],
                                   sample_indices=np.arange(sel.start, sel.stop))
                z = _forward_batched(model, pt, x_adv, batch_size)
                accs.append(accuracy(z, labels[sel]))
                losses.append(_mean_ce(z, labels[sel]))
                weights.append(sel.stop - sel.start)
            w = np.asarray(weights, np.float64)
            label = spec.label() + (" (transfer)" if transfer else "")
            report.results.append(AttackResult(
                label=label,
                accuracy=float(np.average(accs, weights=w)),
                mean_loss=float(np.average(losses, weights=w)),
                transfer=transfer,
                wall_time=time.monotonic() - t0,
            ))
    return report


# -- loss surfaces ------------------------------------------------------------


@dataclass
class SurfaceGrid:
    values: np.ndarray   # [R, R]; rows walk eps1 (random dir), cols eps2 (gradient dir)
    eps1: np.ndarray
    eps2: np.ndarray
    kind: str
    index: int

    def save_csv(self, path):
        with open(path, "w") as f:
            f.write("eps1,eps2,value\n")
            for i, e1 in enumerate(self.eps1):
                for j, e2 in enumerate(self.eps2):
                    f.write(f"{e1:.9g},{e2:.9g},{self.values[i, j]:.9g}\n")


def _input_grad_sign(model, pt, x, y):
    tape = engine.Tape()
    xt = Tensor(x, requires_grad=True)
    out = model.forward(tape, pt, xt, mode="eval")
    loss = cross_entropy(tape, out.logits, y)
    return np.sign(engine.grad_for(engine.backward(tape, loss), xt))


def loss_surface(model, params, dataset, index, kind="cross-entropy",
                 eps_max=16 / 255, resolution=25, seed=0, window=64,
                 batch_size=512):
    """Loss landscape on the plane spanned by a random and a gradient direction.

    grid[i, j] evaluates at clamp01(x0 + eps1[i] * r + eps2[j] * d), with
    eps axes linspace(0, eps_max, resolution), r a seeded +-1 field and
    d = sign(input gradient of the cross-entropy at the clean point).

    kind "cross-entropy": x0 is the single image dataset[index]; values are
    CE against its label.  kind "mmd-vs-clean-batch": x0 is the window of
    ``window`` images starting at ``index`` (each with its own r and d);
    values are the squared MMD between perturbed and clean align features
    (bandwidth fixed by the median heuristic on the clean features), so
    grid[0, 0] == 0 exactly.
    """
    if resolution < 2:
        raise ValueError(f"resolution must be >= 2, got {resolution}")
    if eps_max < 0:
        raise ValueError(f"eps_max must be >= 0, got {eps_max}")
    if not 0 <= index < len(dataset):
        raise IndexError(f"index {index} out of range for {len(dataset)} samples")
    if kind not in ("cross-entropy", "mmd-vs-clean-batch"):
        raise ValueError(f"unknown surface kind {kind!r}")
    pt = wrap_params(params, False)
    e1 = np.linspace(0.0, eps_max, resolution).astype(np.float32)
    e2 = np.linspace(0.0, eps_max, resolution).astype(np.float32)
    rng = np.random.default_rng(seed)

    if kind == "cross-entropy":
        x0 = dataset.images[index:index + 1]
        y = dataset.labels[index:index + 1]
        r = rng.choice(np.float32([-1.0, 1.0]), size=x0.shape)
        d = _input_grad_sign(model, pt, x0, y).astype(np.float32)
        points = np.clip(
            x0[None, None] + e1[:, None, None, None, None, None] * r
            + e2[None, :, None, None, None, None] * d, 0.0, 1.0)
        flat = points.reshape((-1,) + x0.shape[1:])
        logits = _forward_batched(model, pt, flat, batch_size)
        z = logits.astype(np.float64)
        zmax = z.max(axis=1, keepdims=True)
        lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
        ce = lse - z[:, y[0]]
        values = ce.reshape(resolution, resolution)
    else:
        stop = min(index + window, len(dataset))
        x0 = dataset.images[index:stop]
        y = dataset.labels[index:stop]
        r = rng.choice(np.float32([-1.0, 1.0]), size=x0.shape)
        d = _input_grad_sign(model, pt, x0, y).astype(np.float32)
        _, f_clean = _forward_batched(model, pt, x0, batch_size, want_features=True)
        sigma = mmd.median_bandwidth(f_clean) if len(f_clean) > 1 else 1.0
        values = np.empty((resolution, resolution))
        for i in range(resolution):
            for j in range(resolution):
                xp = np.clip(x0 + e1[i] * r + e2[j] * d, 0.0, 1.0)
                _, f = _forward_batched(model, pt, xp, batch_size, want_features=True)
                values[i, j] = float(mmd.mmd_squared(None, f, f_clean, sigma=sigma).data)

    return SurfaceGrid(values=values, eps1=e1, eps2=e2, kind=kind, index=index)


# -- generalization-bound report ----------------------------------------------


@dataclass
class DomainRow:
    k: int
    risk: float
    d_mmd: float


@dataclass
class BoundReport:
    domains: list
    target_label: str
    target_risk: float
    lambda_hat: float
    rhs: float
    holds: bool
    n_samples: int

    def to_dict(self):
        return {
            "domains": [asdict(d) for d in self.domains],
            "target": {"attack": self.target_label, "risk": self.target_risk},
            "lambda_hat": self.lambda_hat,
            "rhs": self.rhs,
            "lhs": self.target_risk,
            "holds": self.holds,
            "n_samples": self.n_samples,
        }


def _risk(model, pt, images, labels, batch_size):
    logits = _forward_batched(model, pt, images, batch_size)
    return 1.0 - accuracy(logits, labels)


def bound_report(model, params, pert_set: PerturbationSet, dataset: Dataset,
                 target_spec: AttackSpec, eps, eps_local=None,
                 sample_cap=2000, batch_size=500, seed=0):
    """Audit the multi-domain risk inequality on a trained perturbation store.

    Each training domain k is reconstructed the way training built it: slot k
    applied (budget-clipped) to the data, plus one signed-gradient local step
    of size eps_local, the sum clamped per pixel.  The target domain is
    ``target_spec`` applied to the same samples.  Reports per-domain 0/1
    risk and align-feature MMD distance to the target, and the smallest
    lambda-hat >= 0 with

        target_risk <= mean_k(risk_k + lambda_hat * d_k)  ==  rhs.

    ``holds`` records whether the inequality is satisfied at lambda-hat
    (it can only fail when some d_k is zero while that domain's risk is
    below the target's).  Domains pair with dataset rows positionally, in
    stored order, batches the size of the store's slot capacity.
    """
    if eps_local is None:
        eps_local = eps
    n = min(sample_cap, len(dataset))
    rng = np.random.default_rng(seed)
    sel = np.sort(rng.choice(len(dataset), size=n, replace=False))
    images, labels = dataset.images[sel], dataset.labels[sel]
    pt = wrap_params(params, False)

    x_t = run_attack(model, params, target_spec, images, labels, sample_indices=sel)
    target_risk = _risk(model, pt, x_t, labels, batch_size)
    f_t = align_features(model, params, x_t, batch_size)

    cap = pert_set.store.shape[1]
    eps32 = images.dtype.type(eps)
    domains = []
    for k in range(pert_set.n_domains):
        pieces = []
        for lo in range(0, n, cap):
            x0 = images[lo:lo + cap]
            x_g = apply_global(pert_set, k, x0, eps)
            g = _input_grad_sign(model, pt, x_g, labels[lo:lo + cap])
            p_l = (images.dtype.type(eps_local) * g).astype(images.dtype)
            pieces.append(np.clip(x_g + np.clip(p_l, -eps32, eps32), 0.0, 1.0))
        x_k = np.concatenate(pieces)
        risk_k = _risk(model, pt, x_k, labels, batch_size)
        f_k = align_features(model, params, x_k, batch_size)
        d_k = mmd.mmd_distance(f_k, f_t)
        domains.append(DomainRow(k=k, risk=risk_k, d_mmd=d_k))

    tiny = 1e-12
    ratios = [(target_risk - d.risk) / d.d_mmd for d in domains if d.d_mmd > tiny]
    lambda_hat = max([0.0] + ratios)
    rhs = float(np.mean([d.risk + lambda_hat * d.d_mmd for d in domains]))
    return BoundReport(
        domains=domains,
        target_label=target_spec.label(),
        target_risk=target_risk,
        lambda_hat=lambda_hat,
        rhs=rhs,
        holds=bool(rhs >= target_risk - 1e-9),
        n_samples=n,
    )
