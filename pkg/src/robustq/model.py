"""Residual CNN with optional low-bitwidth fake quantization.

The architecture is a small pre-stem ResNet: a 3x3 stem convolution, a few
stages of post-activation residual blocks (conv-bn-relu-conv-bn, projection
shortcut on shape change, stride 2 between stages), global average pooling
and a linear classifier head.  The flattened post-pool vector is exposed as
the model's *align features*: the representation whose distribution the
training-time alignment loss compares across clean and perturbed inputs.

Quantization policy:

* ``bits_w`` / ``bits_a`` in 2..8 snap weights / activations of every block
  conv to the uniform grids in :mod:`robustq.quantize`.  Activations are
  quantized where they feed a quantized conv (the clipped [0,1] grid sits
  naturally after relu).
* ``bits_w == 1`` binarizes block-conv weights to alpha * sgn(w).
* ``bits_a == 1`` replaces relu with a sign activation (alpha * sgn, the
  binary-network convention); a [0,1] grid has no 1-bit analogue worth
  training.
* The stem conv and the head stay full precision unless
  ``quantize_first_last`` is set.  bits == 32 means full precision.

Parameters live in a flat ``{name: ndarray}`` dict; ``wrap_params`` turns it
into engine Tensors (sharing storage) for recorded forwards.  BatchNorm
running statistics live in the same dict under ``*.rmean`` / ``*.rvar`` and
are the only non-trainable entries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import engine, quantize
from .engine import Tensor


@dataclass(frozen=True)
class ArchConfig:
    """Shape of the network; everything needed to rebuild it exactly."""

    in_channels: int = 1
    num_classes: int = 10
    widths: tuple = (8, 16, 32)
    blocks_per_stage: int = 1
    bits_w: int = 32
    bits_a: int = 32
    quantize_first_last: bool = False
    binarize_granularity: str = "per_channel"

    def to_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["widths"] = list(self.widths)
        return d

    @staticmethod
    def from_dict(d):
        d = dict(d)
        d["widths"] = tuple(d["widths"])
        return ArchConfig(**d)


@dataclass
class ModelOutput:
    logits: Tensor
    features: Tensor  # align features: flattened global-average-pool output


def is_trainable(name):
    return not name.endswith((".rmean", ".rvar"))


def wrap_params(params, requires_grad=True):
    """Wrap a param dict in Tensors sharing the same storage.

    Running stats are never marked trainable.  With requires_grad=False the
    whole bundle is frozen (attack and evaluation passes).
    """
    return {
        name: Tensor(arr, requires_grad=requires_grad and is_trainable(name))
        for name, arr in params.items()
    }


class Model:
    """Builder + functional forward for one ``ArchConfig``."""

    def __init__(self, arch: ArchConfig):
        if len(arch.widths) == 0:
            raise ValueError("widths must be non-empty")
        if arch.blocks_per_stage < 1:
            raise ValueError("blocks_per_stage must be >= 1")
        for b in (arch.bits_w, arch.bits_a):
            if b != 32 and not 1 <= b <= 8:
                raise ValueError(f"bits must be 1..8 or 32, got {b}")
        self.arch = arch
        # (name, out_ch, in_ch, ksize, stride, pad, quantized)
        self._convs = []
        self._bns = []
        w = arch.widths
        self._convs.append(("stem.conv", w[0], arch.in_channels, 3, 1, 1,
                            arch.quantize_first_last))
        self._bns.append("stem.bn")
        cin = w[0]
        for si, width in enumerate(w):
            for bi in range(arch.blocks_per_stage):
                stride = 2 if (si > 0 and bi == 0) else 1
                p = f"s{si}.b{bi}"
                self._convs.append((f"{p}.conv1", width, cin, 3, stride, 1, True))
                self._bns.append(f"{p}.bn1")
                self._convs.append((f"{p}.conv2", width, width, 3, 1, 1, True))
                self._bns.append(f"{p}.bn2")
                if stride != 1 or cin != width:
                    self._convs.append((f"{p}.proj.conv", width, cin, 1, stride, 0, True))
                    self._bns.append(f"{p}.proj.bn")
                cin = width
        self.feature_dim = w[-1]

    # -- parameters ---------------------------------------------------------

    def init_params(self, seed=0):
        """He fan-in initialisation; BN at identity; zero linear bias."""
        rng = np.random.default_rng(seed)
        params = {}
        for name, co, ci, k, _s, _p, _q in self._convs:
            fan_in = ci * k * k
            params[f"{name}.w"] = (
                rng.standard_normal((co, ci, k, k)) * np.sqrt(2.0 / fan_in)
            ).astype(np.float32)
        for name in self._bns:
            c = self._bn_channels(name)
            params[f"{name}.gamma"] = np.ones(c, np.float32)
            params[f"{name}.beta"] = np.zeros(c, np.float32)
            params[f"{name}.rmean"] = np.zeros(c, np.float32)
            params[f"{name}.rvar"] = np.ones(c, np.float32)
        fan_in = self.feature_dim
        params["head.w"] = (
            rng.standard_normal((fan_in, self.arch.num_classes)) * np.sqrt(2.0 / fan_in)
        ).astype(np.float32)
        params["head.b"] = np.zeros(self.arch.num_classes, np.float32)
        return params

    def _bn_channels(self, bn_name):
        conv_name = bn_name.replace(".bn1", ".conv1").replace(".bn2", ".conv2")
        conv_name = conv_name.replace("stem.bn", "stem.conv").replace(".proj.bn", ".proj.conv")
        for name, co, *_ in self._convs:
            if name == conv_name:
                return co
        raise KeyError(bn_name)

    def num_trainable(self, params):
        return int(sum(v.size for k, v in params.items() if is_trainable(k)))

    # -- forward ------------------------------------------------------------

    def _weight(self, tape, pt, conv_name, quantized):
        w = pt[f"{conv_name}.w"]
        if not quantized or self.arch.bits_w == 32:
            return w
        if self.arch.bits_w == 1:
            return quantize.binarize_weight(tape, w, self.arch.binarize_granularity)
        return quantize.quantize_weight(tape, w, self.arch.bits_w)

    def _act(self, tape, h, feeds_quantized):
        """relu, then the activation grid where a quantized conv consumes it."""
        if not feeds_quantized or self.arch.bits_a == 32:
            return engine.relu(tape, h)
        if self.arch.bits_a == 1:
            return engine.binarize(tape, h, granularity="per_layer")
        return quantize.quantize_activation(tape, engine.relu(tape, h), self.arch.bits_a)

    def _bn(self, tape, pt, name, h, mode, update_running, stats_out, stats_in):
        attrs = dict(eps=1e-5, momentum=0.9)
        if stats_in is not None:
            attrs.update(mode="given", mean=stats_in[name][0], var=stats_in[name][1])
        elif mode == "train":
            attrs.update(
                mode="train",
                update_running=update_running,
                running_mean=pt[f"{name}.rmean"].data,
                running_var=pt[f"{name}.rvar"].data,
            )
        else:
            attrs.update(
                mode="eval",
                running_mean=pt[f"{name}.rmean"].data,
                running_var=pt[f"{name}.rvar"].data,
            )
        out = engine.batchnorm(
            tape, h, pt[f"{name}.gamma"], pt[f"{name}.beta"], **attrs)
        if stats_out is not None and mode == "train" and stats_in is None:
            x = h.data if isinstance(h, Tensor) else h
            axes = (0,) if x.ndim == 2 else (0, 2, 3)
            stats_out[name] = (x.mean(axis=axes), x.var(axis=axes))
        return out

    def forward(self, tape, pt, x, mode="train", update_running=True,
                stats_out=None, stats_in=None):
        """Run the network; return ModelOutput(logits, features).

        pt is a wrap_params() dict.  mode "train" uses batch statistics in
        BN (updating running stats when update_running); "eval" applies the
        stored running stats.  stats_out, when a dict, collects the batch
        (mean, var) per BN layer; stats_in applies previously collected
        stats instead of batch or running ones.
        """
        if mode not in ("train", "eval"):
            raise ValueError(f"unknown mode {mode!r}")
        arch = self.arch
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.data.ndim != 4 or x.data.shape[1] != arch.in_channels:
            raise engine.ShapeError(
                f"input must be [B,{arch.in_channels},H,W], got {x.data.shape}")

        bn = lambda name, h: self._bn(tape, pt, name, h, mode, update_running,
                                      stats_out, stats_in)

        head_q = arch.quantize_first_last
        stem_name, _, _, _, s_stride, s_pad, stem_q = self._convs[0]
        h = x
        if stem_q and arch.bits_a != 32:
            # stem input is already in [0,1]; grid it directly (no relu)
            if arch.bits_a == 1:
                h = engine.binarize(tape, h, granularity="per_layer")
            else:
                h = quantize.quantize_activation(tape, h, arch.bits_a)
        h = engine.conv2d(tape, h, self._weight(tape, pt, stem_name, stem_q),
                          stride=s_stride, pad=s_pad)
        h = bn("stem.bn", h)
        h = self._act(tape, h, feeds_quantized=True)

        ci = 1  # index into self._convs
        w = arch.widths
        for si in range(len(w)):
            for bi in range(arch.blocks_per_stage):
                p = f"s{si}.b{bi}"
                name1, _, _, _, st1, pd1, q1 = self._convs[ci]
                ci += 1
                name2, _, _, _, st2, pd2, q2 = self._convs[ci]
                ci += 1
                shortcut = h
                b1 = engine.conv2d(tape, h, self._weight(tape, pt, name1, q1),
                                   stride=st1, pad=pd1)
                b1 = bn(f"{p}.bn1", b1)
                b1 = self._act(tape, b1, feeds_quantized=True)
                b2 = engine.conv2d(tape, b1, self._weight(tape, pt, name2, q2),
                                   stride=st2, pad=pd2)
                b2 = bn(f"{p}.bn2", b2)
                if ci < len(self._convs) and self._convs[ci][0] == f"{p}.proj.conv":
                    pname, _, _, _, pst, ppd, pq = self._convs[ci]
                    ci += 1
                    sc = engine.conv2d(tape, shortcut,
                                       self._weight(tape, pt, pname, pq),
                                       stride=pst, pad=ppd)
                    shortcut = bn(f"{p}.proj.bn", sc)
                h = engine.add(tape, b2, shortcut)
                last = si == len(w) - 1 and bi == arch.blocks_per_stage - 1
                h = self._act(tape, h, feeds_quantized=not last or head_q)

        pooled = engine.avgpool2d(tape, h, window=h.data.shape[2:])
        features = engine.flatten(tape, pooled)
        head_w = pt["head.w"]
        if head_q and arch.bits_w != 32:
            if arch.bits_w == 1:
                head_w = quantize.binarize_weight(tape, head_w, arch.binarize_granularity)
            else:
                head_w = quantize.quantize_weight(tape, head_w, arch.bits_w)
        feats_in = features
        if head_q and arch.bits_a != 32 and arch.bits_a != 1:
            feats_in = quantize.quantize_activation(tape, features, arch.bits_a)
        logits = engine.add(
            tape, engine.matmul(tape, feats_in, head_w), pt["head.b"])
        return ModelOutput(logits=logits, features=features)


def cross_entropy(tape, logits, labels):
    """Mean softmax cross-entropy against integer labels."""
    return engine.softmax_cross_entropy(tape, logits, labels=labels)


def accuracy(logits, labels):
    """Fraction of argmax predictions matching ``labels`` (plain arrays)."""
    z = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    return float((z.argmax(axis=1) == np.asarray(labels)).mean())


def build_model(arch: ArchConfig, seed=0):
    """Construct (model, params) for an architecture config."""
    m = Model(arch)
    return m, m.init_params(seed)
