"""Reverse-mode automatic differentiation over numpy arrays.

A ``Tape`` records primitive applications in execution order; ``backward``
replays the records in reverse, accumulating vector-Jacobian products into a
gradient map keyed by tensor id.  The primitive vocabulary is fixed and small:
everything the package differentiates (convolutions, batch norm, losses,
quantizer surrogates, kernel distances) is expressed in terms of it.

Design points worth knowing:

* Passing ``tape=None`` to any primitive computes values only: no node is
  recorded and no intermediate is saved.  Evaluation loops use this path.
* Gradients accumulate out-of-place (``grads[i] = grads[i] + g``), so a
  vector-Jacobian product may safely return views of the upstream gradient.
* Ops that need an input's gradient only when that input requires one skip
  the corresponding work entirely (e.g. conv2d does not keep its im2col
  buffer, nor compute the weight gradient, during input-only attack passes).
* ``sign`` is a hard constant: its output never requires grad.  The
  straight-through surrogates (``round-ste``, ``clip``, ``binarize``) are the
  ops that pass gradient through a non-differentiable forward.
"""

from __future__ import annotations

import itertools

import numpy as np


class EngineError(Exception):
    pass


class ShapeError(EngineError):
    pass


class GraphError(EngineError):
    pass


class NonFiniteError(EngineError):
    pass


# Module switches and instrumentation.  ``check_finite`` validates every
# primitive output (slow; tests and debugging only).  ``stats`` counts
# backward passes so training-loop invariants can be asserted cheaply.
check_finite = False

stats = {"backward_passes": 0}


def reset_stats():
    stats["backward_passes"] = 0


_ids = itertools.count()


class Tensor:
    """A numpy array plus an identity and a requires-grad flag.

    Wrapping is cheap: the array is referenced, never copied.
    """

    __slots__ = ("data", "requires_grad", "id")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data)
        self.requires_grad = bool(requires_grad)
        self.id = next(_ids)

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(id={self.id}, shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


class Node:
    __slots__ = ("kind", "inputs", "output", "vjp")

    def __init__(self, kind, inputs, output, vjp):
        self.kind = kind
        self.inputs = inputs
        self.output = output
        self.vjp = vjp


class Tape:
    """Execution-ordered record of primitive applications."""

    def __init__(self):
        self.nodes = []

    def __len__(self):
        return len(self.nodes)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# primitive implementations
#
# Each implementation receives the input Tensors, the attribute dict and a
# tuple saying which inputs need gradients, and returns (out_array, vjp) where
# vjp(g) -> list of per-input gradient arrays (None where not needed).  When
# nothing needs a gradient the vjp may be None.


def _impl_add(inputs, attrs, needs):
    a, b = inputs[0].data, inputs[1].data
    out = a + b

    def vjp(g):
        return [
            _unbroadcast(g, a.shape) if needs[0] else None,
            _unbroadcast(g, b.shape) if needs[1] else None,
        ]

    return out, vjp


def _impl_sub(inputs, attrs, needs):
    a, b = inputs[0].data, inputs[1].data
    out = a - b

    def vjp(g):
        return [
            _unbroadcast(g, a.shape) if needs[0] else None,
            _unbroadcast(-g, b.shape) if needs[1] else None,
        ]

    return out, vjp


def _impl_mul_scalar(inputs, attrs, needs):
    a = inputs[0].data
    c = attrs["value"]
    out = a * a.dtype.type(c)

    def vjp(g):
        return [g * a.dtype.type(c)]

    return out, vjp


def _impl_matmul(inputs, attrs, needs):
    a, b = inputs[0].data, inputs[1].data
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    out = a @ b

    def vjp(g):
        ga = g @ b.T if needs[0] else None
        gb = a.T @ g if needs[1] else None
        return [ga, gb]

    return out, vjp


def _im2col(x, kh, kw, stride, pad):
    """[B,C,H,W] -> ([B*Ho*Wo, C*kh*kw], Ho, Wo) patch matrix."""
    B, C, H, W = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    Hp, Wp = x.shape[2], x.shape[3]
    Ho = (Hp - kh) // stride + 1
    Wo = (Wp - kw) // stride + 1
    sB, sC, sH, sW = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x,
        shape=(B, Ho, Wo, C, kh, kw),
        strides=(sB, sH * stride, sW * stride, sC, sH, sW),
        writeable=False,
    )
    col = np.ascontiguousarray(windows).reshape(B * Ho * Wo, C * kh * kw)
    return col, Ho, Wo


def _col2im(gcol, x_shape, kh, kw, stride, pad, Ho, Wo):
    """Adjoint of _im2col: scatter-add patch gradients back to image layout."""
    B, C, H, W = x_shape
    gx = np.zeros((B, C, H + 2 * pad, W + 2 * pad), dtype=gcol.dtype)
    g6 = gcol.reshape(B, Ho, Wo, C, kh, kw)
    for i in range(kh):
        for j in range(kw):
            # all output positions read input pixel (i + stride*oh, j + stride*ow)
            gx[:, :, i : i + stride * Ho : stride, j : j + stride * Wo : stride] += (
                g6[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    if pad:
        gx = gx[:, :, pad : pad + H, pad : pad + W]
    return gx


def _impl_conv2d(inputs, attrs, needs):
    x, w = inputs[0].data, inputs[1].data
    stride = attrs.get("stride", 1)
    pad = attrs.get("pad", 0)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-d input and weight, got {x.shape}, {w.shape}")
    B, C, H, W = x.shape
    Co, Ci, kh, kw = w.shape
    if Ci != C:
        raise ShapeError(f"conv2d: input has {C} channels, weight expects {Ci}")
    if H + 2 * pad < kh or W + 2 * pad < kw:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {H + 2 * pad}x{W + 2 * pad}")
    col, Ho, Wo = _im2col(x, kh, kw, stride, pad)
    wmat = w.reshape(Co, Ci * kh * kw)
    out = (col @ wmat.T).reshape(B, Ho, Wo, Co).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out)
    # The im2col buffer is only needed for the weight gradient; drop it in
    # input-only (attack) passes to keep memory flat.
    col_saved = col if needs[1] else None

    def vjp(g):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(B * Ho * Wo, Co)
        gw = (g2.T @ col_saved).reshape(w.shape) if needs[1] else None
        if needs[0]:
            gcol = g2 @ wmat
            gx = _col2im(gcol, x.shape, kh, kw, stride, pad, Ho, Wo)
        else:
            gx = None
        return [gx, gw]

    return out, vjp


def _impl_relu(inputs, attrs, needs):
    x = inputs[0].data
    out = np.maximum(x, 0)

    def vjp(g):
        return [g * (x > 0)]

    return out, vjp


def _impl_batchnorm(inputs, attrs, needs):
    """Per-channel batch normalization over an NCHW (or NC) tensor.

    attrs:
      eps       variance floor
      mode      "train" (batch stats), "eval" (use running), "given" (use
                attrs-provided stats; no update)
      running_mean / running_var   1-d arrays, mutated in place when
                mode == "train" and update_running is true
      momentum  keep-old weight for the running update
      mean / var                   stats applied when mode == "given"
      update_running               bool
    """
    x, gamma, beta = inputs[0].data, inputs[1].data, inputs[2].data
    eps = attrs.get("eps", 1e-5)
    mode = attrs.get("mode", "train")
    C = x.shape[1]
    if gamma.shape != (C,) or beta.shape != (C,):
        raise ShapeError(f"batchnorm: gamma/beta must have shape ({C},)")
    axes = (0,) if x.ndim == 2 else (0, 2, 3)
    bshape = (1, C) if x.ndim == 2 else (1, C, 1, 1)

    if mode == "train":
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)  # biased
        if attrs.get("update_running", True):
            m = attrs["momentum"]
            rm, rv = attrs["running_mean"], attrs["running_var"]
            rm *= m
            rm += (1.0 - m) * mean
            rv *= m
            rv += (1.0 - m) * var
    elif mode == "eval":
        mean, var = attrs["running_mean"], attrs["running_var"]
    elif mode == "given":
        mean, var = attrs["mean"], attrs["var"]
    else:
        raise EngineError(f"batchnorm: unknown mode {mode!r}")

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean.reshape(bshape)) * inv_std.reshape(bshape)
    out = gamma.reshape(bshape) * xhat + beta.reshape(bshape)
    out = out.astype(x.dtype, copy=False)

    if mode == "train":

        def vjp(g):
            gxhat = g * gamma.reshape(bshape)
            dgamma = (g * xhat).sum(axis=axes) if needs[1] else None
            dbeta = g.sum(axis=axes) if needs[2] else None
            if needs[0]:
                n = x.size // C
                s1 = gxhat.sum(axis=axes, keepdims=True)
                s2 = (gxhat * xhat).sum(axis=axes, keepdims=True)
                gx = (inv_std.reshape(bshape) / n) * (n * gxhat - s1 - xhat * s2)
                gx = gx.astype(x.dtype, copy=False)
            else:
                gx = None
            return [gx, dgamma, dbeta]

    else:
        # Frozen stats: the transform is affine per channel.
        def vjp(g):
            scale = (gamma * inv_std).reshape(bshape)
            gx = (g * scale).astype(x.dtype, copy=False) if needs[0] else None
            dgamma = (g * xhat).sum(axis=axes) if needs[1] else None
            dbeta = g.sum(axis=axes) if needs[2] else None
            return [gx, dgamma, dbeta]

    return out, vjp


def _impl_avgpool2d(inputs, attrs, needs):
    x = inputs[0].data
    kh, kw = attrs["window"]
    B, C, H, W = x.shape
    if H % kh or W % kw:
        raise ShapeError(f"avgpool2d: window {kh}x{kw} does not tile input {H}x{W}")
    out = x.reshape(B, C, H // kh, kh, W // kw, kw).mean(axis=(3, 5))

    def vjp(g):
        gexp = np.broadcast_to(
            g[:, :, :, None, :, None] / (kh * kw), (B, C, H // kh, kh, W // kw, kw)
        )
        return [np.ascontiguousarray(gexp).reshape(x.shape).astype(x.dtype, copy=False)]

    return out, vjp


def _impl_flatten(inputs, attrs, needs):
    x = inputs[0].data
    out = x.reshape(x.shape[0], -1)

    def vjp(g):
        return [g.reshape(x.shape)]

    return out, vjp


def _impl_softmax_cross_entropy(inputs, attrs, needs):
    """Mean cross-entropy of softmax(logits) against labels.

    attrs carry either integer ``labels`` [B] or a ``targets`` [B,K] row-
    stochastic matrix of soft labels.
    """
    z = inputs[0].data
    if z.ndim != 2:
        raise ShapeError(f"softmax-cross-entropy: logits must be 2-d, got {z.shape}")
    B, K = z.shape
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    sez = ez.sum(axis=1, keepdims=True)
    logp = (z - zmax) - np.log(sez)
    probs = ez / sez
    labels = attrs.get("labels")
    if labels is not None:
        labels = np.asarray(labels)
        if labels.shape != (B,):
            raise ShapeError(f"softmax-cross-entropy: labels shape {labels.shape} != ({B},)")
        if labels.min() < 0 or labels.max() >= K:
            raise EngineError(f"softmax-cross-entropy: label out of range [0, {K})")
        loss = -logp[np.arange(B), labels].mean()
        tgt = None
    else:
        tgt = np.asarray(attrs["targets"])
        if tgt.shape != z.shape:
            raise ShapeError(f"softmax-cross-entropy: targets shape {tgt.shape} != {z.shape}")
        loss = -(tgt * logp).sum(axis=1).mean()
    out = np.asarray(loss, dtype=z.dtype)

    def vjp(g):
        # g is a scalar array
        if tgt is None:
            delta = probs.copy()
            delta[np.arange(B), labels] -= 1.0
        else:
            delta = probs - tgt
        return [(g / B) * delta.astype(z.dtype, copy=False)]

    return out, vjp


def _restore_axes(g, shape, axis):
    if axis is None:
        return np.broadcast_to(g, shape)
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    gshape = list(shape)
    for a in axes:
        gshape[a] = 1
    return np.broadcast_to(g.reshape(gshape), shape)


def _impl_sum(inputs, attrs, needs):
    x = inputs[0].data
    axis = attrs.get("axis")
    out = x.sum(axis=axis)

    def vjp(g):
        return [_restore_axes(g, x.shape, axis).astype(x.dtype, copy=False)]

    return np.asarray(out), vjp


def _impl_mean(inputs, attrs, needs):
    x = inputs[0].data
    axis = attrs.get("axis")
    out = x.mean(axis=axis)
    if axis is None:
        count = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([x.shape[a] for a in axes]))

    def vjp(g):
        return [(_restore_axes(g, x.shape, axis) / count).astype(x.dtype, copy=False)]

    return np.asarray(out), vjp


def _impl_exp(inputs, attrs, needs):
    out = np.exp(inputs[0].data)

    def vjp(g):
        return [g * out]

    return out, vjp


def _impl_square(inputs, attrs, needs):
    x = inputs[0].data
    out = x * x

    def vjp(g):
        return [2.0 * x * g]

    return out, vjp


def _impl_pairwise_sq_dist(inputs, attrs, needs):
    a, b = inputs[0].data, inputs[1].data
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"pairwise-sq-dist: need [m,F] and [n,F], got {a.shape}, {b.shape}")
    diff = a[:, None, :] - b[None, :, :]  # [m, n, F]
    out = np.einsum("mnf,mnf->mn", diff, diff)

    def vjp(g):
        ga = 2.0 * np.einsum("mn,mnf->mf", g, diff) if needs[0] else None
        gb = -2.0 * np.einsum("mn,mnf->nf", g, diff) if needs[1] else None
        return [ga, gb]

    return out, vjp


def _impl_sign(inputs, attrs, needs):
    # Hard constant: sign carries no gradient (use round-ste/binarize for
    # straight-through behaviour).  sign(0) == 0.
    return np.sign(inputs[0].data), None


def _impl_clip(inputs, attrs, needs):
    x = inputs[0].data
    lo, hi = attrs["lo"], attrs["hi"]
    if not lo < hi:
        raise EngineError(f"clip: lo={lo} must be < hi={hi}")
    out = np.clip(x, lo, hi)

    def vjp(g):
        return [g * ((x >= lo) & (x <= hi))]

    return out, vjp


def _round_half_away(x):
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def grid_round(x, scale=1.0, offset=0.0):
    """round((x + offset) * scale) / scale - offset, half away from zero.

    Computed in float64 regardless of input dtype so that grid values are
    stable and re-rounding a rounded tensor is exact; callers cast back.
    """
    x64 = np.asarray(x, dtype=np.float64)
    return _round_half_away((x64 + offset) * scale) / scale - offset


def _impl_round_ste(inputs, attrs, needs):
    x = inputs[0].data
    out = grid_round(x, attrs.get("scale", 1.0), attrs.get("offset", 0.0)).astype(x.dtype)

    def vjp(g):
        return [g]

    return out, vjp


def _impl_binarize(inputs, attrs, needs):
    """alpha * sgn(x) with sgn(0) = +1 and alpha = mean(|x|) per group.

    attrs["granularity"]: "per_layer" (one alpha) or "per_channel" (alpha per
    leading-axis slice).  alpha is treated as a constant in the backward pass;
    the gradient is the clipped straight-through estimate 1{|x| <= 1}.
    """
    x = inputs[0].data
    if x.size == 0:
        raise EngineError("binarize: empty tensor")
    gran = attrs.get("granularity", "per_layer")
    sgn = np.where(x >= 0, 1.0, -1.0).astype(x.dtype)
    if gran == "per_layer":
        alpha = np.abs(x).mean()
        out = (alpha * sgn).astype(x.dtype, copy=False)
    elif gran == "per_channel":
        axes = tuple(range(1, x.ndim))
        alpha = np.abs(x).mean(axis=axes, keepdims=True)
        out = (alpha * sgn).astype(x.dtype, copy=False)
    else:
        raise EngineError(f"binarize: unknown granularity {gran!r}")

    def vjp(g):
        return [g * (np.abs(x) <= 1.0)]

    return out, vjp


def _impl_concat(inputs, attrs, needs):
    a, b = inputs[0].data, inputs[1].data
    if a.shape[1:] != b.shape[1:]:
        raise ShapeError(f"concat: trailing dims differ, {a.shape} vs {b.shape}")
    out = np.concatenate([a, b], axis=0)
    m = a.shape[0]

    def vjp(g):
        return [
            g[:m] if needs[0] else None,
            g[m:] if needs[1] else None,
        ]

    return out, vjp


def _impl_slice_rows(inputs, attrs, needs):
    x = inputs[0].data
    lo, hi = attrs["start"], attrs["stop"]
    if not (0 <= lo <= hi <= x.shape[0]):
        raise ShapeError(f"slice-rows: [{lo}, {hi}) out of range for {x.shape[0]} rows")
    out = x[lo:hi]

    def vjp(g):
        gx = np.zeros_like(x)
        gx[lo:hi] = g
        return [gx]

    return out, vjp


_PRIMITIVES = {
    "add": _impl_add,
    "sub": _impl_sub,
    "mul-scalar": _impl_mul_scalar,
    "matmul": _impl_matmul,
    "conv2d": _impl_conv2d,
    "relu": _impl_relu,
    "batchnorm": _impl_batchnorm,
    "avgpool2d": _impl_avgpool2d,
    "flatten": _impl_flatten,
    "softmax-cross-entropy": _impl_softmax_cross_entropy,
    "sum": _impl_sum,
    "mean": _impl_mean,
    "exp": _impl_exp,
    "square": _impl_square,
    "pairwise-sq-dist": _impl_pairwise_sq_dist,
    "sign": _impl_sign,
    "clip": _impl_clip,
    "round-ste": _impl_round_ste,
    "binarize": _impl_binarize,
    "concat": _impl_concat,
    "slice-rows": _impl_slice_rows,
}


def forward_primitive(tape, kind, inputs, attrs=None):
    """Apply one primitive, recording it on ``tape`` (when given).

    Returns the output ``Tensor``.  ``tape=None`` computes the value without
    recording; no gradient will flow through the application.
    """
    impl = _PRIMITIVES.get(kind)
    if impl is None:
        raise EngineError(f"unknown primitive kind {kind!r}")
    inputs = [_as_tensor(t) for t in inputs]
    record = tape is not None
    needs = tuple(record and t.requires_grad for t in inputs)
    out_data, vjp = impl(inputs, attrs or {}, needs)
    if check_finite and not np.all(np.isfinite(out_data)):
        raise NonFiniteError(f"non-finite output from primitive {kind!r}")
    out = Tensor(out_data, requires_grad=any(needs) and vjp is not None)
    if record and out.requires_grad:
        tape.nodes.append(Node(kind, inputs, out, vjp))
    return out


def backward(tape, loss):
    """Walk ``tape`` in reverse from ``loss``; return {tensor_id: gradient}.

    ``loss`` must be scalar.  Gradients appear for every requires-grad tensor
    on a path to the loss; fan-out accumulates additively.
    """
    if not isinstance(loss, Tensor):
        raise GraphError("backward: loss must be a Tensor")
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise GraphError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    stats["backward_passes"] += 1
    grads = {loss.id: np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.get(node.output.id)
        if g is None:
            continue
        in_grads = node.vjp(g)
        for t, gi in zip(node.inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            if check_finite and not np.all(np.isfinite(gi)):
                raise NonFiniteError(f"non-finite gradient from primitive {node.kind!r}")
            prev = grads.get(t.id)
            grads[t.id] = gi if prev is None else prev + gi
    return grads


def grad_for(grads, tensor):
    """Fetch ``tensor``'s gradient from a backward() result, or raise."""
    g = grads.get(tensor.id)
    if g is None:
        if not tensor.requires_grad:
            raise GraphError(f"tensor {tensor.id} is detached (requires_grad=False)")
        raise GraphError(f"tensor {tensor.id} has no path to the loss")
    return g


def finite_diff_check(builder, point, step=1e-4):
    """Compare reverse-mode and central-difference gradients.

    ``builder(tape, x)`` must map a Tensor to a scalar loss Tensor and be
    deterministic; it is evaluated twice at ``point`` and the values must
    match bitwise.  Returns the max elementwise relative error
    |g_ad - g_num| / max(1, |g_ad|), computed in float64.
    """
    point = np.asarray(point, dtype=np.float64)
    tape = Tape()
    x = Tensor(point.copy(), requires_grad=True)
    loss = builder(tape, x)
    loss2 = builder(None, Tensor(point.copy(), requires_grad=True))
    if loss.data != loss2.data:
        raise GraphError(
            "finite_diff_check: builder is not deterministic "
            f"({loss.data!r} vs {loss2.data!r})"
        )
    g = grad_for(backward(tape, loss), x).astype(np.float64)

    num = np.empty_like(point)
    flat = point.reshape(-1)
    nflat = num.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = float(builder(None, Tensor(point.copy(), requires_grad=True)).data)
        flat[i] = orig - step
        fm = float(builder(None, Tensor(point.copy(), requires_grad=True)).data)
        flat[i] = orig
        nflat[i] = (fp - fm) / (2.0 * step)
    rel = np.abs(g - num) / np.maximum(1.0, np.abs(g))
    return float(rel.max())


# Convenience wrappers -------------------------------------------------------


def add(tape, a, b):
    return forward_primitive(tape, "add", [a, b])


def sub(tape, a, b):
    return forward_primitive(tape, "sub", [a, b])


def mul_scalar(tape, a, value):
    return forward_primitive(tape, "mul-scalar", [a], {"value": float(value)})


def matmul(tape, a, b):
    return forward_primitive(tape, "matmul", [a, b])


def conv2d(tape, x, w, stride=1, pad=0):
    return forward_primitive(tape, "conv2d", [x, w], {"stride": stride, "pad": pad})


def relu(tape, x):
    return forward_primitive(tape, "relu", [x])


def batchnorm(tape, x, gamma, beta, **attrs):
    return forward_primitive(tape, "batchnorm", [x, gamma, beta], attrs)


def avgpool2d(tape, x, window):
    return forward_primitive(tape, "avgpool2d", [x], {"window": window})


def flatten(tape, x):
    return forward_primitive(tape, "flatten", [x])


def softmax_cross_entropy(tape, logits, labels=None, targets=None):
    attrs = {"labels": labels} if targets is None else {"targets": targets}
    return forward_primitive(tape, "softmax-cross-entropy", [logits], attrs)


def tsum(tape, x, axis=None):
    return forward_primitive(tape, "sum", [x], {"axis": axis})


def tmean(tape, x, axis=None):
    return forward_primitive(tape, "mean", [x], {"axis": axis})


def exp(tape, x):
    return forward_primitive(tape, "exp", [x])


def square(tape, x):
    return forward_primitive(tape, "square", [x])


def pairwise_sq_dist(tape, a, b):
    return forward_primitive(tape, "pairwise-sq-dist", [a, b])


def sign(tape, x):
    return forward_primitive(tape, "sign", [x])


def clip(tape, x, lo, hi):
    return forward_primitive(tape, "clip", [x], {"lo": float(lo), "hi": float(hi)})


def round_ste(tape, x, scale=1.0, offset=0.0):
    return forward_primitive(tape, "round-ste", [x], {"scale": float(scale), "offset": float(offset)})


def binarize(tape, x, granularity="per_layer"):
    return forward_primitive(tape, "binarize", [x], {"granularity": granularity})


def concat(tape, a, b):
    return forward_primitive(tape, "concat", [a, b])


def slice_rows(tape, x, start, stop):
    return forward_primitive(tape, "slice-rows", [x], {"start": start, "stop": stop})
