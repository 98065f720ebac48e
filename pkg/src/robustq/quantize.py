"""Fake quantization with straight-through gradients.

Uniform quantizers simulate b-bit inference inside float arithmetic:

* activations snap to the n = 2**b - 1 level grid on [0, 1]:
      a_q = round(clip(a, 0, 1) * n) / n
* weights snap to the symmetric grid on [-1, 1]:
      w_q = 2 * round((clip(w, -1, 1) + 1) / 2 * n) / n - 1

Rounding is half-away-from-zero, computed in float64 so that re-quantizing a
quantized tensor is an exact no-op in float32.  Binary (1-bit) weights use
the sign-times-mean-magnitude scheme instead: w_b = alpha * sgn(w) with
sgn(0) = +1 and alpha = mean(|w|) taken per layer or per output channel.

Backward passes use the straight-through estimator: the rounding step passes
gradients unchanged, the clip contributes 1{lo <= x <= hi}, so the quantizers
as a whole back-propagate the clipped pass-through mask.  bits == 32 means
"leave full precision alone" and is an exact identity.
"""

from __future__ import annotations

import numpy as np

from . import engine
from .engine import Tensor


class QuantError(ValueError):
    pass


def _check_bits(bits, *, lo=1):
    if not isinstance(bits, (int, np.integer)) or isinstance(bits, bool):
        raise QuantError(f"bits must be an int, got {bits!r}")
    if bits != 32 and not (lo <= bits <= 8):
        raise QuantError(f"bits must be {lo}..8 or 32, got {bits}")


def num_levels(bits):
    """Grid size n = 2**b - 1 (15 steps for 4 bits, 3 for 2 bits)."""
    return (1 << bits) - 1


def quantize_activation(tape, a, bits):
    """Snap activations to the uniform b-bit grid on [0, 1].

    Records clip and round-ste on the tape, so the gradient that flows back
    is the straight-through mask 1{0 <= a <= 1}.  bits == 32 returns the
    input tensor untouched.
    """
    _check_bits(bits, lo=2)
    a = a if isinstance(a, Tensor) else Tensor(a)
    if bits == 32:
        return a
    n = num_levels(bits)
    c = engine.clip(tape, a, 0.0, 1.0)
    return engine.round_ste(tape, c, scale=n)


def quantize_weight(tape, w, bits):
    """Snap weights to the symmetric uniform b-bit grid on [-1, 1].

    The grid 2*round((w+1)/2 * n)/n - 1 is realised as one affine rounding
    with scale n/2 and offset 1.  Straight-through backward with the clip
    mask 1{-1 <= w <= 1}.  bits == 32 is the identity; bits == 1 is rejected
    (binary weights use ``binarize_weight``, which carries the magnitude
    scale).
    """
    _check_bits(bits, lo=2)
    w = w if isinstance(w, Tensor) else Tensor(w)
    if bits == 32:
        return w
    n = num_levels(bits)
    c = engine.clip(tape, w, -1.0, 1.0)
    return engine.round_ste(tape, c, scale=0.5 * n, offset=1.0)


def binarize_weight(tape, w, granularity="per_channel"):
    """1-bit weights: alpha * sgn(w), alpha = mean(|w|) over the group.

    ``granularity`` is "per_channel" (one alpha per leading-axis slice, the
    usual choice for conv weights) or "per_layer".  alpha is constant in the
    backward pass; gradients pass straight through where |w| <= 1.
    """
    if granularity not in ("per_channel", "per_layer"):
        raise QuantError(f"unknown binarize granularity {granularity!r}")
    return engine.binarize(tape, w, granularity=granularity)


def ste_backward(upstream, pre_input, lo=0.0, hi=1.0):
    """Clipped straight-through estimate: upstream * 1{lo <= x <= hi}.

    Standalone helper mirroring what the recorded quantizer ops do, for
    callers that manage gradients by hand.
    """
    upstream = np.asarray(upstream)
    pre_input = np.asarray(pre_input)
    if not lo < hi:
        raise QuantError(f"ste_backward: lo={lo} must be < hi={hi}")
    if upstream.shape != pre_input.shape:
        raise QuantError(
            f"ste_backward: shape mismatch {upstream.shape} vs {pre_input.shape}")
    return upstream * ((pre_input >= lo) & (pre_input <= hi))


# Plain-array forms (no tape, no Tensor wrapping), used by tests and by
# value-only code paths.  They apply clip-then-grid_round exactly as the
# recorded ops do, so values agree bitwise with the tape path.


def quantize_activation_array(a, bits):
    _check_bits(bits, lo=2)
    a = np.asarray(a)
    if bits == 32:
        return a
    return engine.grid_round(np.clip(a, 0.0, 1.0), scale=num_levels(bits)).astype(a.dtype)


def quantize_weight_array(w, bits):
    _check_bits(bits, lo=2)
    w = np.asarray(w)
    if bits == 32:
        return w
    return engine.grid_round(
        np.clip(w, -1.0, 1.0), scale=0.5 * num_levels(bits), offset=1.0
    ).astype(w.dtype)


def binarize_weight_array(w, granularity="per_channel"):
    w = np.asarray(w)
    if w.size == 0:
        raise QuantError("binarize: empty tensor")
    sgn = np.where(w >= 0, 1.0, -1.0).astype(w.dtype)
    if granularity == "per_layer":
        alpha = np.abs(w).mean()
    elif granularity == "per_channel":
        alpha = np.abs(w).mean(axis=tuple(range(1, w.ndim)), keepdims=True)
    else:
        raise QuantError(f"unknown granularity {granularity!r}")
    return (alpha * sgn).astype(w.dtype)
