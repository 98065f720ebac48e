"""What the fake-quantization operators actually do.

Prints the level grids for a few bitwidths, demonstrates idempotence and
the straight-through gradient window, and shows the binarization scales.

    python3 demos/quantizer_tour.py
"""

import numpy as np

from robustq import engine
from robustq.engine import Tape, Tensor
from robustq.quantize import (binarize_weight_array, num_levels,
                              quantize_activation_array, quantize_weight_array,
                              ste_backward)


def show_levels():
    x = np.linspace(0.0, 1.0, 1001)
    w = np.linspace(-1.0, 1.0, 1001)
    for bits in (1, 2, 4):
        if bits > 1:
            qa = np.unique(quantize_activation_array(x, bits))
            print(f"{bits}-bit activations ({len(qa)} levels): "
                  + " ".join(f"{v:.4f}" for v in qa))
        qw = np.unique(quantize_weight_array(w, bits) if bits > 1
                       else binarize_weight_array(w.reshape(1, -1)))
        print(f"{bits}-bit weights     ({len(qw)} levels): "
              + " ".join(f"{v:.4f}" for v in qw[:9])
              + (" ..." if len(qw) > 9 else ""))
    print(f"num_levels(4) = {num_levels(4)}  (2^4 - 1 grid cells)")


def show_idempotence():
    rng = np.random.default_rng(0)
    w = rng.uniform(-2, 2, 10000)
    q1 = quantize_weight_array(w, 4)
    q2 = quantize_weight_array(q1, 4)
    print(f"idempotent: {(q1 == q2).all()}  "
          f"(second pass changed {np.sum(q1 != q2)} of {len(w)} values)")


def show_ste():
    """The quantizer is a staircase, but gradients pass straight through
    inside the clipping window and are zeroed outside it."""
    x = np.array([-0.5, 0.0, 0.25, 0.75, 1.0, 1.5])
    tape = Tape()
    xt = Tensor(x, requires_grad=True)
    q = engine.clip(tape, xt, 0.0, 1.0)
    q = engine.round_ste(tape, q, scale=3.0)
    loss = engine.tsum(tape, q)
    g = engine.grad_for(engine.backward(tape, loss), xt)
    print("input      ", x)
    print("quantized  ", np.round(q.data, 4))
    print("st-e grad  ", g, " (1 inside [0,1], 0 outside)")
    manual = ste_backward(np.ones_like(x), x, 0.0, 1.0)
    print("grads match the array helper:", bool((g == manual).all()))


def show_binarization():
    rng = np.random.default_rng(1)
    w = rng.standard_normal((4, 3, 3, 3))
    b = binarize_weight_array(w, "per_channel")
    scales = np.abs(b).reshape(4, -1).max(axis=1)
    means = np.abs(w).reshape(4, -1).mean(axis=1)
    print("per-channel scales :", np.round(scales, 5))
    print("mean |w| per chan  :", np.round(means, 5))
    print("scale = mean(|w|)  :", np.allclose(scales, means, atol=1e-7))


if __name__ == "__main__":
    print("== level grids ==")
    show_levels()
    print("\n== idempotence ==")
    show_idempotence()
    print("\n== straight-through gradients ==")
    show_ste()
    print("\n== binarization ==")
    show_binarization()
