"""Tour of the tape-based autodiff engine.

Builds a few small graphs, runs reverse mode, and compares every gradient
against central finite differences. Finishes with the full conv net graph.

Run from the repository root:

    python3 demos/autodiff_from_scratch.py
"""

import argparse

import numpy as np

from robustq import engine
from robustq.engine import Tape, Tensor
from robustq.model import ArchConfig, build_model, cross_entropy, wrap_params


def scalar_chain(step):
    """d/dx of sum((relu(x @ w))^2) checked against finite differences."""
    rng = np.random.default_rng(0)
    x = rng.standard_normal((4, 6))
    w = rng.standard_normal((6, 3))

    def builder(tape, xt):
        h = engine.relu(tape, engine.matmul(tape, xt, Tensor(w)))
        return engine.tsum(tape, engine.square(tape, h))

    err = engine.finite_diff_check(builder, x, step=step)
    print(f"matmul -> relu -> square -> sum   rel err {err:.3e}")


def conv_block(step):
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 3, 8, 8))
    w = rng.standard_normal((4, 3, 3, 3)) * 0.3

    def builder(tape, xt):
        h = engine.conv2d(tape, xt, Tensor(w), stride=1, pad=1)
        h = engine.avgpool2d(tape, h, window=(2, 2))
        return engine.tsum(tape, engine.square(tape, h))

    err = engine.finite_diff_check(builder, x, step=step)
    print(f"conv2d -> avgpool -> square -> sum rel err {err:.3e}")


def whole_network(step):
    """Gradient of the training loss with respect to the input image."""
    arch = ArchConfig(in_channels=1, num_classes=10, widths=(4,),
                      blocks_per_stage=1, bits_w=32, bits_a=32)
    model, params = build_model(arch, seed=0)
    params = {k: v.astype(np.float64) for k, v in params.items()}
    rng = np.random.default_rng(2)
    x = rng.random((2, 1, 8, 8))
    y = rng.integers(0, 10, 2)

    def builder(tape, xt):
        out = model.forward(tape, wrap_params(params, False), xt, mode="eval")
        return cross_entropy(tape, out.logits, y)

    err = engine.finite_diff_check(builder, x, step=step)
    print(f"full network cross-entropy         rel err {err:.3e}")


def gradient_accumulation():
    """A tensor used twice receives the sum of both contributions."""
    tape = Tape()
    x = Tensor(np.array([3.0]), requires_grad=True)
    y = engine.add(tape, x, x)          # y = 2x, dy/dx = 2
    loss = engine.tsum(tape, engine.square(tape, y))  # (2x)^2 -> 8x
    grads = engine.backward(tape, loss)
    g = engine.grad_for(grads, x)
    print(f"reuse: d/dx (2x)^2 at x=3 is {g[0]:.1f} (expected 24.0)")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--step", type=float, default=1e-5,
                    help="finite difference step size")
    args = ap.parse_args()

    print("== finite-difference agreement (float64) ==")
    scalar_chain(args.step)
    conv_block(args.step)
    whole_network(args.step)
    print()
    print("== tape mechanics ==")
    gradient_accumulation()
    print(f"backward passes so far: {engine.stats['backward_passes']}")


if __name__ == "__main__":
    main()
