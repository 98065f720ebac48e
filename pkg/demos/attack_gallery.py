"""Attack gallery on a quickly trained toy digit classifier.

Trains a tiny 4-bit net for a handful of epochs on the synthetic digit
corpus, then runs every attack kind at a shared budget and prints how far
each one pushes the accuracy down. GN is the gradient-free baseline; the
gradient attacks should hurt more, typically PGD most of all.

    python3 demos/attack_gallery.py --eps 16 --steps 10
"""

import argparse
import os

import numpy as np

from robustq.attacks import AttackSpec, run_attack
from robustq.data import Dataset, load_mnist, mnist_paths
from robustq.digits import build_digits_corpus
from robustq.evaluate import predict_logits
from robustq.model import ArchConfig, accuracy, build_model
from robustq.train import TrainConfig, train_natural

ARCH = ArchConfig(in_channels=1, num_classes=10, widths=(8, 16),
                  blocks_per_stage=1, bits_w=4, bits_a=4)


def get_data(root):
    build_digits_corpus(root)
    train = load_mnist(*mnist_paths(root, "train"), split="train")
    test = load_mnist(*mnist_paths(root, "test"), split="test")
    sub = lambda ds, n: Dataset(ds.images[:n], ds.labels[:n], name=ds.name,
                                split=ds.split, num_classes=10)
    return sub(train, 2000), sub(test, 500)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eps", type=float, default=16.0, help="budget in /255")
    ap.add_argument("--steps", type=int, default=10)
    ap.add_argument("--epochs", type=int, default=14)
    ap.add_argument("--data-dir", default="artifacts/digits")
    args = ap.parse_args()

    train_ds, test_ds = get_data(args.data_dir)
    model, params = build_model(ARCH, seed=0)
    cfg = TrainConfig(epochs=args.epochs, batch_size=64, lr=0.1, seed=0)
    print(f"training {args.epochs} epochs on {len(train_ds)} images ...")
    params, log = train_natural(model, params, train_ds, cfg)
    print(f"final train acc {log[-1]['train_acc']:.3f}")

    eps = args.eps / 255.0
    alpha = eps / 4
    x0, y = test_ds.images, test_ds.labels
    clean = accuracy(predict_logits(model, params, x0), y)
    print(f"\nclean accuracy on {len(test_ds)} test images: {clean:.3f}")
    print(f"budget eps = {args.eps:g}/255, alpha = eps/4, {args.steps} steps\n")
    print(f"{'attack':<10s} {'accuracy':>9s} {'max |dx|':>10s}")

    for kind in ("gn", "fgsm", "bim", "pgd", "tpgd"):
        spec = AttackSpec(kind, eps=eps, alpha=alpha, steps=args.steps, seed=0)
        xa = run_attack(model, params, spec, x0, y)
        acc = accuracy(predict_logits(model, params, xa), y)
        print(f"{spec.label():<10s} {acc:9.3f} {np.abs(xa - x0).max():10.4f}")


if __name__ == "__main__":
    main()
