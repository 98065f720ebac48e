"""Build a 28x28 handwritten-digit corpus in MNIST's IDX container format.

For machines without the real MNIST files, this synthesises a stand-in from
sklearn's bundled corpus of 1797 genuine handwritten 8x8 digits: each base
image is upsampled to 28x28 and expanded into several augmented variants
(seeded rotation, isotropic scale, translation, contrast jitter).  The base
images are split into train/test pools *before* augmentation, so no test
variant shares a source image with any training variant.

The output is written as real IDX files (train-images-idx3-ubyte etc.), so
consumers exercise exactly the same parsing path as with the original
dataset.  Everything is deterministic given the seed.
"""

from __future__ import annotations

import os

import numpy as np
from scipy import ndimage

from . import data


def _augment(img28, rng):
    """One random affine + contrast variant of a [0,1] 28x28 image."""
    angle = rng.uniform(-12.0, 12.0)
    scale = rng.uniform(0.88, 1.12)
    shift = rng.uniform(-2.2, 2.2, size=2)
    theta = np.deg2rad(angle)
    rot = np.array([[np.cos(theta), -np.sin(theta)],
                    [np.sin(theta), np.cos(theta)]])
    mat = rot / scale
    center = np.array([13.5, 13.5])
    offset = center - mat @ (center + shift)
    out = ndimage.affine_transform(img28, mat, offset=offset, order=1,
                                   mode="constant", cval=0.0)
    out = out * rng.uniform(0.8, 1.0) + rng.uniform(0.0, 0.02)
    return np.clip(out, 0.0, 1.0)


def build_digits_corpus(out_dir, train_count=10000, test_count=2000, seed=0):
    """Write train/test IDX files under ``out_dir``; returns the four paths.

    Files follow the standard names (train-images-idx3-ubyte, ...).  Reruns
    with the same arguments are no-ops (files are left in place).
    """
    from sklearn.datasets import load_digits

    names = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
             "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")
    paths = tuple(os.path.join(out_dir, n) for n in names)
    if all(os.path.exists(p) for p in paths):
        return paths
    os.makedirs(out_dir, exist_ok=True)

    base = load_digits()
    images8 = base.images / 16.0  # [1797, 8, 8] in [0, 1]
    labels = base.target.astype(np.int64)

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(images8))
    n_test_base = max(len(order) // 6, 1)
    test_base, train_base = order[:n_test_base], order[n_test_base:]

    up = np.stack([
        np.clip(ndimage.zoom(im, 28 / 8, order=3), 0.0, 1.0) for im in images8
    ])

    def make_split(base_idx, count, split_rng):
        imgs = np.empty((count, 28, 28), np.uint8)
        labs = np.empty(count, np.uint8)
        picks = split_rng.integers(0, len(base_idx), size=count)
        for i, p in enumerate(picks):
            j = base_idx[p]
            var = _augment(up[j], split_rng)
            imgs[i] = np.round(var * 255.0).astype(np.uint8)
            labs[i] = labels[j]
        return imgs, labs

    train_imgs, train_labs = make_split(train_base, train_count,
                                        np.random.default_rng(seed + 1))
    test_imgs, test_labs = make_split(test_base, test_count,
                                      np.random.default_rng(seed + 2))

    data.save_idx_images(paths[0], train_imgs)
    data.save_idx_labels(paths[1], train_labs)
    data.save_idx_images(paths[2], test_imgs)
    data.save_idx_labels(paths[3], test_labs)
    return paths
