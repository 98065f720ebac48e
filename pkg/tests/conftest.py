import os
from pathlib import Path

import numpy as np
import pytest

from robustq.data import Dataset, load_mnist, mnist_paths
from robustq.digits import build_digits_corpus
from robustq.model import ArchConfig, build_model

ROOT = Path(__file__).resolve().parents[1]


def corpus_dir():
    """Directory holding the IDX digit corpus; honors ROBUSTQ_MNIST_DIR."""
    override = os.environ.get("ROBUSTQ_MNIST_DIR")
    if override:
        return Path(override)
    d = ROOT / "artifacts" / "digits"
    build_digits_corpus(str(d))
    return d


@pytest.fixture(scope="session")
def digits_dir():
    return str(corpus_dir())


@pytest.fixture(scope="session")
def train_ds(digits_dir):
    imgs, labels = mnist_paths(digits_dir, "train")
    return load_mnist(imgs, labels, split="train")


@pytest.fixture(scope="session")
def test_ds(digits_dir):
    imgs, labels = mnist_paths(digits_dir, "test")
    return load_mnist(imgs, labels, split="test")


TINY_ARCH = ArchConfig(in_channels=1, num_classes=10, widths=(4,),
                       blocks_per_stage=1, bits_w=4, bits_a=4)


@pytest.fixture()
def tiny_model():
    """Small untrained 8x8 model, cheap enough for property loops."""
    return build_model(TINY_ARCH, seed=3)


def random_dataset(n=64, shape=(1, 8, 8), classes=10, seed=0):
    rng = np.random.default_rng(seed)
    images = rng.uniform(0.0, 1.0, (n,) + shape).astype(np.float32)
    labels = rng.integers(0, classes, size=n).astype(np.int64)
    return Dataset(images, labels, name="synthetic", num_classes=classes)


@pytest.fixture()
def rand_ds():
    return random_dataset()
