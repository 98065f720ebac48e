"""Data IO tests: IDX and CIFAR parsing, checkpoint round-trips, batching,
and rejection of malformed files."""

import gzip
import json
import os
import struct

import numpy as np
import pytest

from robustq.data import (Batch, DataFormatError, Dataset, batches,
                          load_checkpoint, load_cifar10, load_idx_images,
                          load_idx_labels, load_mnist, mnist_paths,
                          save_checkpoint, save_idx_images, save_idx_labels)


def make_idx_pair(tmp_path, n=7, gz=False):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, (n, 28, 28), dtype=np.uint8)
    labels = rng.integers(0, 10, n, dtype=np.uint8)
    suffix = ".gz" if gz else ""
    ip = str(tmp_path / f"imgs-idx3-ubyte{suffix}")
    lp = str(tmp_path / f"lbls-idx1-ubyte{suffix}")
    save_idx_images(ip, images)
    save_idx_labels(lp, labels)
    return ip, lp, images, labels


def test_idx_round_trip(tmp_path):
    ip, lp, images, labels = make_idx_pair(tmp_path)
    np.testing.assert_array_equal(load_idx_images(ip), images)
    np.testing.assert_array_equal(load_idx_labels(lp), labels)


def test_idx_gzip_round_trip(tmp_path):
    ip, lp, images, labels = make_idx_pair(tmp_path, gz=True)
    with open(ip, "rb") as f:
        assert f.read(2) == b"\x1f\x8b"
    np.testing.assert_array_equal(load_idx_images(ip), images)
    np.testing.assert_array_equal(load_idx_labels(lp), labels)


def test_load_mnist_scales_and_shapes(tmp_path):
    ip, lp, images, labels = make_idx_pair(tmp_path)
    ds = load_mnist(ip, lp)
    assert ds.images.shape == (7, 1, 28, 28)
    assert ds.images.dtype == np.float32
    assert ds.images.max() <= 1.0 and ds.images.min() >= 0.0
    np.testing.assert_allclose(ds.images[:, 0] * 255.0, images, atol=1e-4)
    assert ds.labels.dtype == np.int64


def test_idx_bad_magic(tmp_path):
    p = tmp_path / "bad"
    p.write_bytes(struct.pack(">IIII", 0xDEAD, 1, 28, 28) + b"\x00" * 784)
    with pytest.raises(DataFormatError):
        load_idx_images(str(p))


def test_idx_truncated(tmp_path):
    ip, lp, images, _ = make_idx_pair(tmp_path)
    raw = open(ip, "rb").read()
    p = tmp_path / "trunc"
    p.write_bytes(raw[:-10])
    with pytest.raises(DataFormatError):
        load_idx_images(str(p))


def test_idx_trailing_bytes(tmp_path):
    ip, _, _, _ = make_idx_pair(tmp_path)
    raw = open(ip, "rb").read()
    p = tmp_path / "extra"
    p.write_bytes(raw + b"\x00")
    with pytest.raises(DataFormatError):
        load_idx_images(str(p))


def test_idx_corrupt_gzip(tmp_path):
    ip, _, _, _ = make_idx_pair(tmp_path, gz=True)
    raw = bytearray(open(ip, "rb").read())
    raw[-5] ^= 0xFF  # corrupt the CRC32 trailer
    p = tmp_path / "poison.gz"
    p.write_bytes(bytes(raw))
    with pytest.raises(DataFormatError):
        load_idx_images(str(p))


def test_mnist_label_out_of_range(tmp_path):
    ip, lp, _, _ = make_idx_pair(tmp_path)
    labels = np.array([0, 1, 2, 3, 4, 5, 11], dtype=np.uint8)
    save_idx_labels(lp, labels)
    with pytest.raises(DataFormatError):
        load_mnist(ip, lp)


def test_mnist_count_mismatch(tmp_path):
    ip, lp, _, _ = make_idx_pair(tmp_path)
    save_idx_labels(lp, np.zeros(5, np.uint8))
    with pytest.raises(DataFormatError):
        load_mnist(ip, lp)


def test_mnist_paths_resolution(tmp_path):
    ip = tmp_path / "train-images-idx3-ubyte"
    lp = tmp_path / "train-labels-idx1-ubyte"
    save_idx_images(str(ip), np.zeros((2, 28, 28), np.uint8))
    save_idx_labels(str(lp), np.zeros(2, np.uint8))
    a, b = mnist_paths(str(tmp_path), "train")
    assert a == str(ip) and b == str(lp)
    with pytest.raises(FileNotFoundError):
        mnist_paths(str(tmp_path), "test")


def make_cifar_file(path, n=4, label_override=None):
    rng = np.random.default_rng(1)
    recs = []
    for i in range(n):
        label = rng.integers(0, 10) if label_override is None else label_override
        recs.append(bytes([label]) + rng.integers(0, 256, 3072, dtype=np.uint8).tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(recs))


def test_cifar_round_trip(tmp_path):
    p = str(tmp_path / "batch.bin")
    make_cifar_file(p, n=5)
    ds = load_cifar10([p])
    assert ds.images.shape == (5, 3, 32, 32)
    assert ds.images.dtype == np.float32
    assert len(ds.labels) == 5


def test_cifar_bad_size(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"\x00" * 3000)
    with pytest.raises(DataFormatError):
        load_cifar10([str(p)])


def test_cifar_bad_label(tmp_path):
    p = str(tmp_path / "lbl.bin")
    make_cifar_file(p, n=2, label_override=33)
    with pytest.raises(DataFormatError):
        load_cifar10([p])


def checkpoint_payload():
    rng = np.random.default_rng(2)
    return {
        "w": rng.standard_normal((3, 4)).astype(np.float32),
        "v": rng.standard_normal(7),
        "steps": np.arange(5, dtype=np.int64),
    }


def test_checkpoint_round_trip_bit_exact(tmp_path):
    p = str(tmp_path / "m.ckpt")
    params = checkpoint_payload()
    meta = {"mode": "odgq", "nested": {"a": [1, 2]}}
    save_checkpoint(p, params, meta)
    got, got_meta = load_checkpoint(p)
    assert got_meta == meta
    assert set(got) == set(params)
    for k in params:
        assert got[k].dtype == params[k].dtype
        np.testing.assert_array_equal(got[k], params[k])
    assert not os.path.exists(p + ".tmp")


def test_checkpoint_rejects_unsupported_dtype(tmp_path):
    with pytest.raises(DataFormatError):
        save_checkpoint(str(tmp_path / "x.ckpt"), {"a": np.zeros(2, np.uint16)}, {})


def test_checkpoint_bad_magic(tmp_path):
    p = tmp_path / "bad.ckpt"
    p.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(DataFormatError):
        load_checkpoint(str(p))


def test_checkpoint_bad_version(tmp_path):
    p = str(tmp_path / "v.ckpt")
    save_checkpoint(p, {"a": np.zeros(1, np.float32)}, {})
    raw = bytearray(open(p, "rb").read())
    raw[4:8] = struct.pack("<I", 99)
    open(p, "wb").write(bytes(raw))
    with pytest.raises(DataFormatError):
        load_checkpoint(p)


def test_checkpoint_trailing_garbage(tmp_path):
    p = str(tmp_path / "t.ckpt")
    save_checkpoint(p, {"a": np.zeros(1, np.float32)}, {})
    with open(p, "ab") as f:
        f.write(b"\x01")
    with pytest.raises(DataFormatError):
        load_checkpoint(p)


def test_checkpoint_meta_survives_unicode(tmp_path):
    p = str(tmp_path / "u.ckpt")
    save_checkpoint(p, {"a": np.zeros(1, np.float32)}, {"note": "café ≥ 10⁴"})
    _, meta = load_checkpoint(p)
    assert meta["note"] == "café ≥ 10⁴"


def test_batches_cover_dataset_once():
    ds = Dataset(np.zeros((10, 1, 2, 2), np.float32), np.arange(10, dtype=np.int64))
    seen = []
    sizes = []
    for b in batches(ds, 4, seed=0):
        assert isinstance(b, Batch)
        seen.extend(b.indices.tolist())
        sizes.append(len(b.y))
    assert sorted(seen) == list(range(10))
    assert sizes == [4, 4, 2]


def test_batches_seeded_and_ordered_modes():
    ds = Dataset(np.zeros((8, 1, 2, 2), np.float32), np.arange(8, dtype=np.int64))
    a = [b.indices.tolist() for b in batches(ds, 3, seed=5)]
    b = [b.indices.tolist() for b in batches(ds, 3, seed=5)]
    c = [b.indices.tolist() for b in batches(ds, 3, seed=6)]
    assert a == b
    assert a != c
    ordered = [b.indices.tolist() for b in batches(ds, 3, shuffle=False)]
    assert ordered == [[0, 1, 2], [3, 4, 5], [6, 7]]


def test_batches_yield_label_matched_rows():
    rng = np.random.default_rng(3)
    images = rng.uniform(0, 1, (12, 1, 2, 2)).astype(np.float32)
    ds = Dataset(images, np.arange(12, dtype=np.int64))
    for b in batches(ds, 5, seed=1):
        np.testing.assert_array_equal(b.y, b.indices)
        np.testing.assert_array_equal(b.x, images[b.indices])


def test_dataset_validation():
    with pytest.raises(DataFormatError):
        Dataset(np.zeros((3, 2, 2), np.float32), np.zeros(3, np.int64))
    with pytest.raises(DataFormatError):
        Dataset(np.zeros((3, 1, 2, 2), np.float32), np.zeros(4, np.int64))


def test_header_fuzz_smoke(tmp_path):
    """Flip bytes in the headers of valid files; parsers must either accept
    the mutant or raise DataFormatError, never anything else."""
    ip, lp, _, _ = make_idx_pair(tmp_path)
    ck = str(tmp_path / "f.ckpt")
    save_checkpoint(ck, checkpoint_payload(), {"k": 1})
    rng = np.random.default_rng(4)
    mutants = 0
    for path, loader, header_len in ((ip, load_idx_images, 16),
                                     (lp, load_idx_labels, 8),
                                     (ck, load_checkpoint, 40)):
        raw = bytearray(open(path, "rb").read())
        for _ in range(60):
            pos = int(rng.integers(0, header_len))
            bit = 1 << int(rng.integers(0, 8))
            mutated = bytearray(raw)
            mutated[pos] ^= bit
            mp = tmp_path / "mut"
            mp.write_bytes(bytes(mutated))
            try:
                loader(str(mp))
            except DataFormatError:
                pass
            mutants += 1
    assert mutants == 180
