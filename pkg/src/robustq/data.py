"""Dataset loading, batch iteration and checkpoint serialisation.

Supported inputs:

* IDX image/label files (the MNIST container: big-endian magic, dims, raw
  bytes), transparently gunzipped when the file is gzip-compressed.
* CIFAR-10 binary batches (3073-byte records: label byte + 3x32x32 pixels).

Images always come out as float32 [N, C, H, W] scaled to [0, 1]; labels as
int64.  Parsers validate aggressively (magic numbers, exact payload length,
label range) because silently mis-sliced records corrupt every experiment
downstream.

Checkpoints are a single self-describing binary file:

    magic b"ODGQ" | u32 version | u32 json-len | meta JSON (utf-8)
    | u32 tensor-count | per tensor:
        u32 name-len | name utf-8 | u8 dtype-code | u32 rank
        | rank * u64 dims | raw little-endian C-order payload

Round-trips are bit-exact.  The meta JSON carries the architecture config
and training provenance (seed, epoch, config hash), so a checkpoint is
loadable without the run that produced it.
"""

from __future__ import annotations

import gzip
import io
import json
import os
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

IDX_MAGIC_IMAGES = 0x00000803
IDX_MAGIC_LABELS = 0x00000801

CHECKPOINT_MAGIC = b"ODGQ"
CHECKPOINT_VERSION = 1

_DTYPE_CODES = {0: "<f4", 1: "<f8", 2: "<i8"}
_DTYPE_TO_CODE = {np.dtype("float32"): 0, np.dtype("float64"): 1, np.dtype("int64"): 2}

_CIFAR_RECORD = 3073  # 1 label byte + 3*32*32 pixels


class DataFormatError(ValueError):
    pass


@dataclass
class Dataset:
    images: np.ndarray  # float32 [N, C, H, W] in [0, 1]
    labels: np.ndarray  # int64 [N]
    name: str = "dataset"
    split: str = "train"
    num_classes: int = 10

    def __post_init__(self):
        if self.images.ndim != 4:
            raise DataFormatError(f"images must be [N,C,H,W], got {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise DataFormatError(
                f"{self.images.shape[0]} images but {self.labels.shape} labels")

    def __len__(self):
        return self.images.shape[0]

    def subset(self, indices):
        return Dataset(self.images[indices], self.labels[indices],
                       self.name, self.split, self.num_classes)


@dataclass
class Batch:
    x: np.ndarray        # float32 [b, C, H, W]
    y: np.ndarray        # int64 [b]
    indices: np.ndarray  # int64 [b], positions in the parent dataset


def _read_exact(f, n, what):
    if n > 2**31:  # refuse absurd claims before asking the io layer to allocate
        raise DataFormatError(f"implausible size: {what} claims {n} bytes")
    buf = f.read(n)
    if len(buf) != n:
        raise DataFormatError(f"truncated file: wanted {n} bytes for {what}, got {len(buf)}")
    return buf


def _read_all_bytes(path):
    """Read a file fully, transparently gunzipping; decode errors are typed.

    Any compression-layer failure (bad gzip stream, premature end) surfaces
    as DataFormatError so callers can treat malformed inputs uniformly.
    """
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:2] == b"\x1f\x8b":
        try:
            return gzip.decompress(raw)
        except (OSError, EOFError, zlib.error) as e:
            raise DataFormatError(f"{path}: corrupt gzip stream: {e}") from e
    return raw


def load_idx_images(path):
    """Parse an IDX3 image file into a uint8 [N, rows, cols] array."""
    f = io.BytesIO(_read_all_bytes(path))
    magic, n, rows, cols = struct.unpack(">IIII", _read_exact(f, 16, "IDX image header"))
    if magic != IDX_MAGIC_IMAGES:
        raise DataFormatError(
            f"{path}: bad IDX image magic 0x{magic:08x} (expected 0x{IDX_MAGIC_IMAGES:08x})")
    payload = _read_exact(f, n * rows * cols, f"{n} images of {rows}x{cols}")
    if f.read(1):
        raise DataFormatError(f"{path}: trailing bytes after {n} images")
    return np.frombuffer(payload, dtype=np.uint8).reshape(n, rows, cols)


def load_idx_labels(path):
    """Parse an IDX1 label file into a uint8 [N] array."""
    f = io.BytesIO(_read_all_bytes(path))
    magic, n = struct.unpack(">II", _read_exact(f, 8, "IDX label header"))
    if magic != IDX_MAGIC_LABELS:
        raise DataFormatError(
            f"{path}: bad IDX label magic 0x{magic:08x} (expected 0x{IDX_MAGIC_LABELS:08x})")
    payload = _read_exact(f, n, f"{n} labels")
    if f.read(1):
        raise DataFormatError(f"{path}: trailing bytes after {n} labels")
    return np.frombuffer(payload, dtype=np.uint8)


def save_idx_images(path, images):
    """Write uint8 [N, rows, cols] images as an IDX3 file (inverse parser)."""
    images = np.ascontiguousarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_MAGIC_IMAGES, n, rows, cols))
        f.write(images.tobytes())


def save_idx_labels(path, labels):
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as f:
        f.write(struct.pack(">II", IDX_MAGIC_LABELS, labels.shape[0]))
        f.write(labels.tobytes())


def load_mnist(images_path, labels_path, name="mnist", split="train"):
    """Pair an IDX image file with its label file into a Dataset."""
    imgs = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if imgs.shape[0] != labels.shape[0]:
        raise DataFormatError(
            f"{imgs.shape[0]} images but {labels.shape[0]} labels")
    if labels.size and labels.max() > 9:
        raise DataFormatError(f"label {labels.max()} out of range 0..9")
    images = (imgs.astype(np.float32) / 255.0)[:, None, :, :]
    return Dataset(images, labels.astype(np.int64), name=name, split=split)


def mnist_paths(directory, split):
    """Standard MNIST filenames under a directory, .gz taken when present."""
    stems = {
        "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
        "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
    }
    if split not in stems:
        raise DataFormatError(f"split must be train or test, got {split!r}")
    out = []
    for stem in stems[split]:
        plain = os.path.join(directory, stem)
        gz = plain + ".gz"
        if os.path.exists(plain):
            out.append(plain)
        elif os.path.exists(gz):
            out.append(gz)
        else:
            raise FileNotFoundError(f"missing {stem}[.gz] in {directory}")
    return tuple(out)


def load_cifar10(paths, name="cifar10", split="train"):
    """Parse CIFAR-10 binary batch files (concatenated in the order given)."""
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    all_images, all_labels = [], []
    for path in paths:
        raw = _read_all_bytes(path)
        if len(raw) == 0 or len(raw) % _CIFAR_RECORD != 0:
            full = (len(raw) // _CIFAR_RECORD) * _CIFAR_RECORD
            raise DataFormatError(
                f"{path}: size {len(raw)} is not a multiple of {_CIFAR_RECORD}; "
                f"record truncated at byte offset {full}")
        arr = np.frombuffer(raw, dtype=np.uint8).reshape(-1, _CIFAR_RECORD)
        labels = arr[:, 0]
        bad = np.nonzero(labels > 9)[0]
        if bad.size:
            raise DataFormatError(
                f"{path}: record {bad[0]} has label {labels[bad[0]]} (valid range 0..9)")
        images = arr[:, 1:].reshape(-1, 3, 32, 32)
        all_images.append(images)
        all_labels.append(labels)
    images = np.concatenate(all_images).astype(np.float32) / 255.0
    labels = np.concatenate(all_labels).astype(np.int64)
    return Dataset(images, labels, name=name, split=split)


def batches(dataset, batch_size, seed=0, shuffle=True):
    """Yield Batch(x, y, indices) covering the dataset once.

    The order is a pure function of (len, batch_size, seed, shuffle); the
    final batch may be short.  ``indices`` are positions in ``dataset`` and
    key the per-sample randomness of downstream consumers.
    """
    n = len(dataset)
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    order = (np.random.default_rng(seed).permutation(n) if shuffle
             else np.arange(n))
    for lo in range(0, n, batch_size):
        sel = order[lo:lo + batch_size]
        yield Batch(x=dataset.images[sel], y=dataset.labels[sel],
                    indices=sel.astype(np.int64))


# -- checkpoints -------------------------------------------------------------


def save_checkpoint(path, params, meta):
    """Serialise a param dict plus JSON-able meta; bit-exact round-trip."""
    blob = io.BytesIO()
    blob.write(CHECKPOINT_MAGIC)
    blob.write(struct.pack("<I", CHECKPOINT_VERSION))
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    blob.write(struct.pack("<I", len(meta_bytes)))
    blob.write(meta_bytes)
    blob.write(struct.pack("<I", len(params)))
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name])
        code = _DTYPE_TO_CODE.get(arr.dtype)
        if code is None:
            raise DataFormatError(f"tensor {name!r}: unsupported dtype {arr.dtype}")
        arr = arr.astype(_DTYPE_CODES[code], copy=False)  # force little-endian
        name_bytes = name.encode("utf-8")
        blob.write(struct.pack("<I", len(name_bytes)))
        blob.write(name_bytes)
        blob.write(struct.pack("<BI", code, arr.ndim))
        blob.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        blob.write(arr.tobytes())
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(blob.getvalue())
    os.replace(tmp, path)


def load_checkpoint(path):
    """Read a checkpoint; returns (params, meta).  Validates the container."""
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, "checkpoint magic")
        if magic != CHECKPOINT_MAGIC:
            raise DataFormatError(
                f"{path}: bad checkpoint magic {magic!r} (expected {CHECKPOINT_MAGIC!r})")
        (version,) = struct.unpack("<I", _read_exact(f, 4, "version"))
        if version != CHECKPOINT_VERSION:
            raise DataFormatError(
                f"{path}: unsupported checkpoint version {version}")
        (meta_len,) = struct.unpack("<I", _read_exact(f, 4, "meta length"))
        try:
            meta = json.loads(_read_exact(f, meta_len, "meta JSON").decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise DataFormatError(f"{path}: corrupt meta JSON: {e}") from e
        (count,) = struct.unpack("<I", _read_exact(f, 4, "tensor count"))
        params = {}
        for t in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(f, 4, f"tensor {t} name length"))
            try:
                name = _read_exact(f, name_len, f"tensor {t} name").decode("utf-8")
            except UnicodeDecodeError as e:
                raise DataFormatError(f"{path}: tensor {t}: undecodable name: {e}") from e
            if name in params:
                raise DataFormatError(f"{path}: duplicate tensor name {name!r}")
            code, rank = struct.unpack("<BI", _read_exact(f, 5, f"{name}: dtype/rank"))
            if code not in _DTYPE_CODES:
                raise DataFormatError(f"{path}: {name}: unknown dtype code {code}")
            dims = struct.unpack(f"<{rank}Q", _read_exact(f, 8 * rank, f"{name}: dims"))
            dtype = np.dtype(_DTYPE_CODES[code])
            n_elems = 1
            for d in dims:  # python ints: no overflow on hostile dims
                n_elems *= d
            raw = _read_exact(f, n_elems * dtype.itemsize, f"{name}: payload")
            params[name] = np.frombuffer(raw, dtype=dtype).reshape(dims).copy()
        if f.read(1):
            raise DataFormatError(f"{path}: trailing bytes after {count} tensors")
    return params, meta
