"""Dataset loading, synthetic data, hashed train/validation splits, batching.

Image datasets are float64 arrays shaped (N, C, H, W) with values roughly in
[0, 1], paired with int64 label vectors. Two on-disk formats are supported:
the classic big-endian IDX pair (images + labels) and a one-line-per-sample
CSV with a `label,pixel0,pixel1,...` header.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError

__all__ = [
    "Batch",
    "read_idx",
    "write_idx",
    "load_idx_dataset",
    "load_csv_dataset",
    "save_csv_dataset",
    "synthetic_dataset",
    "splitmix64",
    "hash_split",
    "iter_batches",
]

_IDX_DTYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
_IDX_CODES = {np.dtype(v.str[1:]): k for k, v in _IDX_DTYPES.items()}


@dataclass(frozen=True)
class Batch:
    inputs: np.ndarray
    labels: np.ndarray


def read_idx(path) -> np.ndarray:
    """Read one IDX tensor (big-endian magic, u32 extents, raw payload)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if len(magic) != 4 or magic[0] != 0 or magic[1] != 0:
            raise DataFormatError(f"{path}: not an IDX file")
        code, ndim = magic[2], magic[3]
        if code not in _IDX_DTYPES:
            raise DataFormatError(f"{path}: unknown IDX dtype code 0x{code:02x}")
        if ndim < 1:
            raise DataFormatError(f"{path}: zero-dimensional IDX tensor")
        raw = fh.read(4 * ndim)
        if len(raw) != 4 * ndim:
            raise DataFormatError(f"{path}: truncated IDX header")
        extents = struct.unpack(f">{ndim}I", raw)
        dtype = _IDX_DTYPES[code]
        count = int(np.prod(extents))
        payload = fh.read(count * dtype.itemsize)
        if len(payload) != count * dtype.itemsize:
            raise DataFormatError(f"{path}: truncated IDX payload")
    arr = np.frombuffer(payload, dtype=dtype).reshape(extents)
    return arr.astype(dtype.str[1:])


def write_idx(arr: np.ndarray, path) -> None:
    arr = np.asarray(arr)
    key = np.dtype(arr.dtype.str[1:]) if arr.dtype.byteorder in "<>=" else arr.dtype
    if key not in _IDX_CODES:
        raise DataFormatError(f"cannot store dtype {arr.dtype} as IDX")
    code = _IDX_CODES[key]
    with open(path, "wb") as fh:
        fh.write(bytes([0, 0, code, arr.ndim]))
        fh.write(struct.pack(f">{arr.ndim}I", *arr.shape))
        fh.write(np.ascontiguousarray(arr, dtype=_IDX_DTYPES[code]).tobytes())


def load_idx_dataset(images_path, labels_path) -> tuple[np.ndarray, np.ndarray]:
    """IDX image/label pair as (N, C, H, W) float64 and (N,) int64.

    Three-way image tensors get a singleton channel axis. Unsigned byte
    images are scaled to [0, 1].
    """
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if images.ndim == 3:
        images = images[:, None]
    if images.ndim != 4:
        raise DataFormatError(f"{images_path}: images must be 3- or 4-way, got {images.ndim}")
    if labels.ndim != 1:
        raise DataFormatError(f"{labels_path}: labels must be one-dimensional")
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(
            f"image count {images.shape[0]} does not match label count {labels.shape[0]}"
        )
    if images.shape[0] == 0:
        raise DataFormatError(f"{images_path}: empty dataset")
    x = images.astype(np.float64)
    if images.dtype == np.uint8:
        x /= 255.0
    return x, labels.astype(np.int64)


def load_csv_dataset(path, channels: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """CSV with a `label,pixel0,...` header, one sample per row.

    Pixels fill (channels, H, W) row-major with H = W; pixel values above 1.0
    anywhere mean byte data, which is scaled by 1/255.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        if not header or header[0].strip() != "label":
            raise DataFormatError(f"{path}: first header field must be 'label'")
        width = len(header) - 1
        if width < 1:
            raise DataFormatError(f"{path}: no pixel columns")
        rows = []
        labels = []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != width + 1:
                raise DataFormatError(f"{path}:{lineno}: expected {width + 1} fields")
            try:
                labels.append(int(row[0]))
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise DataFormatError(f"{path}: no samples")
    if width % channels:
        raise DataFormatError(f"{path}: {width} pixels do not split into {channels} channels")
    side = int(round((width // channels) ** 0.5))
    if side * side * channels != width:
        raise DataFormatError(f"{path}: {width} pixels is not a square image")
    x = np.asarray(rows, dtype=np.float64).reshape(len(rows), channels, side, side)
    if x.max() > 1.0:
        x /= 255.0
    return x, np.asarray(labels, dtype=np.int64)


def save_csv_dataset(inputs: np.ndarray, labels: np.ndarray, path) -> None:
    n, c, h, w = inputs.shape
    if h != w:
        raise DataFormatError("CSV datasets require square images")
    flat = inputs.reshape(n, -1)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"pixel{i}" for i in range(flat.shape[1])])
        for i in range(n):
            writer.writerow([int(labels[i])] + [repr(float(v)) for v in flat[i]])


def synthetic_dataset(
    num_samples: int,
    num_classes: int = 10,
    channels: int = 3,
    hw: tuple[int, int] = (12, 12),
    seed: int = 0,
    noise: float = 0.25,
) -> tuple[np.ndarray, np.ndarray]:
    """Classifiable toy images: each class gets a smooth random template, and
    samples are the template of their class plus Gaussian noise, clipped to
    [0, 1]. Fully determined by the seed."""
    if num_samples < 1 or num_classes < 2:
        raise ValueError("need at least 1 sample and 2 classes")
    h, w = hw
    rng = np.random.default_rng(seed)
    coarse = rng.uniform(0.0, 1.0, size=(num_classes, channels, 4, 4))
    reps_h, reps_w = -(-h // 4), -(-w // 4)
    templates = np.kron(coarse, np.ones((1, 1, reps_h, reps_w)))[:, :, :h, :w]
    labels = rng.integers(0, num_classes, size=num_samples)
    x = templates[labels] + noise * rng.normal(size=(num_samples, channels, h, w))
    return np.clip(x, 0.0, 1.0), labels.astype(np.int64)


def splitmix64(x: int) -> int:
    """One scrambling round of the splitmix64 generator (pure function)."""
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


def hash_split(
    n: int, validation_fraction: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Stateless index split: sample i goes to validation when the hash of
    (seed, i) falls below the fraction. Membership of a sample depends only
    on its index and the seed, never on n."""
    if not (0.0 <= validation_fraction < 1.0):
        raise ValueError("validation fraction must be in [0, 1)")
    if n < 1:
        raise DataFormatError("empty dataset")
    base = splitmix64(seed & 0xFFFFFFFFFFFFFFFF)
    u = np.fromiter(
        ((splitmix64(base ^ i) >> 11) / float(1 << 53) for i in range(n)),
        dtype=np.float64,
        count=n,
    )
    val_mask = u < validation_fraction
    idx = np.arange(n)
    return idx[~val_mask], idx[val_mask]


def iter_batches(
    inputs: np.ndarray,
    labels: np.ndarray,
    batch_size: int,
    rng: np.random.Generator | None = None,
):
    """Yield minibatches in order, or in a shuffled order drawn from `rng`.
    The final batch may be smaller."""
    n = inputs.shape[0]
    if n < 1:
        raise DataFormatError("empty dataset")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = rng.permutation(n) if rng is not None else np.arange(n)
    for start in range(0, n, batch_size):
        take = order[start : start + batch_size]
        yield Batch(inputs[take], labels[take])
