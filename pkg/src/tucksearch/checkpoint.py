"""Binary checkpoint container for named tensors.

Layout (all integers little-endian):

    magic    8 bytes  b"TCSRCKP1"
    version  u32
    confhash 32 bytes (sha256 of the canonical run configuration)
    count    u32
    then per tensor, sorted by name:
    name_len u32, name utf-8, dtype tag u8, rank u8,
    extents  rank x u64, payload (C order)

Text metadata (network description, rank plan, progress counters) travels as
uint8 tensors under "meta/" names; the sampling generator state as a 6-word
uint64 tensor. Writing the same tensors twice produces identical bytes.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import DataFormatError

__all__ = [
    "MAGIC",
    "VERSION",
    "save_checkpoint",
    "load_checkpoint",
    "pack_text",
    "unpack_text",
    "pack_rng_state",
    "restore_rng_state",
]

MAGIC = b"TCSRCKP1"
VERSION = 1

_TAG_FOR_DTYPE = {
    np.dtype(np.float64): 1,
    np.dtype(np.float32): 2,
    np.dtype(np.int64): 3,
    np.dtype(np.uint8): 4,
    np.dtype(np.uint64): 5,
    np.dtype(np.int32): 6,
}
_DTYPE_FOR_TAG = {v: k for k, v in _TAG_FOR_DTYPE.items()}


def save_checkpoint(path, tensors: dict[str, np.ndarray], config_hash: bytes) -> None:
    if len(config_hash) != 32:
        raise ValueError("config_hash must be 32 bytes")
    for name in tensors:
        if not name:
            raise ValueError("empty tensor name")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(config_hash)
        fh.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            arr = np.ascontiguousarray(tensors[name])
            key = arr.dtype.newbyteorder("=") if arr.dtype.byteorder in "<>" else arr.dtype
            if np.dtype(key) not in _TAG_FOR_DTYPE:
                raise ValueError(f"{name}: cannot store dtype {arr.dtype}")
            tag = _TAG_FOR_DTYPE[np.dtype(key)]
            nb = name.encode("utf-8")
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<BB", tag, arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())


def _read_exact(fh, n: int, path, what: str) -> bytes:
    raw = fh.read(n)
    if len(raw) != n:
        raise DataFormatError(f"{path}: truncated while reading {what}")
    return raw


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], bytes]:
    tensors: dict[str, np.ndarray] = {}
    with open(path, "rb") as fh:
        if _read_exact(fh, 8, path, "magic") != MAGIC:
            raise DataFormatError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, path, "version"))
        if version != VERSION:
            raise DataFormatError(f"{path}: unsupported checkpoint version {version}")
        config_hash = _read_exact(fh, 32, path, "config hash")
        (count,) = struct.unpack("<I", _read_exact(fh, 4, path, "tensor count"))
        for i in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4, path, f"tensor {i} name"))
            name = _read_exact(fh, name_len, path, f"tensor {i} name").decode("utf-8")
            tag, rank = struct.unpack("<BB", _read_exact(fh, 2, path, f"{name} header"))
            if tag not in _DTYPE_FOR_TAG:
                raise DataFormatError(f"{path}: {name}: unknown dtype tag {tag}")
            shape = struct.unpack(f"<{rank}Q", _read_exact(fh, 8 * rank, path, f"{name} shape"))
            dtype = _DTYPE_FOR_TAG[tag]
            nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize if rank else dtype.itemsize
            if rank == 0:
                shape = ()
            payload = _read_exact(fh, nbytes, path, f"{name} payload")
            if name in tensors:
                raise DataFormatError(f"{path}: duplicate tensor {name!r}")
            arr = np.frombuffer(payload, dtype=dtype.newbyteorder("<")).reshape(shape)
            tensors[name] = arr.astype(dtype)
        if fh.read(1):
            raise DataFormatError(f"{path}: trailing bytes after last tensor")
    return tensors, config_hash


def pack_text(text: str) -> np.ndarray:
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).copy()


def unpack_text(arr: np.ndarray) -> str:
    if arr.dtype != np.uint8:
        raise DataFormatError("text tensors must be uint8")
    return arr.tobytes().decode("utf-8")


def pack_rng_state(rng: np.random.Generator) -> np.ndarray:
    """Six uint64 words capturing a PCG64 generator exactly."""
    st = rng.bit_generator.state
    if st["bit_generator"] != "PCG64":
        raise ValueError("only PCG64 generators are supported")
    mask = (1 << 64) - 1
    s, inc = st["state"]["state"], st["state"]["inc"]
    return np.array(
        [s & mask, s >> 64, inc & mask, inc >> 64, st["has_uint32"], st["uinteger"]],
        dtype=np.uint64,
    )


def restore_rng_state(words: np.ndarray) -> np.random.Generator:
    words = np.asarray(words, dtype=np.uint64)
    if words.shape != (6,):
        raise DataFormatError("generator state must be six words")
    w = [int(v) for v in words]
    rng = np.random.default_rng(0)
    rng.bit_generator.state = {
        "bit_generator": "PCG64",
        "state": {"state": w[0] | (w[1] << 64), "inc": w[2] | (w[3] << 64)},
        "has_uint32": w[4],
        "uinteger": w[5],
    }
    return rng
