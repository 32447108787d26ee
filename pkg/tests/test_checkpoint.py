"""Checkpoint container byte layout, round-trips, corruption handling."""

import struct

import numpy as np
import pytest

from tucksearch.checkpoint import (
    MAGIC,
    VERSION,
    load_checkpoint,
    pack_rng_state,
    pack_text,
    restore_rng_state,
    save_checkpoint,
    unpack_text,
)
from tucksearch.errors import DataFormatError

HASH = bytes(range(32))


def sample_tensors():
    rng = np.random.default_rng(81)
    return {
        "model/w": rng.normal(size=(3, 4)),
        "model/b": rng.normal(size=5).astype(np.float32),
        "meta/epoch": np.array([7], dtype=np.int64),
        "meta/text": pack_text("hello"),
        "rng/words": rng.integers(0, 2**63, size=6).astype(np.uint64),
        "idx": np.array([1, -2, 3], dtype=np.int32),
    }


class TestRoundTrip:
    def test_tensors_and_hash_survive(self, tmp_path):
        path = tmp_path / "c.ckpt"
        tensors = sample_tensors()
        save_checkpoint(path, tensors, HASH)
        back, h = load_checkpoint(path)
        assert h == HASH
        assert sorted(back) == sorted(tensors)
        for name, arr in tensors.items():
            assert back[name].dtype == arr.dtype
            np.testing.assert_array_equal(back[name], arr)

    def test_bytes_independent_of_insertion_order(self, tmp_path):
        tensors = sample_tensors()
        reversed_tensors = dict(reversed(list(tensors.items())))
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(p1, tensors, HASH)
        save_checkpoint(p2, reversed_tensors, HASH)
        assert p1.read_bytes() == p2.read_bytes()

    def test_header_layout(self, tmp_path):
        path = tmp_path / "c.ckpt"
        save_checkpoint(path, {"x": np.zeros(2)}, HASH)
        raw = path.read_bytes()
        assert raw[:8] == MAGIC
        assert struct.unpack("<I", raw[8:12]) == (VERSION,)
        assert raw[12:44] == HASH
        assert struct.unpack("<I", raw[44:48]) == (1,)
        # name record: len, "x", tag f64=1, rank 1, extent 2
        assert struct.unpack("<I", raw[48:52]) == (1,)
        assert raw[52:53] == b"x"
        assert raw[53:55] == bytes([1, 1])
        assert struct.unpack("<Q", raw[55:63]) == (2,)

    def test_payload_is_little_endian(self, tmp_path):
        path = tmp_path / "c.ckpt"
        save_checkpoint(path, {"v": np.array([1.0])}, HASH)
        assert path.read_bytes()[-8:] == struct.pack("<d", 1.0)


class TestErrors:
    def test_bad_magic(self, tmp_path):
        path = tmp_path / "c.ckpt"
        path.write_bytes(b"NOTAMAGC" + bytes(40))
        with pytest.raises(DataFormatError, match="not a checkpoint"):
            load_checkpoint(path)

    def test_wrong_version(self, tmp_path):
        path = tmp_path / "c.ckpt"
        path.write_bytes(MAGIC + struct.pack("<I", 99) + bytes(36))
        with pytest.raises(DataFormatError, match="version"):
            load_checkpoint(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "c.ckpt"
        save_checkpoint(path, {"v": np.zeros(100)}, HASH)
        raw = path.read_bytes()
        path.write_bytes(raw[:-10])
        with pytest.raises(DataFormatError, match="truncated"):
            load_checkpoint(path)

    def test_trailing_bytes(self, tmp_path):
        path = tmp_path / "c.ckpt"
        save_checkpoint(path, {"v": np.zeros(2)}, HASH)
        path.write_bytes(path.read_bytes() + b"x")
        with pytest.raises(DataFormatError, match="trailing"):
            load_checkpoint(path)

    def test_unknown_dtype_tag(self, tmp_path):
        path = tmp_path / "c.ckpt"
        save_checkpoint(path, {"v": np.zeros(2)}, HASH)
        raw = bytearray(path.read_bytes())
        raw[53] = 200  # dtype tag of the single tensor
        path.write_bytes(bytes(raw))
        with pytest.raises(DataFormatError, match="dtype tag"):
            load_checkpoint(path)

    def test_hash_must_be_32_bytes(self, tmp_path):
        with pytest.raises(ValueError, match="32 bytes"):
            save_checkpoint(tmp_path / "c.ckpt", {}, b"short")

    def test_unstorable_dtype(self, tmp_path):
        with pytest.raises(ValueError, match="dtype"):
            save_checkpoint(tmp_path / "c.ckpt", {"v": np.zeros(2, dtype=complex)}, HASH)


class TestText:
    def test_unicode_round_trip(self):
        s = "ranks: 16x32, α=4 ± ε"
        assert unpack_text(pack_text(s)) == s

    def test_wrong_dtype_rejected(self):
        with pytest.raises(DataFormatError, match="uint8"):
            unpack_text(np.zeros(3, dtype=np.int64))


class TestRngState:
    def test_restored_generator_continues_stream(self):
        rng = np.random.default_rng(12345)
        rng.normal(size=17)  # advance
        words = pack_rng_state(rng)
        expect = rng.normal(size=8)
        clone = restore_rng_state(words)
        np.testing.assert_array_equal(clone.normal(size=8), expect)

    def test_words_survive_checkpoint(self, tmp_path):
        rng = np.random.default_rng(99)
        rng.integers(0, 10, size=3)
        path = tmp_path / "c.ckpt"
        save_checkpoint(path, {"rng": pack_rng_state(rng)}, HASH)
        back, _ = load_checkpoint(path)
        clone = restore_rng_state(back["rng"])
        np.testing.assert_array_equal(clone.integers(0, 1000, size=5), rng.integers(0, 1000, size=5))

    def test_bad_shape_rejected(self):
        with pytest.raises(DataFormatError, match="six words"):
            restore_rng_state(np.zeros(5, dtype=np.uint64))
