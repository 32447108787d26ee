"""Dataset IO round-trips with golden bytes, hash-split invariants,
batching behaviour."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tucksearch.data import (
    hash_split,
    iter_batches,
    load_csv_dataset,
    load_idx_dataset,
    read_idx,
    save_csv_dataset,
    splitmix64,
    synthetic_dataset,
    write_idx,
)
from tucksearch.errors import DataFormatError


class TestIdx:
    def test_golden_bytes_for_tiny_tensor(self, tmp_path):
        path = tmp_path / "t.idx"
        arr = np.array([[1, 2, 3], [4, 250, 0]], dtype=np.uint8)
        write_idx(arr, path)
        expect = bytes([0, 0, 0x08, 2]) + struct.pack(">2I", 2, 3) + bytes(
            [1, 2, 3, 4, 250, 0]
        )
        assert path.read_bytes() == expect
        np.testing.assert_array_equal(read_idx(path), arr)

    @pytest.mark.parametrize("dtype", [np.uint8, np.int8, np.int16, np.int32, np.float32, np.float64])
    def test_round_trip_all_dtypes(self, tmp_path, dtype):
        rng = np.random.default_rng(71)
        if np.issubdtype(dtype, np.integer):
            info = np.iinfo(dtype)
            arr = rng.integers(info.min, info.max, size=(3, 4, 2)).astype(dtype)
        else:
            arr = rng.normal(size=(3, 4, 2)).astype(dtype)
        path = tmp_path / "t.idx"
        write_idx(arr, path)
        back = read_idx(path)
        assert back.dtype == dtype
        np.testing.assert_array_equal(back, arr)

    def test_big_endian_extents(self, tmp_path):
        path = tmp_path / "t.idx"
        write_idx(np.zeros(300, dtype=np.uint8), path)
        raw = path.read_bytes()
        assert raw[4:8] == struct.pack(">I", 300)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "t.idx"
        path.write_bytes(b"\x01\x00\x08\x01\x00\x00\x00\x01x")
        with pytest.raises(DataFormatError, match="not an IDX"):
            read_idx(path)

    def test_unknown_dtype_code(self, tmp_path):
        path = tmp_path / "t.idx"
        path.write_bytes(b"\x00\x00\x05\x01\x00\x00\x00\x01x")
        with pytest.raises(DataFormatError, match="dtype code"):
            read_idx(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "t.idx"
        path.write_bytes(bytes([0, 0, 0x08, 1]) + struct.pack(">I", 10) + b"abc")
        with pytest.raises(DataFormatError, match="truncated"):
            read_idx(path)

    def test_dataset_pair_scaling_and_channel_axis(self, tmp_path):
        images = np.arange(2 * 4 * 4, dtype=np.uint8).reshape(2, 4, 4) * 10
        labels = np.array([3, 7], dtype=np.uint8)
        write_idx(images, tmp_path / "x.idx")
        write_idx(labels, tmp_path / "y.idx")
        x, y = load_idx_dataset(tmp_path / "x.idx", tmp_path / "y.idx")
        assert x.shape == (2, 1, 4, 4) and x.dtype == np.float64
        np.testing.assert_allclose(x[1, 0, 0, 0], 160 / 255)
        np.testing.assert_array_equal(y, [3, 7])
        assert y.dtype == np.int64

    def test_float_images_not_rescaled(self, tmp_path):
        images = np.full((2, 1, 3, 3), 0.5, dtype=np.float32)
        labels = np.array([0, 1], dtype=np.uint8)
        write_idx(images, tmp_path / "x.idx")
        write_idx(labels, tmp_path / "y.idx")
        x, _ = load_idx_dataset(tmp_path / "x.idx", tmp_path / "y.idx")
        np.testing.assert_allclose(x, 0.5)

    def test_count_mismatch(self, tmp_path):
        write_idx(np.zeros((3, 2, 2), dtype=np.uint8), tmp_path / "x.idx")
        write_idx(np.zeros(2, dtype=np.uint8), tmp_path / "y.idx")
        with pytest.raises(DataFormatError, match="does not match"):
            load_idx_dataset(tmp_path / "x.idx", tmp_path / "y.idx")


class TestCsv:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(72)
        x = rng.uniform(0, 1, size=(5, 2, 3, 3))
        y = rng.integers(0, 4, size=5)
        path = tmp_path / "d.csv"
        save_csv_dataset(x, y, path)
        xb, yb = load_csv_dataset(path, channels=2)
        np.testing.assert_allclose(xb, x, rtol=0, atol=1e-15)
        np.testing.assert_array_equal(yb, y)

    def test_byte_values_rescaled(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("label,pixel0,pixel1,pixel2,pixel3\n1,0,51,102,255\n")
        x, y = load_csv_dataset(path)
        np.testing.assert_allclose(x.reshape(-1), [0, 0.2, 0.4, 1.0])
        assert x.shape == (1, 1, 2, 2)

    def test_unit_values_kept(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("label,pixel0,pixel1,pixel2,pixel3\n0,0.0,0.25,0.5,1.0\n")
        x, _ = load_csv_dataset(path)
        np.testing.assert_allclose(x.reshape(-1), [0, 0.25, 0.5, 1.0])

    def test_header_must_start_with_label(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("id,pixel0\n0,1\n")
        with pytest.raises(DataFormatError, match="label"):
            load_csv_dataset(path)

    def test_non_square_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("label,pixel0,pixel1\n0,1,2\n")
        with pytest.raises(DataFormatError, match="square"):
            load_csv_dataset(path)

    def test_field_count_error_has_line_number(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("label,pixel0,pixel1,pixel2,pixel3\n0,1,2,3,4\n1,2,3\n")
        with pytest.raises(DataFormatError, match=":3:"):
            load_csv_dataset(path)

    def test_empty_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("label,pixel0,pixel1,pixel2,pixel3\n")
        with pytest.raises(DataFormatError, match="no samples"):
            load_csv_dataset(path)


class TestSynthetic:
    def test_deterministic(self):
        a = synthetic_dataset(50, seed=5)
        b = synthetic_dataset(50, seed=5)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_seed_changes_data(self):
        a = synthetic_dataset(50, seed=5)
        b = synthetic_dataset(50, seed=6)
        assert np.abs(a[0] - b[0]).max() > 0

    def test_shapes_and_range(self):
        x, y = synthetic_dataset(30, num_classes=4, channels=2, hw=(9, 11), seed=1)
        assert x.shape == (30, 2, 9, 11)
        assert y.shape == (30,) and y.min() >= 0 and y.max() < 4
        assert x.min() >= 0.0 and x.max() <= 1.0

    def test_classes_are_separable_by_nearest_template(self):
        x, y = synthetic_dataset(400, num_classes=10, seed=3)
        # estimate per-class centroids from the data itself and classify
        centroids = np.stack([x[y == k].mean(axis=0) for k in range(10)])
        d = ((x[:, None] - centroids[None]) ** 2).sum(axis=(2, 3, 4))
        assert (d.argmin(axis=1) == y).mean() > 0.9


class TestHashSplit:
    def test_splitmix_known_vector(self):
        # first output of the splitmix64 stream seeded with 0
        assert splitmix64(0) == 0xE220A8397B1DCDAF

    def test_partition(self):
        train, val = hash_split(1000, 0.2, seed=9)
        both = np.sort(np.concatenate([train, val]))
        np.testing.assert_array_equal(both, np.arange(1000))

    def test_fraction_approximate(self):
        _, val = hash_split(20000, 0.25, seed=1)
        assert abs(len(val) / 20000 - 0.25) < 0.02

    def test_membership_independent_of_n(self):
        _, val_small = hash_split(100, 0.3, seed=4)
        _, val_big = hash_split(1000, 0.3, seed=4)
        np.testing.assert_array_equal(val_small, val_big[val_big < 100])

    def test_seed_changes_split(self):
        _, v1 = hash_split(500, 0.3, seed=1)
        _, v2 = hash_split(500, 0.3, seed=2)
        assert not np.array_equal(v1, v2)

    def test_zero_fraction(self):
        train, val = hash_split(10, 0.0, seed=0)
        assert len(train) == 10 and len(val) == 0

    @given(st.integers(1, 300), st.floats(0.0, 0.9), st.integers(0, 2**31))
    @settings(max_examples=40, deadline=None)
    def test_always_partitions(self, n, frac, seed):
        train, val = hash_split(n, frac, seed)
        assert len(train) + len(val) == n
        assert len(np.intersect1d(train, val)) == 0

    def test_empty_rejected(self):
        with pytest.raises(DataFormatError):
            hash_split(0, 0.2, seed=0)


class TestIterBatches:
    def test_in_order_without_rng(self):
        x = np.arange(10).reshape(10, 1).astype(float)
        y = np.arange(10)
        batches = list(iter_batches(x, y, 4))
        assert [b.inputs.shape[0] for b in batches] == [4, 4, 2]
        np.testing.assert_array_equal(batches[2].labels, [8, 9])

    def test_shuffled_covers_everything_once(self):
        x = np.arange(17).reshape(17, 1).astype(float)
        y = np.arange(17)
        seen = np.concatenate(
            [b.labels for b in iter_batches(x, y, 5, np.random.default_rng(3))]
        )
        np.testing.assert_array_equal(np.sort(seen), np.arange(17))
        assert not np.array_equal(seen, np.arange(17))

    def test_same_rng_state_same_order(self):
        x = np.arange(12).reshape(12, 1).astype(float)
        y = np.arange(12)
        a = [b.labels for b in iter_batches(x, y, 5, np.random.default_rng(8))]
        b = [b.labels for b in iter_batches(x, y, 5, np.random.default_rng(8))]
        for la, lb in zip(a, b):
            np.testing.assert_array_equal(la, lb)

    def test_inputs_match_labels(self):
        x = np.arange(8).reshape(8, 1).astype(float)
        y = np.arange(8)
        for batch in iter_batches(x, y, 3, np.random.default_rng(5)):
            np.testing.assert_array_equal(batch.inputs[:, 0].astype(int), batch.labels)

    def test_empty_rejected(self):
        with pytest.raises(DataFormatError):
            next(iter_batches(np.zeros((0, 1)), np.zeros(0, dtype=int), 2))
