"""Model persistence and ranks CSV round-trips."""

import numpy as np
import pytest

from tucksearch.errors import DataFormatError
from tucksearch.layers import Conv2d, TuckerConv2d
from tucksearch.modelio import (
    decompose_net,
    load_model,
    load_ranks_csv,
    ranks_from_text,
    ranks_to_text,
    save_model,
    save_ranks_csv,
)
from tucksearch.net import build_dense_net
from tucksearch.netspec import simple_cnn
from tucksearch.tucker import RankPair


@pytest.fixture
def dense_setup():
    records = simple_cnn(2, (8, 8), [4, 6], 5)
    net = build_dense_net(records, np.random.default_rng(3))
    return records, net


class TestRanksCsv:
    def test_text_round_trip(self):
        ranks = {"conv2": RankPair(8, 4), "conv1": RankPair(3, 3)}
        text = ranks_to_text(ranks)
        assert text == "layer_id,r1,r2\nconv1,3,3\nconv2,8,4\n"
        assert ranks_from_text(text) == ranks

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "ranks.csv"
        ranks = {"a": RankPair(2, 3)}
        save_ranks_csv(ranks, path)
        assert load_ranks_csv(path) == ranks

    def test_bad_header(self):
        with pytest.raises(DataFormatError, match="bad header"):
            ranks_from_text("layer,rank1,rank2\na,1,2\n")

    def test_duplicate_layer(self):
        with pytest.raises(DataFormatError, match="duplicate"):
            ranks_from_text("layer_id,r1,r2\na,1,2\na,3,4\n")

    def test_bad_rank_value_has_line(self):
        with pytest.raises(DataFormatError, match=":2:"):
            ranks_from_text("layer_id,r1,r2\na,one,2\n")

    def test_empty(self):
        with pytest.raises(DataFormatError, match="no rank rows"):
            ranks_from_text("layer_id,r1,r2\n")


class TestDecomposeNet:
    def test_full_rank_copy_matches_original(self, dense_setup):
        records, net = dense_setup
        ranks = {"conv1": RankPair(4, 2), "conv2": RankPair(6, 4)}
        fac = decompose_net(net, ranks)
        x = np.random.default_rng(4).normal(size=(3, 2, 8, 8))
        np.testing.assert_allclose(fac.forward(x), net.forward(x), rtol=0, atol=1e-8)

    def test_layer_types_and_param_savings(self, dense_setup):
        records, net = dense_setup
        fac = decompose_net(net, {"conv2": RankPair(2, 2)})
        kinds = [type(l).__name__ for l in fac.layers]
        assert "TuckerConv2d" in kinds and "Conv2d" in kinds
        assert fac.param_count() < net.param_count()

    def test_original_untouched(self, dense_setup):
        records, net = dense_setup
        before = {k: v.copy() for k, v in net.named_params().items()}
        fac = decompose_net(net, {"conv1": RankPair(2, 2)})
        for layer in fac.layers:
            for arr in layer.params().values():
                arr += 1.0
        for k, v in net.named_params().items():
            np.testing.assert_array_equal(v, before[k])

    def test_unknown_layer_rejected(self, dense_setup):
        _, net = dense_setup
        with pytest.raises(ValueError, match="not in the network"):
            decompose_net(net, {"ghost": RankPair(2, 2)})


class TestModelFiles:
    def test_dense_round_trip(self, dense_setup, tmp_path):
        records, net = dense_setup
        path = tmp_path / "m.ckpt"
        save_model(path, net, records)
        back, back_records = load_model(path)
        assert back_records == records
        x = np.random.default_rng(5).normal(size=(2, 2, 8, 8))
        np.testing.assert_array_equal(back.forward(x), net.forward(x))

    def test_factorized_round_trip(self, dense_setup, tmp_path):
        records, net = dense_setup
        fac = decompose_net(net, {"conv1": RankPair(2, 2), "conv2": RankPair(4, 4)})
        path = tmp_path / "m.ckpt"
        save_model(path, fac, records)
        back, _ = load_model(path)
        tucker = [l for l in back.layers if isinstance(l, TuckerConv2d)]
        assert {l.layer_id: (l.ranks.r1, l.ranks.r2) for l in tucker} == {
            "conv1": (2, 2),
            "conv2": (4, 4),
        }
        x = np.random.default_rng(6).normal(size=(2, 2, 8, 8))
        np.testing.assert_array_equal(back.forward(x), fac.forward(x))

    def test_mixed_dense_and_factorized(self, dense_setup, tmp_path):
        records, net = dense_setup
        fac = decompose_net(net, {"conv2": RankPair(3, 3)})
        path = tmp_path / "m.ckpt"
        save_model(path, fac, records)
        back, _ = load_model(path)
        by_id = {l.layer_id: l for l in back.layers if l.layer_id}
        assert isinstance(by_id["conv1"], Conv2d)
        assert isinstance(by_id["conv2"], TuckerConv2d)

    def test_rewrite_is_byte_identical(self, dense_setup, tmp_path):
        records, net = dense_setup
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_model(p1, net, records)
        save_model(p2, net, records)
        assert p1.read_bytes() == p2.read_bytes()

    def test_missing_tensor_reported(self, dense_setup, tmp_path):
        from tucksearch.checkpoint import load_checkpoint, save_checkpoint

        records, net = dense_setup
        path = tmp_path / "m.ckpt"
        save_model(path, net, records)
        tensors, h = load_checkpoint(path)
        del tensors["model/conv1.weight"]
        save_checkpoint(path, tensors, h)
        with pytest.raises(DataFormatError, match="missing tensor"):
            load_model(path)

    def test_model_without_description_rejected(self, tmp_path):
        from tucksearch.checkpoint import save_checkpoint

        path = tmp_path / "m.ckpt"
        save_checkpoint(path, {"model/x.weight": np.zeros((1, 1))}, bytes(32))
        with pytest.raises(DataFormatError, match="description"):
            load_model(path)
