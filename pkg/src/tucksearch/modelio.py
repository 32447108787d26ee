"""Whole-model persistence on top of the checkpoint container, plus the
ranks CSV format (`layer_id,r1,r2`, one line per factorized convolution)."""

from __future__ import annotations

import csv
import hashlib
import io

import numpy as np

from .checkpoint import load_checkpoint, pack_text, save_checkpoint, unpack_text
from .errors import DataFormatError
from .layers import Conv2d, Flatten, Linear, MaxPool2d, ReLU, TuckerConv2d
from .net import SequentialNet
from .netspec import LayerRecord, netspec_from_text, netspec_to_text
from .tucker import RankPair, TuckerFactors, decompose

__all__ = [
    "save_model",
    "load_model",
    "save_ranks_csv",
    "load_ranks_csv",
    "ranks_to_text",
    "ranks_from_text",
    "decompose_net",
]

_RANKS_HEADER = ["layer_id", "r1", "r2"]


def ranks_to_text(ranks: dict[str, RankPair]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_RANKS_HEADER)
    for layer_id in sorted(ranks):
        writer.writerow([layer_id, ranks[layer_id].r1, ranks[layer_id].r2])
    return buf.getvalue()


def ranks_from_text(text: str, source: str = "<text>") -> dict[str, RankPair]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataFormatError(f"{source}: empty ranks file") from None
    if [h.strip() for h in header] != _RANKS_HEADER:
        raise DataFormatError(f"{source}: bad header {header!r}")
    out: dict[str, RankPair] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 3:
            raise DataFormatError(f"{source}:{lineno}: expected 3 fields")
        layer_id = row[0].strip()
        if layer_id in out:
            raise DataFormatError(f"{source}:{lineno}: duplicate layer {layer_id!r}")
        try:
            out[layer_id] = RankPair(int(row[1]), int(row[2]))
        except ValueError as exc:
            raise DataFormatError(f"{source}:{lineno}: {exc}") from None
    if not out:
        raise DataFormatError(f"{source}: no rank rows")
    return out


def save_ranks_csv(ranks: dict[str, RankPair], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(ranks_to_text(ranks))


def load_ranks_csv(path) -> dict[str, RankPair]:
    with open(path, newline="") as fh:
        return ranks_from_text(fh.read(), source=str(path))


def decompose_net(
    net: SequentialNet, ranks: dict[str, RankPair], refine_iters: int = 3
) -> SequentialNet:
    """Copy of a network with the listed convolutions factorized at the given
    ranks. Layers not listed are copied as-is."""
    remaining = dict(ranks)
    layers = []
    for layer in net.layers:
        if isinstance(layer, Conv2d) and layer.layer_id in remaining:
            pair = remaining.pop(layer.layer_id)
            factors = decompose(layer.weight, layer.spec, pair, refine_iters=refine_iters)
            layers.append(TuckerConv2d(layer.layer_id, factors, layer.stride, layer.padding))
        elif isinstance(layer, Conv2d):
            layers.append(Conv2d(layer.layer_id, layer.weight.copy(), layer.stride, layer.padding))
        elif isinstance(layer, Linear):
            layers.append(Linear(layer.layer_id, layer.weight.copy(), layer.bias.copy()))
        elif isinstance(layer, ReLU):
            layers.append(ReLU())
        elif isinstance(layer, MaxPool2d):
            layers.append(MaxPool2d(layer.kernel, layer.stride))
        elif isinstance(layer, Flatten):
            layers.append(Flatten())
        else:
            raise TypeError(f"cannot copy layer of type {type(layer).__name__}")
    if remaining:
        raise ValueError(f"ranks given for layers not in the network: {sorted(remaining)}")
    return SequentialNet(layers)


def save_model(path, net: SequentialNet, records: list[LayerRecord]) -> None:
    """Store a network (dense or factorized) with its description embedded."""
    text = netspec_to_text(records)
    tensors: dict[str, np.ndarray] = {"meta/netspec": pack_text(text)}
    ranks: dict[str, RankPair] = {}
    for layer in net.layers:
        for pname, arr in layer.params().items():
            tensors[f"model/{layer.layer_id}.{pname}"] = arr
        if isinstance(layer, TuckerConv2d):
            ranks[layer.layer_id] = layer.ranks
    if ranks:
        tensors["meta/ranks"] = pack_text(ranks_to_text(ranks))
    save_checkpoint(path, tensors, hashlib.sha256(text.encode("utf-8")).digest())


def load_model(path) -> tuple[SequentialNet, list[LayerRecord]]:
    tensors, _ = load_checkpoint(path)
    if "meta/netspec" not in tensors:
        raise DataFormatError(f"{path}: model file lacks a network description")
    records = netspec_from_text(unpack_text(tensors["meta/netspec"]), source=str(path))

    def take(name: str) -> np.ndarray:
        key = f"model/{name}"
        if key not in tensors:
            raise DataFormatError(f"{path}: missing tensor {key!r}")
        return tensors[key]

    layers = []
    for r in records:
        if r.kind == "conv":
            if f"model/{r.layer_id}.core" in tensors:
                core = take(f"{r.layer_id}.core")
                m1 = take(f"{r.layer_id}.m1")
                m2 = take(f"{r.layer_id}.m2")
                factors = TuckerFactors(
                    core, m1, m2, RankPair(core.shape[0], core.shape[1])
                )
                layers.append(TuckerConv2d(r.layer_id, factors, r.stride, r.padding))
            else:
                layers.append(Conv2d(r.layer_id, take(f"{r.layer_id}.weight"), r.stride, r.padding))
        elif r.kind == "relu":
            layers.append(ReLU())
        elif r.kind == "maxpool":
            layers.append(MaxPool2d(r.kernel_h, r.stride))
        elif r.kind == "flatten":
            layers.append(Flatten())
        elif r.kind == "fc":
            layers.append(
                Linear(r.layer_id, take(f"{r.layer_id}.weight"), take(f"{r.layer_id}.bias"))
            )
    return SequentialNet(layers), records
