"""Plain-text network descriptions.

A network is a CSV of layer records, one per line, in execution order:

    layer_id,kind,out_channels,in_channels,kernel_h,kernel_w,stride,padding,searched

Kinds are conv, relu, maxpool, flatten, fc. Fields that do not apply to a
kind are written as 0 (for maxpool the kernel fields hold the window size).
`searched` is 0 or 1 and marks convolutions whose rank will be selected.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

from .errors import DataFormatError
from .tucker import ConvLayerSpec

__all__ = [
    "LayerRecord",
    "KINDS",
    "load_netspec",
    "save_netspec",
    "netspec_to_text",
    "netspec_from_text",
    "conv_specs",
    "trace_shapes",
    "simple_cnn",
]

KINDS = ("conv", "relu", "maxpool", "flatten", "fc")

_HEADER = [
    "layer_id",
    "kind",
    "out_channels",
    "in_channels",
    "kernel_h",
    "kernel_w",
    "stride",
    "padding",
    "searched",
]


@dataclass(frozen=True)
class LayerRecord:
    layer_id: str
    kind: str
    out_channels: int = 0
    in_channels: int = 0
    kernel_h: int = 0
    kernel_w: int = 0
    stride: int = 1
    padding: int = 0
    searched: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataFormatError(f"{self.layer_id}: unknown layer kind {self.kind!r}")
        if self.searched and self.kind != "conv":
            raise DataFormatError(f"{self.layer_id}: only conv layers can be searched")
        if self.kind in ("conv", "fc") and (self.out_channels < 1 or self.in_channels < 1):
            raise DataFormatError(f"{self.layer_id}: {self.kind} needs positive channel counts")
        if self.kind == "conv" and (self.kernel_h < 1 or self.kernel_w < 1):
            raise DataFormatError(f"{self.layer_id}: conv needs a positive kernel")
        if self.kind == "maxpool" and self.kernel_h < 1:
            raise DataFormatError(f"{self.layer_id}: maxpool needs a positive window")
        if self.stride < 1 or self.padding < 0:
            raise DataFormatError(f"{self.layer_id}: bad stride/padding")

    def conv_spec(self) -> ConvLayerSpec:
        if self.kind != "conv":
            raise ValueError(f"{self.layer_id} is not a conv layer")
        return ConvLayerSpec(
            self.layer_id,
            self.out_channels,
            self.in_channels,
            self.kernel_h,
            self.kernel_w,
            self.stride,
            self.padding,
        )


def netspec_to_text(records: list[LayerRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_HEADER)
    for r in records:
        writer.writerow(
            [
                r.layer_id,
                r.kind,
                r.out_channels,
                r.in_channels,
                r.kernel_h,
                r.kernel_w,
                r.stride,
                r.padding,
                int(r.searched),
            ]
        )
    return buf.getvalue()


def netspec_from_text(text: str, source: str = "<text>") -> list[LayerRecord]:
    records: list[LayerRecord] = []
    seen: set[str] = set()
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataFormatError(f"{source}: empty network file") from None
    if [h.strip() for h in header] != _HEADER:
        raise DataFormatError(f"{source}: bad header {header!r}")
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(_HEADER):
            raise DataFormatError(f"{source}:{lineno}: expected {len(_HEADER)} fields")
        try:
            rec = LayerRecord(
                layer_id=row[0].strip(),
                kind=row[1].strip(),
                out_channels=int(row[2]),
                in_channels=int(row[3]),
                kernel_h=int(row[4]),
                kernel_w=int(row[5]),
                stride=int(row[6]),
                padding=int(row[7]),
                searched=bool(int(row[8])),
            )
        except (ValueError, DataFormatError) as exc:
            raise DataFormatError(f"{source}:{lineno}: {exc}") from None
        if rec.layer_id in seen:
            raise DataFormatError(f"{source}:{lineno}: duplicate layer id {rec.layer_id!r}")
        seen.add(rec.layer_id)
        records.append(rec)
    if not records:
        raise DataFormatError(f"{source}: no layer records")
    return records


def save_netspec(records: list[LayerRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(netspec_to_text(records))


def load_netspec(path) -> list[LayerRecord]:
    with open(path, newline="") as fh:
        return netspec_from_text(fh.read(), source=str(path))


def conv_specs(records: list[LayerRecord], searched_only: bool = True) -> list[ConvLayerSpec]:
    """Convolution specs in network order, optionally only the searched ones."""
    out = []
    for r in records:
        if r.kind == "conv" and (r.searched or not searched_only):
            out.append(r.conv_spec())
    return out


def trace_shapes(records: list[LayerRecord], input_shape) -> list[tuple[str, tuple]]:
    """Walk the records over an input of shape (C, H, W), checking that each
    layer accepts what the previous one produces. Returns per-layer output
    shapes; raises DataFormatError where the chain breaks."""
    if len(input_shape) != 3:
        raise DataFormatError(f"input shape must be (C, H, W), got {input_shape}")
    shape: tuple = tuple(int(v) for v in input_shape)
    out: list[tuple[str, tuple]] = []
    for r in records:
        if r.kind == "conv":
            if len(shape) != 3:
                raise DataFormatError(f"{r.layer_id}: conv after flatten")
            c, h, w = shape
            if c != r.in_channels:
                raise DataFormatError(
                    f"{r.layer_id}: expects {r.in_channels} channels, gets {c}"
                )
            oh = (h + 2 * r.padding - r.kernel_h) // r.stride + 1
            ow = (w + 2 * r.padding - r.kernel_w) // r.stride + 1
            if oh < 1 or ow < 1:
                raise DataFormatError(f"{r.layer_id}: kernel does not fit {h}x{w}")
            shape = (r.out_channels, oh, ow)
        elif r.kind == "relu":
            pass
        elif r.kind == "maxpool":
            if len(shape) != 3:
                raise DataFormatError(f"{r.layer_id}: maxpool after flatten")
            c, h, w = shape
            k = r.kernel_h
            s = r.stride
            oh = (h - k) // s + 1
            ow = (w - k) // s + 1
            if oh < 1 or ow < 1:
                raise DataFormatError(f"{r.layer_id}: window does not fit {h}x{w}")
            shape = (c, oh, ow)
        elif r.kind == "flatten":
            if len(shape) != 3:
                raise DataFormatError(f"{r.layer_id}: flatten applied twice")
            shape = (shape[0] * shape[1] * shape[2],)
        elif r.kind == "fc":
            if len(shape) != 1:
                raise DataFormatError(f"{r.layer_id}: fc needs flattened input")
            if shape[0] != r.in_channels:
                raise DataFormatError(
                    f"{r.layer_id}: expects {r.in_channels} features, gets {shape[0]}"
                )
            shape = (r.out_channels,)
        out.append((r.layer_id, shape))
    return out


def simple_cnn(
    in_channels: int,
    input_hw: tuple[int, int],
    conv_channels: list[int],
    num_classes: int,
    pool_every: int = 2,
    kernel: int = 3,
    padding: int = 1,
) -> list[LayerRecord]:
    """Small conv / relu / maxpool stack ending in flatten + one fc head.

    Pools a 2x2 window after every `pool_every` convolutions. All convs are
    marked searched.
    """
    records: list[LayerRecord] = []
    c, (h, w) = in_channels, input_hw
    for i, f in enumerate(conv_channels):
        records.append(
            LayerRecord(
                f"conv{i + 1}", "conv", f, c, kernel, kernel, 1, padding, searched=True
            )
        )
        records.append(LayerRecord(f"relu{i + 1}", "relu"))
        h = h + 2 * padding - kernel + 1
        w = w + 2 * padding - kernel + 1
        c = f
        if pool_every and (i + 1) % pool_every == 0 and min(h, w) >= 2:
            records.append(LayerRecord(f"pool{i + 1}", "maxpool", kernel_h=2, kernel_w=2, stride=2))
            h, w = (h - 2) // 2 + 1, (w - 2) // 2 + 1
    records.append(LayerRecord("flat", "flatten"))
    records.append(LayerRecord("fc", "fc", num_classes, c * h * w))
    return records
