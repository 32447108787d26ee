"""Hardware cost model: measured latency tables and analytic FLOPs proxies.

Tables map (layer_id, r1, r2) to a positive cost. Lookup is ceiling-based:
the request resolves to the nearest tabulated entry that is no smaller in
both rank coordinates; costs are never interpolated. A FLOPs proxy table can
stand in when no measurements exist.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, field

import numpy as np

from .errors import CostResolutionError, DataFormatError
from .tucker import ConvLayerSpec, RankPair

__all__ = [
    "LatencyTable",
    "CostReport",
    "load_latency_table",
    "save_latency_table",
    "lookup",
    "expected_layer_cost",
    "penalty_factor",
    "count_flops",
    "conv_output_hw",
    "flops_proxy_table",
    "synthetic_plateau_table",
]

_HEADER = "layer_id,r1,r2,cost"


@dataclass
class LatencyTable:
    """Rank-indexed cost entries plus provenance metadata."""

    device: str = "unknown"
    batch: int = 1
    unit: str = "ms"
    entries: dict[tuple[str, int, int], float] = field(default_factory=dict)
    _axes: dict[str, tuple[list[int], list[int]]] = field(
        default_factory=dict, repr=False, compare=False
    )

    def add(self, layer_id: str, r1: int, r2: int, cost: float) -> None:
        key = (layer_id, int(r1), int(r2))
        if key in self.entries:
            raise DataFormatError(f"duplicate cost entry for {key}")
        if not (math.isfinite(cost) and cost > 0.0):
            raise DataFormatError(f"cost for {key} must be positive and finite, got {cost}")
        if key[1] < 1 or key[2] < 1:
            raise DataFormatError(f"ranks in {key} must be >= 1")
        self.entries[key] = float(cost)
        self._axes.clear()

    def layers(self) -> list[str]:
        return sorted({layer_id for layer_id, _, _ in self.entries})

    def axes(self, layer_id: str) -> tuple[list[int], list[int]]:
        """Sorted distinct r1 and r2 values tabulated for one layer."""
        if layer_id not in self._axes:
            r1s = sorted({r1 for lid, r1, _ in self.entries if lid == layer_id})
            r2s = sorted({r2 for lid, _, r2 in self.entries if lid == layer_id})
            self._axes[layer_id] = (r1s, r2s)
        return self._axes[layer_id]


def load_latency_table(path) -> LatencyTable:
    """Parse the CSV table format: `# key=value` metadata comments, then a
    `layer_id,r1,r2,cost` header and one entry per line."""
    table = LatencyTable()
    meta = {}
    header_seen = False
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    meta[key.strip()] = value.strip()
                continue
            if not header_seen:
                if line != _HEADER:
                    raise DataFormatError(f"{path}:{lineno}: expected header {_HEADER!r}")
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise DataFormatError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
            try:
                layer_id = parts[0].strip()
                r1, r2 = int(parts[1]), int(parts[2])
                cost = float(parts[3])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
            try:
                table.add(layer_id, r1, r2, cost)
            except DataFormatError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
    if not header_seen:
        raise DataFormatError(f"{path}: missing header line {_HEADER!r}")
    if not table.entries:
        raise DataFormatError(f"{path}: table has no entries")
    table.device = meta.get("device", table.device)
    table.unit = meta.get("unit", table.unit)
    try:
        table.batch = int(meta.get("batch", table.batch))
    except ValueError as exc:
        raise DataFormatError(f"{path}: bad batch metadata: {exc}") from exc
    return table


def save_latency_table(table: LatencyTable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# device={table.device}\n")
        fh.write(f"# batch={table.batch}\n")
        fh.write(f"# unit={table.unit}\n")
        fh.write(_HEADER + "\n")
        for (layer_id, r1, r2), cost in sorted(table.entries.items()):
            fh.write(f"{layer_id},{r1},{r2},{cost!r}\n")


def lookup(table: LatencyTable, layer_id: str, ranks: RankPair) -> float:
    """Cost of the nearest tabulated entry dominating `ranks` in both
    coordinates (exact hit preferred, then axis-wise ceilings, then the
    lexicographically smallest dominating entry)."""
    key = (layer_id, ranks.r1, ranks.r2)
    hit = table.entries.get(key)
    if hit is not None:
        return hit
    r1s, r2s = table.axes(layer_id)
    if not r1s:
        raise CostResolutionError(f"no cost entries for layer {layer_id!r}")
    i1 = bisect_left(r1s, ranks.r1)
    i2 = bisect_left(r2s, ranks.r2)
    if i1 < len(r1s) and i2 < len(r2s):
        ceil_hit = table.entries.get((layer_id, r1s[i1], r2s[i2]))
        if ceil_hit is not None:
            return ceil_hit
    dominating = sorted(
        (r1, r2)
        for lid, r1, r2 in table.entries
        if lid == layer_id and r1 >= ranks.r1 and r2 >= ranks.r2
    )
    if not dominating:
        raise CostResolutionError(
            f"no cost entry dominates ranks ({ranks.r1}, {ranks.r2}) for layer {layer_id!r}"
        )
    r1, r2 = dominating[0]
    return table.entries[(layer_id, r1, r2)]


def expected_layer_cost(probs, costs) -> float:
    """Probability-weighted cost of one layer's candidate set."""
    p = np.asarray(probs, dtype=np.float64)
    m = np.asarray(costs, dtype=np.float64)
    if p.ndim != 1 or m.ndim != 1 or p.shape != m.shape or p.size == 0:
        raise ValueError(f"probs and costs must be equal-length vectors, got {p.shape}, {m.shape}")
    if np.any(p < -1e-12) or abs(float(p.sum()) - 1.0) > 1e-9:
        raise ValueError("probs must be a probability vector")
    if np.any(m <= 0.0) or not np.all(np.isfinite(m)):
        raise ValueError("costs must be positive and finite")
    return float(p @ m)


def penalty_factor(total: float, budget: float, eta: float, theta: float) -> float:
    """Multiplicative budget pressure eta * (total / budget) ** theta."""
    if not total > 0.0:
        raise ValueError(f"total cost must be > 0, got {total}")
    if not budget > 0.0:
        raise ValueError(f"budget must be > 0, got {budget}")
    if not eta > 0.0:
        raise ValueError(f"eta must be > 0, got {eta}")
    if theta < 0.0:
        raise ValueError(f"theta must be >= 0, got {theta}")
    return eta * (total / budget) ** theta


@dataclass(frozen=True)
class CostReport:
    per_layer: dict[str, float]
    total: float
    budget: float
    penalty: float


def make_cost_report(per_layer: dict[str, float], budget: float, eta: float, theta: float) -> CostReport:
    total = float(sum(per_layer.values()))
    return CostReport(
        per_layer=dict(per_layer),
        total=total,
        budget=float(budget),
        penalty=penalty_factor(total, budget, eta, theta),
    )


def conv_output_hw(spec: ConvLayerSpec, input_hw: tuple[int, int]) -> tuple[int, int]:
    h, w = (int(x) for x in input_hw)
    out_h = (h + 2 * spec.padding - spec.kernel_h) // spec.stride + 1
    out_w = (w + 2 * spec.padding - spec.kernel_w) // spec.stride + 1
    if out_h < 1 or out_w < 1:
        raise ValueError(f"{spec.layer_id}: kernel does not fit input {h}x{w}")
    return out_h, out_w


def count_flops(spec: ConvLayerSpec, input_hw: tuple[int, int], ranks: RankPair | None = None) -> int:
    """Multiply-add FLOPs (2 per MAC) for one dense or factorized conv layer
    on a single image of the given spatial size.

    The factorized form runs three stages: a 1x1 input projection at full
    input resolution, the spatial core convolution, and a 1x1 output
    expansion at output resolution.
    """
    h, w = (int(x) for x in input_hw)
    out_h, out_w = conv_output_hw(spec, input_hw)
    f, c = spec.out_channels, spec.in_channels
    k = spec.kernel_h * spec.kernel_w
    if ranks is None:
        return 2 * f * c * k * out_h * out_w
    if ranks.r1 > f or ranks.r2 > c:
        raise ValueError(f"{spec.layer_id}: ranks exceed channel bounds")
    stage1 = 2 * ranks.r2 * c * h * w
    stage2 = 2 * ranks.r1 * ranks.r2 * k * out_h * out_w
    stage3 = 2 * f * ranks.r1 * out_h * out_w
    return stage1 + stage2 + stage3


def flops_proxy_table(
    specs: list[ConvLayerSpec],
    input_hw: dict[str, tuple[int, int]],
    candidates: dict[str, list[RankPair]],
    device_constant: float = 1e-9,
) -> LatencyTable:
    """Analytic stand-in for a measured table: cost = FLOPs * device constant
    for every candidate plus the full-rank point of each layer."""
    if not device_constant > 0.0:
        raise ValueError("device_constant must be > 0")
    table = LatencyTable(device=f"flops-proxy:{device_constant:g}", batch=1, unit="proxy")
    for spec in specs:
        pairs = list(candidates.get(spec.layer_id, []))
        pairs.append(RankPair(spec.out_channels, spec.in_channels))
        for ranks in sorted(set(pairs)):
            key = (spec.layer_id, ranks.r1, ranks.r2)
            if key in table.entries:
                continue
            flops = count_flops(spec, input_hw[spec.layer_id], ranks)
            table.add(spec.layer_id, ranks.r1, ranks.r2, flops * device_constant)
    return table


def synthetic_plateau_table(
    specs: list[ConvLayerSpec],
    input_hw: dict[str, tuple[int, int]],
    step: int = 4,
    plateau: int = 8,
    scale: float = 1e-9,
) -> LatencyTable:
    """Plateau-structured synthetic measurements: the analytic cost is
    evaluated with both ranks rounded up to the plateau quantum, so costs sit
    on flat patches the way batched hardware kernels do. Entries cover the
    full step grid of every layer, full rank included."""
    if step < 1 or plateau < 1:
        raise ValueError("step and plateau must be >= 1")
    if not scale > 0.0:
        raise ValueError("scale must be > 0")
    table = LatencyTable(device=f"synthetic-plateau:{plateau}", batch=1, unit="ms")
    for spec in specs:
        f, c = spec.out_channels, spec.in_channels
        r1_grid = sorted(set(list(range(step, f + 1, step)) + [f]))
        r2_grid = sorted(set(list(range(step, c + 1, step)) + [c]))
        for r1 in r1_grid:
            for r2 in r2_grid:
                bumped = RankPair(
                    min(-(-r1 // plateau) * plateau, f),
                    min(-(-r2 // plateau) * plateau, c),
                )
                flops = count_flops(spec, input_hw[spec.layer_id], bumped)
                table.add(spec.layer_id, r1, r2, flops * scale)
    return table
