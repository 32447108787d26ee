"""Per-layer rank candidate enumeration for a global compression target.

Given a target ratio alpha = dense params / factorized params, each layer
gets a continuous rank scale `alpha_rank` (the divisor a such that ranks
(F/a, C/a) hit the target exactly), then a small candidate grid around that
scale: multiples of a channel-bucketed step size, paired either equal
(r, r) or stretched by the layer's channel ratio.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import DataFormatError
from .tucker import ConvLayerSpec, RankPair

__all__ = [
    "CompressionTarget",
    "LayerRankPlan",
    "RankSpacePlan",
    "alpha_rank",
    "step_size_for",
    "build_rank_space",
]

# Step sizes for channel buckets 16, 32, 64, 128, 256, 512. Networks whose
# largest channel count is under 128 use step 4 everywhere instead.
_STEP_TABLE = (4, 8, 16, 16, 32, 32)
_SMALL_NETWORK_LIMIT = 128


@dataclass(frozen=True)
class CompressionTarget:
    """Global parameter-compression goal: dense count / factorized count."""

    alpha: float

    def __post_init__(self):
        if not self.alpha > 1.0:
            raise ValueError(f"alpha must be > 1, got {self.alpha}")


@dataclass(frozen=True)
class LayerRankPlan:
    layer_id: str
    candidates: tuple[RankPair, ...]
    alpha_rank: float
    step_size: int


@dataclass(frozen=True)
class RankSpacePlan:
    alpha: float
    layers: tuple[LayerRankPlan, ...]
    diagnostics: tuple[str, ...] = field(default=(), compare=False)

    def layer(self, layer_id: str) -> LayerRankPlan:
        for lp in self.layers:
            if lp.layer_id == layer_id:
                return lp
        raise KeyError(f"no rank plan for layer {layer_id!r}")

    def search_space_size(self) -> int:
        size = 1
        for lp in self.layers:
            size *= len(lp.candidates)
        return size

    def to_json(self) -> str:
        doc = {
            "alpha": self.alpha,
            "layers": [
                {
                    "layer_id": lp.layer_id,
                    "alpha_rank": lp.alpha_rank,
                    "step_size": lp.step_size,
                    "candidates": [[p.r1, p.r2] for p in lp.candidates],
                }
                for lp in self.layers
            ],
            "diagnostics": list(self.diagnostics),
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    @staticmethod
    def from_json(text: str) -> "RankSpacePlan":
        try:
            doc = json.loads(text)
            layers = tuple(
                LayerRankPlan(
                    layer_id=entry["layer_id"],
                    candidates=tuple(RankPair(int(r1), int(r2)) for r1, r2 in entry["candidates"]),
                    alpha_rank=float(entry["alpha_rank"]),
                    step_size=int(entry["step_size"]),
                )
                for entry in doc["layers"]
            )
            return RankSpacePlan(
                alpha=float(doc["alpha"]),
                layers=layers,
                diagnostics=tuple(doc.get("diagnostics", ())),
            )
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise DataFormatError(f"invalid rank plan: {exc}") from exc


def alpha_rank(spec: ConvLayerSpec, alpha: float) -> float:
    """Continuous rank divisor: with r1 = F/a and r2 = C/a, the factorized
    parameter count F*r1 + C*r2 + r1*r2*K1*K2 equals the dense count / alpha.

    Closed form (the positive root of the implied quadratic), written in the
    rationalized way that avoids cancellation for large alpha.
    """
    if not alpha > 0.0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    f, c = spec.out_channels, spec.in_channels
    k = spec.kernel_h * spec.kernel_w
    fck = f * c * k
    cf2 = c * c + f * f
    root = math.sqrt(cf2 * cf2 + 4.0 * fck * fck / alpha)
    return alpha * (root + cf2) / (2.0 * fck)


def step_size_for(t: int, network_max: int | None = None) -> int:
    """Rank-grid step for a layer with t = min(in_channels, out_channels).

    Buckets 16/32/64/128/256/512 map to steps 4/8/16/16/32/32, indexing by
    the nearest lower bucket and clamping at both ends. Networks whose
    largest channel count (`network_max`, defaulting to t) is below 128 use
    step 4 throughout.
    """
    t = int(t)
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    ref = t if network_max is None else int(network_max)
    if ref < _SMALL_NETWORK_LIMIT:
        return _STEP_TABLE[0]
    if t < 16:
        return _STEP_TABLE[0]
    bucket = min((t // 16).bit_length() - 1, len(_STEP_TABLE) - 1)
    return _STEP_TABLE[bucket]


def _nearest_multiple(x: int, s: int) -> int:
    """Multiple of s nearest to integer x, halves rounding up, floor s."""
    return max(s, ((x + s // 2) // s) * s)


def _ratio_partner(r: int, num: int, den: int, s: int, bound: int) -> int:
    """Rank paired to r across the channel ratio: ceil(r*num/den) snapped to
    the step grid, kept inside [1, bound]."""
    q = -((-r * num) // den)  # exact ceiling of r*num/den
    v = _nearest_multiple(q, s)
    return min(v, bound)


def _candidate_r_values(t: int, s: int, a: float, layer_id: str, diags: list[str]) -> list[int]:
    """Multiples of s inside the relaxed interval [t/(a+2), t/(a-2)], clamped
    to [s, t] and rounded outward; the bound t itself joins when rounding up
    would cross it. Degenerate layers fall back to the nearest grid values."""
    lo_raw = t / (a + 2.0)
    hi_raw = float(t) if a <= 2.0 else t / (a - 2.0)
    lo = max(lo_raw, float(s))
    hi = min(hi_raw, float(t))

    top_multiple = (t // s) * s
    if top_multiple < s:
        # No multiple of s fits under t at all: the bound is forced.
        diags.append(f"{layer_id}: step {s} exceeds rank bound {t}; using boundary value")
        return [t]

    if lo > hi:
        # Interval vanished after clamping: take the two in-bound grid values
        # nearest to the raw interval midpoint.
        mid = 0.5 * (max(lo_raw, 1.0) + min(hi_raw, float(t)))
        multiples = list(range(s, top_multiple + 1, s))
        multiples.sort(key=lambda v: (abs(v - mid), v))
        picked = sorted(set(multiples[:2]))
        diags.append(
            f"{layer_id}: rank interval empty after clamping; "
            f"falling back to nearest grid values {picked}"
        )
        return picked

    lo_m = max(s, int(math.floor(lo / s)) * s)
    hi_m = int(math.ceil(hi / s)) * s
    values = list(range(lo_m, min(hi_m, top_multiple) + 1, s))
    if hi_m > t and t != top_multiple:
        values.append(t)
    return values


def build_rank_space(specs: list[ConvLayerSpec], target: CompressionTarget) -> RankSpacePlan:
    """Enumerate rank-pair candidates for every layer.

    Each layer contributes equal pairs (r, r) plus ratio pairs where the rank
    on the wider channel mode is scaled down by the channel ratio, both on
    the layer's step grid. Candidates are unique and sorted; layers with
    fewer than two candidates are reported in the plan diagnostics.
    """
    if not specs:
        raise ValueError("no layers to plan")
    seen = set()
    for spec in specs:
        if spec.layer_id in seen:
            raise ValueError(f"duplicate layer_id {spec.layer_id!r}")
        seen.add(spec.layer_id)

    network_max = max(max(s.in_channels, s.out_channels) for s in specs)
    diags: list[str] = []
    layer_plans = []
    for spec in specs:
        f, c = spec.out_channels, spec.in_channels
        t = min(f, c)
        s = step_size_for(t, network_max)
        a = alpha_rank(spec, target.alpha)
        r_values = _candidate_r_values(t, s, a, spec.layer_id, diags)

        pairs = set()
        for r in r_values:
            pairs.add(RankPair(min(r, f), min(r, c)))
            if c >= f:
                pairs.add(RankPair(min(r, f), _ratio_partner(r, f, c, s, c)))
            else:
                pairs.add(RankPair(_ratio_partner(r, c, f, s, f), min(r, c)))
        candidates = tuple(sorted(pairs))
        if len(candidates) < 2:
            diags.append(f"{spec.layer_id}: only {len(candidates)} rank candidate(s)")
        layer_plans.append(
            LayerRankPlan(
                layer_id=spec.layer_id,
                candidates=candidates,
                alpha_rank=a,
                step_size=s,
            )
        )

    return RankSpacePlan(alpha=target.alpha, layers=tuple(layer_plans), diagnostics=tuple(diags))
