"""Tucker-2 factorization of convolution weights.

A dense kernel W with shape (F, C, K1, K2) is factored as

    W[f, c, i, j] = sum_{a, b} core[a, b, i, j] * m1[a, f] * m2[b, c]

with core (r1, r2, K1, K2), m1 (r1, F) acting on the output-channel mode and
m2 (r2, C) on the input-channel mode. Factor matrices come from the leading
left singular vectors of the two channel-mode unfoldings, optionally refined
by alternating re-projection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor_ops import mode_product, truncated_svd, unfold

__all__ = [
    "ConvLayerSpec",
    "RankPair",
    "TuckerFactors",
    "SpectralInfo",
    "decompose",
    "reconstruct",
    "preservation_ratio",
    "count_params",
    "equal_spectrum_rho",
]


@dataclass(frozen=True)
class ConvLayerSpec:
    """Static description of one convolution layer."""

    layer_id: str
    out_channels: int
    in_channels: int
    kernel_h: int
    kernel_w: int
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        for name in ("out_channels", "in_channels", "kernel_h", "kernel_w", "stride"):
            if getattr(self, name) < 1:
                raise ValueError(f"{self.layer_id}: {name} must be >= 1")
        if self.padding < 0:
            raise ValueError(f"{self.layer_id}: padding must be >= 0")

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.out_channels, self.in_channels, self.kernel_h, self.kernel_w)

    @property
    def dense_params(self) -> int:
        return self.out_channels * self.in_channels * self.kernel_h * self.kernel_w


@dataclass(frozen=True, order=True)
class RankPair:
    """(r1, r2): retained ranks on the output- and input-channel modes."""

    r1: int
    r2: int

    def __post_init__(self):
        if self.r1 < 1 or self.r2 < 1:
            raise ValueError(f"ranks must be >= 1, got ({self.r1}, {self.r2})")


def _check_bounds(ranks: RankPair, out_channels: int, in_channels: int, who: str) -> None:
    if ranks.r1 > out_channels or ranks.r2 > in_channels:
        raise ValueError(
            f"{who}: ranks ({ranks.r1}, {ranks.r2}) exceed channel bounds "
            f"({out_channels}, {in_channels})"
        )


@dataclass
class TuckerFactors:
    """Factor set for one layer. Arrays are float64, row-major, trainable in
    place. `error_history` records the relative reconstruction error after
    the initial projection and after each refinement round."""

    core: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    ranks: RankPair
    error_history: tuple[float, ...] = field(default=(), compare=False)


@dataclass(frozen=True)
class SpectralInfo:
    """Singular-value mass retained by a rank choice.

    `rho` multiplies the retained fractions of the two channel-mode spectra;
    `degenerate` marks an all-zero weight, where the ratio is reported as 1.
    """

    mode1_singulars: np.ndarray
    mode2_singulars: np.ndarray
    rho: float
    degenerate: bool


def _top_left_vectors(mat: np.ndarray, k: int) -> np.ndarray:
    """Leading k left singular vectors as columns, extended with an
    orthonormal complement when k exceeds min(rows, cols)."""
    if k <= min(mat.shape):
        return truncated_svd(mat, k).u
    u, _, _ = np.linalg.svd(mat, full_matrices=True)
    return np.ascontiguousarray(u[:, :k])


def _rel_error(w: np.ndarray, approx: np.ndarray) -> float:
    denom = float(np.linalg.norm(w))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(w - approx) / denom)


def decompose(weight, spec: ConvLayerSpec, ranks: RankPair, refine_iters: int = 3) -> TuckerFactors:
    """Factor a dense kernel at the given ranks.

    Initialization takes the leading left singular vectors of the two
    channel-mode unfoldings; `refine_iters` rounds of alternating
    re-projection then update each factor against the other. The
    reconstruction error is non-increasing across rounds.
    """
    w = np.ascontiguousarray(weight, dtype=np.float64)
    if w.shape != spec.weight_shape:
        raise ValueError(f"{spec.layer_id}: weight shape {w.shape} != {spec.weight_shape}")
    if not np.all(np.isfinite(w)):
        raise ValueError(f"{spec.layer_id}: weight contains non-finite entries")
    _check_bounds(ranks, spec.out_channels, spec.in_channels, spec.layer_id)
    if refine_iters < 0:
        raise ValueError("refine_iters must be >= 0")

    u1 = _top_left_vectors(unfold(w, 0), ranks.r1)
    u2 = _top_left_vectors(unfold(w, 1), ranks.r2)

    def rebuild(a, b):
        core = mode_product(mode_product(w, a.T, 0), b.T, 1)
        return core, mode_product(mode_product(core, a, 0), b, 1)

    core, approx = rebuild(u1, u2)
    history = [_rel_error(w, approx)]
    for _ in range(refine_iters):
        u1 = _top_left_vectors(unfold(mode_product(w, u2.T, 1), 0), ranks.r1)
        u2 = _top_left_vectors(unfold(mode_product(w, u1.T, 0), 1), ranks.r2)
        core, approx = rebuild(u1, u2)
        history.append(_rel_error(w, approx))

    return TuckerFactors(
        core=core,
        m1=np.ascontiguousarray(u1.T),
        m2=np.ascontiguousarray(u2.T),
        ranks=ranks,
        error_history=tuple(history),
    )


def reconstruct(factors: TuckerFactors) -> np.ndarray:
    """Dense kernel implied by a factor set: core contracted with m1 on the
    output-channel mode and m2 on the input-channel mode."""
    core = np.asarray(factors.core)
    if core.ndim != 4:
        raise ValueError(f"core must be 4-way, got ndim={core.ndim}")
    r1, r2 = factors.ranks.r1, factors.ranks.r2
    if core.shape[0] != r1 or core.shape[1] != r2:
        raise ValueError(f"core shape {core.shape} inconsistent with ranks ({r1}, {r2})")
    if factors.m1.shape[0] != r1 or factors.m2.shape[0] != r2:
        raise ValueError("factor matrices inconsistent with ranks")
    return mode_product(mode_product(core, factors.m1.T, 0), factors.m2.T, 1)


def preservation_ratio(weight, ranks: RankPair) -> SpectralInfo:
    """Product over the two channel modes of the fraction of singular-value
    mass kept by the rank cut. 1.0 (flagged) for an all-zero weight."""
    w = np.ascontiguousarray(weight, dtype=np.float64)
    if w.ndim != 4:
        raise ValueError(f"expected a 4-way weight, got ndim={w.ndim}")
    if not np.all(np.isfinite(w)):
        raise ValueError("weight contains non-finite entries")
    _check_bounds(ranks, w.shape[0], w.shape[1], "preservation_ratio")

    s1 = np.linalg.svd(unfold(w, 0), compute_uv=False)
    s2 = np.linalg.svd(unfold(w, 1), compute_uv=False)
    t1, t2 = float(np.sum(s1)), float(np.sum(s2))
    if t1 == 0.0 or t2 == 0.0:
        return SpectralInfo(s1, s2, 1.0, True)
    f1 = float(np.sum(s1[: ranks.r1])) / t1
    f2 = float(np.sum(s2[: ranks.r2])) / t2
    return SpectralInfo(s1, s2, f1 * f2, False)


def count_params(spec: ConvLayerSpec, ranks: RankPair) -> tuple[int, int]:
    """(dense parameter count, factorized parameter count) for one layer."""
    _check_bounds(ranks, spec.out_channels, spec.in_channels, spec.layer_id)
    n_org = spec.dense_params
    n_tucker = (
        spec.out_channels * ranks.r1
        + spec.in_channels * ranks.r2
        + ranks.r1 * ranks.r2 * spec.kernel_h * spec.kernel_w
    )
    return n_org, n_tucker


def equal_spectrum_rho(spec: ConvLayerSpec, ranks: RankPair) -> float:
    """Preservation ratio under the idealized flat-spectrum model: r1*r2/(F*C).

    Useful as the analytic objective when comparing rank pairs at a fixed
    parameter count; the unique maximizer there is the pair with the smallest
    |r1 - r2| gap.
    """
    _check_bounds(ranks, spec.out_channels, spec.in_channels, spec.layer_id)
    return (ranks.r1 * ranks.r2) / (spec.out_channels * spec.in_channels)
