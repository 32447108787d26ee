"""Dense rank-4 tensor primitives: unfoldings, mode products, truncated SVD.

Everything is float64 and row-major (C order). Rank-3 quantities are carried
as rank-4 arrays with a unit leading axis, so a single set of routines covers
the whole package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError

__all__ = ["SvdResult", "unfold", "fold", "mode_product", "truncated_svd"]


def _as_f64(a, name: str) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains non-finite entries")
    return out


def unfold(t, mode: int) -> np.ndarray:
    """Matricize a 4-way tensor along `mode`.

    Row i of the result is the slice of `t` with axis `mode` fixed at i,
    flattened with the remaining axes kept in ascending order, row-major.
    """
    t = _as_f64(t, "tensor")
    if t.ndim != 4:
        raise ValueError(f"expected a 4-way tensor, got ndim={t.ndim}")
    if mode not in (0, 1, 2, 3):
        raise ValueError(f"mode must be one of 0..3, got {mode}")
    return np.ascontiguousarray(np.moveaxis(t, mode, 0).reshape(t.shape[mode], -1))


def fold(m, mode: int, shape) -> np.ndarray:
    """Inverse of :func:`unfold`: rebuild the 4-way tensor of `shape` from a
    mode-`mode` unfolding."""
    m = _as_f64(m, "matrix")
    shape = tuple(int(s) for s in shape)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got ndim={m.ndim}")
    if len(shape) != 4 or any(s < 1 for s in shape):
        raise ValueError(f"shape must be 4 positive extents, got {shape}")
    if mode not in (0, 1, 2, 3):
        raise ValueError(f"mode must be one of 0..3, got {mode}")
    rest = shape[:mode] + shape[mode + 1 :]
    want = (shape[mode], int(np.prod(rest)))
    if m.shape != want:
        raise ValueError(f"matrix shape {m.shape} does not match unfolding {want} of {shape}")
    return np.ascontiguousarray(np.moveaxis(m.reshape((shape[mode],) + rest), 0, mode))


def mode_product(t, m, mode: int) -> np.ndarray:
    """Contract a matrix (rows x k) against axis `mode` (extent k) of `t`.

    Equivalent to fold(m @ unfold(t, mode), mode, shape-with-axis-replaced).
    """
    t = _as_f64(t, "tensor")
    m = _as_f64(m, "matrix")
    if t.ndim != 4:
        raise ValueError(f"expected a 4-way tensor, got ndim={t.ndim}")
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got ndim={m.ndim}")
    if mode not in (0, 1, 2, 3):
        raise ValueError(f"mode must be one of 0..3, got {mode}")
    if m.shape[1] != t.shape[mode]:
        raise ValueError(
            f"matrix has {m.shape[1]} columns but tensor axis {mode} has extent {t.shape[mode]}"
        )
    new_shape = list(t.shape)
    new_shape[mode] = m.shape[0]
    return fold(m @ unfold(t, mode), mode, tuple(new_shape))


@dataclass(frozen=True)
class SvdResult:
    """Top-k singular triplets. `u` is (rows, k), `v` is (cols, k), both with
    orthonormal columns; `s` is nonincreasing and nonnegative."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.v.T


def truncated_svd(m, k: int) -> SvdResult:
    """Leading k singular triplets of a dense matrix.

    The $k$ columns of u (and v) minimize the Frobenius reconstruction error
    among rank-k approximations. Ties between equal singular values are
    resolved by the underlying LAPACK driver, deterministically for a fixed
    input on a fixed platform.
    """
    m = _as_f64(m, "matrix")
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got ndim={m.ndim}")
    k = int(k)
    if not 1 <= k <= min(m.shape):
        raise ValueError(f"k={k} out of range 1..{min(m.shape)} for shape {m.shape}")
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD did not converge on shape {m.shape}: {exc}") from exc
    return SvdResult(
        np.ascontiguousarray(u[:, :k]),
        np.ascontiguousarray(s[:k]),
        np.ascontiguousarray(vt[:k].T),
    )
