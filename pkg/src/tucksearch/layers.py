"""Float64 CNN layers with explicit, deterministic forward/backward passes.

Layers cache what their backward pass needs; backward overwrites gradient
buffers (no accumulation) and returns the input gradient. Convolutions are
cross-correlations (no kernel flip) and carry no bias; the factorized
convolution runs the three-stage form: 1x1 input projection, small spatial
core conv, 1x1 output expansion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tucker import ConvLayerSpec, TuckerFactors

__all__ = [
    "FeatureTap",
    "Conv2d",
    "TuckerConv2d",
    "ReLU",
    "MaxPool2d",
    "Flatten",
    "Linear",
    "conv_forward",
    "tucker2_conv_forward",
    "im2col",
    "col2im",
]


@dataclass(frozen=True)
class FeatureTap:
    """Post-convolution, pre-nonlinearity activation of one layer."""

    layer_id: str
    activation: np.ndarray


def _check_input(x: np.ndarray, channels: int, who: str) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ValueError(f"{who}: input must be (N, C, H, W), got ndim={x.ndim}")
    if x.shape[0] < 1:
        raise ValueError(f"{who}: empty batch")
    if x.shape[1] != channels:
        raise ValueError(f"{who}: expected {channels} input channels, got {x.shape[1]}")
    return x


def _out_hw(h: int, w: int, kh: int, kw: int, stride: int, padding: int) -> tuple[int, int]:
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    if oh < 1 or ow < 1:
        raise ValueError(f"kernel {kh}x{kw} does not fit input {h}x{w} with padding {padding}")
    return oh, ow


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int, oh: int, ow: int) -> np.ndarray:
    n, c = xp.shape[:2]
    sn, sc, sh, sw = xp.strides
    shape = (n, c, kh, kw, oh, ow)
    strides = (sn, sc, sh, sw, sh * stride, sw * stride)
    return np.lib.stride_tricks.as_strided(xp, shape=shape, strides=strides, writeable=False)


def im2col(x: np.ndarray, kh: int, kw: int, stride: int, padding: int) -> np.ndarray:
    """Patch matrix (N, C*kh*kw, out_h*out_w) of sliding windows."""
    n, c, h, w = x.shape
    oh, ow = _out_hw(h, w, kh, kw, stride, padding)
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = _windows(x, kh, kw, stride, oh, ow)
    return win.reshape(n, c * kh * kw, oh * ow)


def col2im(dcols: np.ndarray, x_shape, kh: int, kw: int, stride: int, padding: int) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter patch gradients back to the image."""
    n, c, h, w = x_shape
    oh, ow = _out_hw(h, w, kh, kw, stride, padding)
    dwin = dcols.reshape(n, c, kh, kw, oh, ow)
    dxp = np.zeros((n, c, h + 2 * padding, w + 2 * padding))
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += dwin[
                :, :, i, j
            ]
    if padding:
        return np.ascontiguousarray(dxp[:, :, padding : padding + h, padding : padding + w])
    return dxp


class Conv2d:
    """Dense convolution, weight (F, C, kh, kw), no bias."""

    def __init__(self, layer_id: str, weight: np.ndarray, stride: int = 1, padding: int = 0):
        self.layer_id = layer_id
        self.weight = np.ascontiguousarray(weight, dtype=np.float64)
        if self.weight.ndim != 4:
            raise ValueError(f"{layer_id}: weight must be 4-way")
        self.gweight = np.zeros_like(self.weight)
        self.stride = int(stride)
        self.padding = int(padding)
        self._cache = None

    @property
    def spec(self) -> ConvLayerSpec:
        f, c, kh, kw = self.weight.shape
        return ConvLayerSpec(self.layer_id, f, c, kh, kw, self.stride, self.padding)

    def forward(self, x: np.ndarray) -> np.ndarray:
        f, c, kh, kw = self.weight.shape
        x = _check_input(x, c, self.layer_id)
        n, _, h, w = x.shape
        oh, ow = _out_hw(h, w, kh, kw, self.stride, self.padding)
        cols = im2col(x, kh, kw, self.stride, self.padding)
        y = np.matmul(self.weight.reshape(f, -1), cols)
        self._cache = (x.shape, cols)
        return y.reshape(n, f, oh, ow)

    def backward(self, dy: np.ndarray, need_input_grad: bool = True, need_param_grads: bool = True):
        if self._cache is None:
            raise RuntimeError(f"{self.layer_id}: backward called before forward")
        x_shape, cols = self._cache
        f, c, kh, kw = self.weight.shape
        n = x_shape[0]
        dy2 = dy.reshape(n, f, -1)
        if need_param_grads:
            self.gweight[...] = np.matmul(dy2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(
                self.weight.shape
            )
        if not need_input_grad:
            return None
        dcols = np.matmul(self.weight.reshape(f, -1).T, dy2)
        return col2im(dcols, x_shape, kh, kw, self.stride, self.padding)

    def params(self) -> dict[str, np.ndarray]:
        return {"weight": self.weight}

    def grads(self) -> dict[str, np.ndarray]:
        return {"weight": self.gweight}


class TuckerConv2d:
    """Factorized convolution executing the three-stage form."""

    def __init__(self, layer_id: str, factors: TuckerFactors, stride: int = 1, padding: int = 0):
        self.layer_id = layer_id
        self.core = np.ascontiguousarray(factors.core, dtype=np.float64)
        self.m1 = np.ascontiguousarray(factors.m1, dtype=np.float64)
        self.m2 = np.ascontiguousarray(factors.m2, dtype=np.float64)
        self.ranks = factors.ranks
        r1, r2 = self.ranks.r1, self.ranks.r2
        if self.core.shape[:2] != (r1, r2) or self.m1.shape[0] != r1 or self.m2.shape[0] != r2:
            raise ValueError(f"{layer_id}: factor shapes inconsistent with ranks ({r1}, {r2})")
        self.gcore = np.zeros_like(self.core)
        self.gm1 = np.zeros_like(self.m1)
        self.gm2 = np.zeros_like(self.m2)
        self.stride = int(stride)
        self.padding = int(padding)
        self._cache = None

    @property
    def spec(self) -> ConvLayerSpec:
        r1, r2, kh, kw = self.core.shape
        return ConvLayerSpec(
            self.layer_id, self.m1.shape[1], self.m2.shape[1], kh, kw, self.stride, self.padding
        )

    def factors(self) -> TuckerFactors:
        return TuckerFactors(self.core, self.m1, self.m2, self.ranks)

    def forward(self, x: np.ndarray) -> np.ndarray:
        r1, r2, kh, kw = self.core.shape
        x = _check_input(x, self.m2.shape[1], self.layer_id)
        n, c, h, w = x.shape
        oh, ow = _out_hw(h, w, kh, kw, self.stride, self.padding)
        x2 = x.reshape(n, c, h * w)
        k1 = np.matmul(self.m2, x2)  # 1x1 input projection
        cols = im2col(k1.reshape(n, r2, h, w), kh, kw, self.stride, self.padding)
        k2 = np.matmul(self.core.reshape(r1, -1), cols)  # spatial core conv
        y = np.matmul(self.m1.T, k2)  # 1x1 output expansion
        self._cache = (x.shape, x2, cols, k2)
        return y.reshape(n, self.m1.shape[1], oh, ow)

    def backward(self, dy: np.ndarray, need_input_grad: bool = True, need_param_grads: bool = True):
        if self._cache is None:
            raise RuntimeError(f"{self.layer_id}: backward called before forward")
        x_shape, x2, cols, k2 = self._cache
        r1, r2, kh, kw = self.core.shape
        n, c, h, w = x_shape
        dy2 = dy.reshape(n, self.m1.shape[1], -1)
        if need_param_grads:
            self.gm1[...] = np.matmul(k2, dy2.transpose(0, 2, 1)).sum(axis=0)
        dk2 = np.matmul(self.m1, dy2)
        if need_param_grads:
            self.gcore[...] = (
                np.matmul(dk2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(self.core.shape)
            )
        dcols = np.matmul(self.core.reshape(r1, -1).T, dk2)
        dk1 = col2im(dcols, (n, r2, h, w), kh, kw, self.stride, self.padding)
        dk1 = dk1.reshape(n, r2, h * w)
        if need_param_grads:
            self.gm2[...] = np.matmul(dk1, x2.transpose(0, 2, 1)).sum(axis=0)
        if not need_input_grad:
            return None
        dx = np.matmul(self.m2.T, dk1)
        return dx.reshape(x_shape)

    def params(self) -> dict[str, np.ndarray]:
        return {"core": self.core, "m1": self.m1, "m2": self.m2}

    def grads(self) -> dict[str, np.ndarray]:
        return {"core": self.gcore, "m1": self.gm1, "m2": self.gm2}


class ReLU:
    layer_id = None

    def __init__(self):
        self._mask = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0.0
        return np.where(self._mask, x, 0.0)

    def backward(self, dy: np.ndarray, need_input_grad: bool = True, need_param_grads: bool = True):
        if self._mask is None:
            raise RuntimeError("backward called before forward")
        return dy * self._mask if need_input_grad else None

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def grads(self) -> dict[str, np.ndarray]:
        return {}


class MaxPool2d:
    """Non-padded max pooling; ties go to the first window position."""

    layer_id = None

    def __init__(self, kernel: int, stride: int | None = None):
        self.kernel = int(kernel)
        self.stride = int(stride) if stride is not None else self.kernel
        if self.kernel < 1 or self.stride < 1:
            raise ValueError("kernel and stride must be >= 1")
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        n, c, h, w = x.shape
        k, s = self.kernel, self.stride
        oh, ow = _out_hw(h, w, k, k, s, 0)
        flat = _windows(x, k, k, s, oh, ow).reshape(n, c, k * k, oh, ow)
        arg = flat.argmax(axis=2)
        y = np.take_along_axis(flat, arg[:, :, None], axis=2)[:, :, 0]
        self._cache = (x.shape, arg)
        return np.ascontiguousarray(y)

    def backward(self, dy: np.ndarray, need_input_grad: bool = True, need_param_grads: bool = True):
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        if not need_input_grad:
            return None
        x_shape, arg = self._cache
        n, c, h, w = x_shape
        k, s = self.kernel, self.stride
        oh, ow = arg.shape[2], arg.shape[3]
        dflat = np.zeros((n, c, k * k, oh, ow))
        np.put_along_axis(dflat, arg[:, :, None], dy[:, :, None], axis=2)
        return col2im(dflat.reshape(n, c * k * k, oh * ow), x_shape, k, k, s, 0)

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def grads(self) -> dict[str, np.ndarray]:
        return {}


class Flatten:
    layer_id = None

    def __init__(self):
        self._shape = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy: np.ndarray, need_input_grad: bool = True, need_param_grads: bool = True):
        if self._shape is None:
            raise RuntimeError("backward called before forward")
        return dy.reshape(self._shape) if need_input_grad else None

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def grads(self) -> dict[str, np.ndarray]:
        return {}


class Linear:
    """Fully connected layer y = x W^T + b."""

    def __init__(self, layer_id: str, weight: np.ndarray, bias: np.ndarray):
        self.layer_id = layer_id
        self.weight = np.ascontiguousarray(weight, dtype=np.float64)
        self.bias = np.ascontiguousarray(bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ValueError(f"{layer_id}: inconsistent weight/bias shapes")
        self.gweight = np.zeros_like(self.weight)
        self.gbias = np.zeros_like(self.bias)
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.weight.shape[1]:
            raise ValueError(
                f"{self.layer_id}: expected (N, {self.weight.shape[1]}) input, got {x.shape}"
            )
        self._x = x
        return x @ self.weight.T + self.bias

    def backward(self, dy: np.ndarray, need_input_grad: bool = True, need_param_grads: bool = True):
        if self._x is None:
            raise RuntimeError(f"{self.layer_id}: backward called before forward")
        if need_param_grads:
            self.gweight[...] = dy.T @ self._x
            self.gbias[...] = dy.sum(axis=0)
        return dy @ self.weight if need_input_grad else None

    def params(self) -> dict[str, np.ndarray]:
        return {"weight": self.weight, "bias": self.bias}

    def grads(self) -> dict[str, np.ndarray]:
        return {"weight": self.gweight, "bias": self.gbias}


def conv_forward(x: np.ndarray, weight: np.ndarray, spec: ConvLayerSpec) -> np.ndarray:
    """Pure dense convolution of a batch against a (F, C, kh, kw) kernel."""
    w = np.ascontiguousarray(weight, dtype=np.float64)
    if w.shape != spec.weight_shape:
        raise ValueError(f"{spec.layer_id}: weight shape {w.shape} != {spec.weight_shape}")
    return Conv2d(spec.layer_id, w, spec.stride, spec.padding).forward(x)


def tucker2_conv_forward(
    x: np.ndarray, factors: TuckerFactors, spec: ConvLayerSpec
) -> tuple[np.ndarray, FeatureTap]:
    """Pure three-stage factorized convolution; also returns the layer's
    feature tap (the output itself, before any nonlinearity)."""
    if factors.m1.shape[1] != spec.out_channels or factors.m2.shape[1] != spec.in_channels:
        raise ValueError(f"{spec.layer_id}: factors inconsistent with layer channels")
    y = TuckerConv2d(spec.layer_id, factors, spec.stride, spec.padding).forward(x)
    return y, FeatureTap(spec.layer_id, y)
