"""Sequential network container, classification losses, evaluation helpers.

The container records per-convolution feature taps (conv outputs before any
nonlinearity) on request, and its backward pass can inject extra gradient at
those taps. That is what lets a feature-matching penalty against a reference
network flow into the convolution factors.
"""

from __future__ import annotations

import numpy as np

from .errors import DataFormatError
from .layers import Conv2d, Flatten, Linear, MaxPool2d, ReLU, TuckerConv2d
from .netspec import LayerRecord

__all__ = [
    "SequentialNet",
    "build_dense_net",
    "he_conv_weight",
    "he_fc_weight",
    "softmax",
    "cross_entropy",
    "approach_loss",
    "composite_loss",
    "accuracy",
    "evaluate",
]

_CONV_KINDS = (Conv2d, TuckerConv2d)


class SequentialNet:
    """Layers applied in order; convolution outputs can be tapped."""

    def __init__(self, layers: list):
        self.layers = list(layers)
        self._taps: dict[str, np.ndarray] = {}
        self._ran_forward = False

    def conv_layers(self) -> list:
        return [l for l in self.layers if isinstance(l, _CONV_KINDS)]

    def forward(self, x: np.ndarray, record_taps: bool = False) -> np.ndarray:
        self._taps = {}
        for layer in self.layers:
            x = layer.forward(x)
            if record_taps and isinstance(layer, _CONV_KINDS):
                self._taps[layer.layer_id] = x
        self._ran_forward = True
        return x

    @property
    def taps(self) -> dict[str, np.ndarray]:
        return self._taps

    def backward(
        self,
        dout: np.ndarray,
        tap_grads: dict[str, np.ndarray] | None = None,
        need_param_grads: bool = True,
    ) -> None:
        """Backpropagate a gradient on the network output.

        `tap_grads` adds gradient directly on named convolution outputs, on
        top of whatever flows back from later layers.
        """
        if not self._ran_forward:
            raise RuntimeError("backward called before forward")
        pending = dict(tap_grads) if tap_grads else {}
        dy = dout
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            if isinstance(layer, _CONV_KINDS) and layer.layer_id in pending:
                dy = dy + pending.pop(layer.layer_id)
            dy = layer.backward(
                dy, need_input_grad=(i > 0), need_param_grads=need_param_grads
            )
        if pending:
            raise ValueError(f"tap gradients for unknown layers: {sorted(pending)}")

    def named_params(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for layer in self.layers:
            for pname, arr in layer.params().items():
                out[f"{layer.layer_id}.{pname}"] = arr
        return out

    def named_grads(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for layer in self.layers:
            for pname, arr in layer.grads().items():
                out[f"{layer.layer_id}.{pname}"] = arr
        return out

    def zero_grads(self) -> None:
        for arr in self.named_grads().values():
            arr[...] = 0.0

    def param_count(self) -> int:
        return sum(arr.size for arr in self.named_params().values())


def he_conv_weight(rng: np.random.Generator, f: int, c: int, kh: int, kw: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / (c * kh * kw)), size=(f, c, kh, kw))


def he_fc_weight(rng: np.random.Generator, out_features: int, in_features: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / in_features), size=(out_features, in_features))


def build_dense_net(records: list[LayerRecord], rng: np.random.Generator) -> SequentialNet:
    """Instantiate records as a dense network with He-normal weights."""
    layers = []
    for r in records:
        if r.kind == "conv":
            w = he_conv_weight(rng, r.out_channels, r.in_channels, r.kernel_h, r.kernel_w)
            layers.append(Conv2d(r.layer_id, w, r.stride, r.padding))
        elif r.kind == "relu":
            layers.append(ReLU())
        elif r.kind == "maxpool":
            layers.append(MaxPool2d(r.kernel_h, r.stride))
        elif r.kind == "flatten":
            layers.append(Flatten())
        elif r.kind == "fc":
            w = he_fc_weight(rng, r.out_channels, r.in_channels)
            layers.append(Linear(r.layer_id, w, np.zeros(r.out_channels)))
        else:
            raise DataFormatError(f"{r.layer_id}: unknown kind {r.kind!r}")
    return SequentialNet(layers)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _check_labels(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise ValueError(f"logits must be (N, K), got {logits.shape}")
    if labels.shape != (logits.shape[0],):
        raise ValueError(f"labels shape {labels.shape} does not match batch {logits.shape[0]}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError("labels must be integers")
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise ValueError("label out of range")
    return labels


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross entropy and its gradient on the logits."""
    labels = _check_labels(logits, labels)
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(logsumexp - z[np.arange(n), labels]))
    dlogits = softmax(logits)
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n


def approach_loss(
    taps: dict[str, np.ndarray], ref_taps: dict[str, np.ndarray]
) -> tuple[float, dict[str, np.ndarray]]:
    """Sum over layers of mean squared feature-tap error against a reference,
    with the matching gradients on the live taps."""
    if set(taps) < set(ref_taps):
        missing = sorted(set(ref_taps) - set(taps))
        raise ValueError(f"missing taps for layers: {missing}")
    total = 0.0
    grads: dict[str, np.ndarray] = {}
    for layer_id in sorted(ref_taps):
        a, b = taps[layer_id], ref_taps[layer_id]
        if a.shape != b.shape:
            raise ValueError(f"{layer_id}: tap shape {a.shape} vs reference {b.shape}")
        diff = a - b
        total += float(np.mean(diff * diff))
        grads[layer_id] = (2.0 / diff.size) * diff
    return total, grads


def composite_loss(
    logits: np.ndarray,
    labels: np.ndarray,
    taps: dict[str, np.ndarray],
    ref_taps: dict[str, np.ndarray],
    lam: float,
) -> tuple[float, float, float, np.ndarray, dict[str, np.ndarray]]:
    """Classification loss plus `lam` times the feature-matching loss.

    Returns (total, ce, approach, dlogits, tap_grads); the tap gradients are
    already scaled by `lam`.
    """
    ce, dlogits = cross_entropy(logits, labels)
    if lam == 0.0 or not ref_taps:
        return ce, ce, 0.0, dlogits, {}
    app, tap_grads = approach_loss(taps, ref_taps)
    scaled = {k: lam * g for k, g in tap_grads.items()}
    return ce + lam * app, ce, app, dlogits, scaled


def accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    labels = _check_labels(logits, labels)
    return float(np.mean(logits.argmax(axis=1) == labels))


def evaluate(net: SequentialNet, inputs: np.ndarray, labels: np.ndarray, batch_size: int = 256):
    """Mean cross entropy and top-1 accuracy over a dataset, in input order."""
    n = inputs.shape[0]
    if n < 1:
        raise ValueError("empty evaluation set")
    loss_sum = 0.0
    hits = 0
    for start in range(0, n, batch_size):
        xb = inputs[start : start + batch_size]
        yb = labels[start : start + batch_size]
        logits = net.forward(xb)
        ce, _ = cross_entropy(logits, yb)
        loss_sum += ce * xb.shape[0]
        hits += int((logits.argmax(axis=1) == yb).sum())
    return loss_sum / n, hits / n
