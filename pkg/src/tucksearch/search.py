"""Differentiable rank selection over a branched supernet.

Every searched convolution is replaced by a set of factorized branches, one
per candidate rank pair, sharing the surrounding layers. Branch weights are
trained on sampled paths against the training split (classification loss
plus a feature-matching term toward the frozen dense network). Branch
probabilities are trained on the validation split through an
expectation-over-branches forward pass, with the classification loss
multiplied by a budget penalty on the expected hardware cost. Afterwards the
most probable branch per layer is kept.

All random draws flow from explicit seeds, so a run is reproducible and can
resume from a checkpoint mid-way with an identical trajectory.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import (
    load_checkpoint,
    pack_rng_state,
    pack_text,
    restore_rng_state,
    save_checkpoint,
    unpack_text,
)
from .costmodel import LatencyTable, lookup, penalty_factor
from .data import hash_split, iter_batches
from .errors import DataFormatError, NumericError
from .layers import Conv2d, Flatten, Linear, MaxPool2d, ReLU, TuckerConv2d
from .net import SequentialNet, composite_loss, cross_entropy, evaluate
from .optim import LrSchedule, SgdNesterov
from .rankspace import RankSpacePlan
from .tucker import RankPair, decompose

__all__ = [
    "SearchConfig",
    "CandidateBranch",
    "MixedConv",
    "Supernet",
    "build_supernet",
    "SelectionResult",
    "SearchResult",
    "run_search",
    "finalize",
    "selected_net",
    "fine_tune",
    "clip_grads",
]


@dataclass(frozen=True)
class SearchConfig:
    """Hyperparameters of one search run; hashable into checkpoints.

    Branch weights start at factorizations of an already-trained network, so
    `weight_lr` is deliberately small: factor gradients scale with the norms
    of the other factors, and large steps feed back on themselves. Updates
    are additionally bounded by `grad_clip` (global gradient norm over the
    parameters touched in a step; 0 disables).
    """

    alpha: float
    budget: float
    eta: float = 1.0
    theta: float = 0.6
    lam: float = 0.1
    epochs: int = 20
    weight_lr: float = 1e-3
    prob_lr: float = 3e-3
    grad_clip: float = 5.0
    seed: int = 0
    validation_fraction: float = 0.2
    batch_size: int = 64
    momentum: float = 0.9
    weight_decay: float = 1e-4
    lr_decay: float = 0.2
    lr_decay_period: int = 55
    refine_iters: int = 2

    def __post_init__(self):
        if self.budget <= 0:
            raise ValueError("budget must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.grad_clip < 0:
            raise ValueError("grad_clip must be >= 0")

    def canonical(self) -> str:
        """Stable text form of everything that shapes the trajectory.

        `epochs` is only a stopping point, so it is left out; that lets a
        checkpointed run be extended without a hash mismatch.
        """
        payload = asdict(self)
        del payload["epochs"]
        return json.dumps(payload, sort_keys=True)

    def hash_bytes(self) -> bytes:
        return hashlib.sha256(self.canonical().encode("utf-8")).digest()


@dataclass
class CandidateBranch:
    ranks: RankPair
    layer: TuckerConv2d
    cost: float

    @property
    def name(self) -> str:
        return f"{self.ranks.r1}x{self.ranks.r2}"


class MixedConv:
    """One searched convolution: parallel branches plus selection logits."""

    def __init__(self, layer_id: str, branches: list[CandidateBranch]):
        if not branches:
            raise ValueError(f"{layer_id}: needs at least one branch")
        self.layer_id = layer_id
        self.branches = branches
        self.logits = np.zeros(len(branches))
        self.costs = np.array([b.cost for b in branches])
        self._outputs: list[np.ndarray] | None = None
        self._probs_used: np.ndarray | None = None

    def probs(self) -> np.ndarray:
        z = self.logits - self.logits.max()
        e = np.exp(z)
        return e / e.sum()

    def forward_branch(self, x: np.ndarray, index: int) -> np.ndarray:
        return self.branches[index].layer.forward(x)

    def forward_expected(self, x: np.ndarray) -> np.ndarray:
        p = self.probs()
        outputs = [b.layer.forward(x) for b in self.branches]
        self._outputs = outputs
        self._probs_used = p
        y = p[0] * outputs[0]
        for i in range(1, len(outputs)):
            y += p[i] * outputs[i]
        return y

    def backward_expected(self, dy: np.ndarray, need_input_grad: bool):
        """Input gradient of the mixture and, per branch, the inner product
        of `dy` with that branch's output (the loss gradient on its
        probability)."""
        if self._outputs is None:
            raise RuntimeError(f"{self.layer_id}: backward before expected forward")
        inner = np.array([float((dy * y).sum()) for y in self._outputs])
        dx = None
        if need_input_grad:
            for i, b in enumerate(self.branches):
                part = b.layer.backward(
                    self._probs_used[i] * dy, need_input_grad=True, need_param_grads=False
                )
                dx = part if dx is None else dx + part
        return dx, inner

    def expected_cost(self) -> float:
        return float(self.probs() @ self.costs)


def _clone_plain(layer):
    if isinstance(layer, Conv2d):
        return Conv2d(layer.layer_id, layer.weight.copy(), layer.stride, layer.padding)
    if isinstance(layer, Linear):
        return Linear(layer.layer_id, layer.weight.copy(), layer.bias.copy())
    if isinstance(layer, ReLU):
        return ReLU()
    if isinstance(layer, MaxPool2d):
        return MaxPool2d(layer.kernel, layer.stride)
    if isinstance(layer, Flatten):
        return Flatten()
    raise TypeError(f"cannot clone layer of type {type(layer).__name__}")


class Supernet:
    """Branched copy of a dense network; searched convs become MixedConv."""

    def __init__(self, slots: list):
        self.slots = slots
        self._taps: dict[str, np.ndarray] = {}
        self._active: dict[str, int] | None = None
        self._mode: str | None = None

    def mixed(self) -> list[MixedConv]:
        return [s for s in self.slots if isinstance(s, MixedConv)]

    def named_params(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for slot in self.slots:
            if isinstance(slot, MixedConv):
                for b in slot.branches:
                    for pname, arr in b.layer.params().items():
                        out[f"{slot.layer_id}@{b.name}.{pname}"] = arr
            else:
                for pname, arr in slot.params().items():
                    out[f"{slot.layer_id}.{pname}"] = arr
        return out

    def sample_path(self, rng: np.random.Generator) -> dict[str, int]:
        """Draw one branch per searched layer from the current probabilities."""
        choices: dict[str, int] = {}
        for m in self.mixed():
            choices[m.layer_id] = int(rng.choice(len(m.branches), p=m.probs()))
        return choices

    def forward_sampled(self, x: np.ndarray, choices: dict[str, int]) -> np.ndarray:
        self._taps = {}
        for slot in self.slots:
            if isinstance(slot, MixedConv):
                x = slot.forward_branch(x, choices[slot.layer_id])
                self._taps[slot.layer_id] = x
            else:
                x = slot.forward(x)
        self._active = dict(choices)
        self._mode = "sampled"
        return x

    @property
    def taps(self) -> dict[str, np.ndarray]:
        return self._taps

    def backward_sampled(
        self, dout: np.ndarray, tap_grads: dict[str, np.ndarray] | None = None
    ) -> dict[str, np.ndarray]:
        """Backpropagate through the active path; returns the named grads of
        every parameter the path touched."""
        if self._mode != "sampled":
            raise RuntimeError("backward_sampled without a sampled forward")
        pending = dict(tap_grads) if tap_grads else {}
        touched: dict[str, np.ndarray] = {}
        dy = dout
        for i in range(len(self.slots) - 1, -1, -1):
            slot = self.slots[i]
            if isinstance(slot, MixedConv):
                if slot.layer_id in pending:
                    dy = dy + pending.pop(slot.layer_id)
                b = slot.branches[self._active[slot.layer_id]]
                dy = b.layer.backward(dy, need_input_grad=(i > 0), need_param_grads=True)
                for pname, arr in b.layer.grads().items():
                    touched[f"{slot.layer_id}@{b.name}.{pname}"] = arr
            else:
                dy = slot.backward(dy, need_input_grad=(i > 0), need_param_grads=True)
                for pname, arr in slot.grads().items():
                    touched[f"{slot.layer_id}.{pname}"] = arr
        if pending:
            raise ValueError(f"tap gradients for unknown layers: {sorted(pending)}")
        return touched

    def forward_expected(self, x: np.ndarray) -> np.ndarray:
        for slot in self.slots:
            if isinstance(slot, MixedConv):
                x = slot.forward_expected(x)
            else:
                x = slot.forward(x)
        self._mode = "expected"
        return x

    def backward_expected(self, dout: np.ndarray) -> dict[str, np.ndarray]:
        """Propagate a loss gradient through the expectation forward; returns
        per-layer branch-probability gradients (no parameter grads)."""
        if self._mode != "expected":
            raise RuntimeError("backward_expected without an expected forward")
        prob_grads: dict[str, np.ndarray] = {}
        dy = dout
        for i in range(len(self.slots) - 1, -1, -1):
            slot = self.slots[i]
            if isinstance(slot, MixedConv):
                dy, inner = slot.backward_expected(dy, need_input_grad=(i > 0))
                prob_grads[slot.layer_id] = inner
            else:
                dy = slot.backward(dy, need_input_grad=(i > 0), need_param_grads=False)
        return prob_grads

    def expected_cost(self) -> float:
        return sum(m.expected_cost() for m in self.mixed())


def build_supernet(
    dense_net: SequentialNet,
    plan: RankSpacePlan,
    table: LatencyTable,
    refine_iters: int = 2,
) -> Supernet:
    """Expand searched convolutions of a trained dense net into branches.

    Each branch starts from the factorization of the dense weight at its
    candidate ranks; its hardware cost comes from the table, resolved once.
    """
    plan_ids = {lp.layer_id for lp in plan.layers}
    slots: list = []
    seen: set[str] = set()
    for layer in dense_net.layers:
        if isinstance(layer, Conv2d) and layer.layer_id in plan_ids:
            spec = layer.spec
            branches = []
            for ranks in plan.layer(layer.layer_id).candidates:
                factors = decompose(layer.weight, spec, ranks, refine_iters=refine_iters)
                cost = lookup(table, layer.layer_id, ranks)
                branches.append(
                    CandidateBranch(
                        ranks,
                        TuckerConv2d(layer.layer_id, factors, spec.stride, spec.padding),
                        cost,
                    )
                )
            slots.append(MixedConv(layer.layer_id, branches))
            seen.add(layer.layer_id)
        else:
            slots.append(_clone_plain(layer))
    missing = plan_ids - seen
    if missing:
        raise ValueError(f"plan covers layers absent from the network: {sorted(missing)}")
    return Supernet(slots)


@dataclass(frozen=True)
class SelectionResult:
    """Outcome of a search: one rank pair per searched layer."""

    ranks: dict[str, RankPair]
    total_cost: float
    probabilities: dict[str, list[float]]
    config_sha256: str
    seed: int
    epochs_run: int

    def to_json(self) -> str:
        payload = {
            "ranks": {k: [v.r1, v.r2] for k, v in sorted(self.ranks.items())},
            "total_cost": self.total_cost,
            "probabilities": {k: v for k, v in sorted(self.probabilities.items())},
            "config_sha256": self.config_sha256,
            "seed": self.seed,
            "epochs_run": self.epochs_run,
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    @staticmethod
    def from_json(text: str) -> "SelectionResult":
        try:
            payload = json.loads(text)
            return SelectionResult(
                ranks={k: RankPair(*v) for k, v in payload["ranks"].items()},
                total_cost=float(payload["total_cost"]),
                probabilities=payload["probabilities"],
                config_sha256=payload["config_sha256"],
                seed=int(payload["seed"]),
                epochs_run=int(payload["epochs_run"]),
            )
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise DataFormatError(f"bad selection file: {exc}") from None


@dataclass
class SearchResult:
    selection: SelectionResult
    metrics: list[dict] = field(default_factory=list)
    supernet: Supernet | None = field(default=None, repr=False)


def finalize(supernet: Supernet, config: SearchConfig, epochs_run: int) -> SelectionResult:
    """Pick the most probable branch per layer. Exact probability ties go to
    the cheapest branch, then the smaller rank sum, then branch order."""
    ranks: dict[str, RankPair] = {}
    probabilities: dict[str, list[float]] = {}
    total = 0.0
    for m in supernet.mixed():
        p = m.probs()
        pmax = p.max()
        tied = [i for i in range(len(p)) if p[i] == pmax]
        best = min(
            tied, key=lambda i: (m.branches[i].cost, m.branches[i].ranks.r1 + m.branches[i].ranks.r2, i)
        )
        ranks[m.layer_id] = m.branches[best].ranks
        probabilities[m.layer_id] = [float(v) for v in p]
        total += m.branches[best].cost
    return SelectionResult(
        ranks=ranks,
        total_cost=total,
        probabilities=probabilities,
        config_sha256=config.hash_bytes().hex(),
        seed=config.seed,
        epochs_run=epochs_run,
    )


def selected_net(supernet: Supernet, selection: SelectionResult) -> SequentialNet:
    """Network made of the chosen branches plus the shared layers."""
    layers = []
    for slot in supernet.slots:
        if isinstance(slot, MixedConv):
            want = selection.ranks[slot.layer_id]
            match = [b for b in slot.branches if b.ranks == want]
            if not match:
                raise ValueError(f"{slot.layer_id}: no branch with ranks {want}")
            layers.append(match[0].layer)
        else:
            layers.append(slot)
    return SequentialNet(layers)


def clip_grads(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale a gradient dict in place so its global norm is at most
    `max_norm` (no-op when `max_norm` is 0). Returns the pre-clip norm."""
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm > 0.0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def _weight_step(
    supernet: Supernet,
    dense_net: SequentialNet,
    xb: np.ndarray,
    yb: np.ndarray,
    config: SearchConfig,
    opt: SgdNesterov,
    sample_rng: np.random.Generator,
):
    lam = config.lam
    choices = supernet.sample_path(sample_rng)
    if lam > 0.0:
        dense_net.forward(xb, record_taps=True)
        ref_taps = {lid: dense_net.taps[lid] for lid in choices}
    else:
        ref_taps = {}
    logits = supernet.forward_sampled(xb, choices)
    total, ce, app, dlogits, tap_grads = composite_loss(
        logits, yb, supernet.taps, ref_taps, lam
    )
    if not np.isfinite(total):
        raise NumericError(
            "weight training diverged (non-finite loss); lower weight_lr"
        )
    touched = supernet.backward_sampled(dlogits, tap_grads)
    clip_grads(touched, config.grad_clip)
    opt.step(touched)
    return total, ce, app


def _prob_step(supernet: Supernet, xb: np.ndarray, yb: np.ndarray, config: SearchConfig):
    logits = supernet.forward_expected(xb)
    ce, dlogits = cross_entropy(logits, yb)
    if not np.isfinite(ce):
        raise NumericError(
            "probability training hit a non-finite loss; lower weight_lr or prob_lr"
        )
    total_cost = supernet.expected_cost()
    pen = penalty_factor(total_cost, config.budget, config.eta, config.theta)
    if config.theta == 0.0:
        dpen = 0.0
    else:
        dpen = (
            config.eta
            * config.theta
            * (total_cost / config.budget) ** (config.theta - 1.0)
            / config.budget
        )
    ce_prob_grads = supernet.backward_expected(pen * dlogits)
    for m in supernet.mixed():
        # d(ce * pen)/dp through both factors, then the softmax Jacobian
        g_p = ce_prob_grads[m.layer_id] + ce * dpen * m.costs
        p = m._probs_used
        g_logits = p * (g_p - float(p @ g_p))
        m.logits -= config.prob_lr * g_logits
    return ce * pen, ce, total_cost, pen


_CKPT_PREFIX_BRANCH = "branch/"
_CKPT_PREFIX_SHARED = "shared/"
_CKPT_PREFIX_LOGITS = "logits/"
_CKPT_PREFIX_VEL = "vel/"


def _checkpoint_tensors(
    supernet: Supernet,
    dense_net: SequentialNet,
    opt: SgdNesterov,
    sample_rng: np.random.Generator,
    epoch_done: int,
) -> dict[str, np.ndarray]:
    tensors: dict[str, np.ndarray] = {}
    for slot in supernet.slots:
        if isinstance(slot, MixedConv):
            tensors[f"{_CKPT_PREFIX_LOGITS}{slot.layer_id}"] = slot.logits
            for b in slot.branches:
                for pname, arr in b.layer.params().items():
                    tensors[f"{_CKPT_PREFIX_BRANCH}{slot.layer_id}@{b.name}.{pname}"] = arr
        else:
            for pname, arr in slot.params().items():
                tensors[f"{_CKPT_PREFIX_SHARED}{slot.layer_id}.{pname}"] = arr
    for name, v in opt.state().items():
        tensors[f"{_CKPT_PREFIX_VEL}{name}"] = v
    for name, arr in dense_net.named_params().items():
        tensors[f"dense/{name}"] = arr
    tensors["rng/sample"] = pack_rng_state(sample_rng)
    tensors["meta/epoch"] = np.array([epoch_done], dtype=np.int64)
    return tensors


def _restore_search_state(
    path, supernet: Supernet, opt: SgdNesterov, config: SearchConfig
) -> tuple[np.random.Generator, int]:
    tensors, stored_hash = load_checkpoint(path)
    if stored_hash != config.hash_bytes():
        raise DataFormatError(f"{path}: checkpoint was written with a different configuration")
    params = supernet.named_params()
    for name, arr in tensors.items():
        if name.startswith(_CKPT_PREFIX_BRANCH):
            key = name[len(_CKPT_PREFIX_BRANCH) :]
        elif name.startswith(_CKPT_PREFIX_SHARED):
            key = name[len(_CKPT_PREFIX_SHARED) :]
        else:
            continue
        if key not in params:
            raise DataFormatError(f"{path}: parameter {key!r} does not exist in this net")
        if params[key].shape != arr.shape:
            raise DataFormatError(f"{path}: {key}: shape {arr.shape} != {params[key].shape}")
        params[key][...] = arr
    for m in supernet.mixed():
        name = f"{_CKPT_PREFIX_LOGITS}{m.layer_id}"
        if name not in tensors:
            raise DataFormatError(f"{path}: missing logits for {m.layer_id}")
        m.logits[...] = tensors[name]
    velocities = {
        name[len(_CKPT_PREFIX_VEL) :]: arr
        for name, arr in tensors.items()
        if name.startswith(_CKPT_PREFIX_VEL)
    }
    opt.load_state(velocities)
    if "rng/sample" not in tensors or "meta/epoch" not in tensors:
        raise DataFormatError(f"{path}: missing sampling state")
    rng = restore_rng_state(tensors["rng/sample"])
    return rng, int(tensors["meta/epoch"][0])


def run_search(
    dense_net: SequentialNet,
    plan: RankSpacePlan,
    table: LatencyTable,
    inputs: np.ndarray,
    labels: np.ndarray,
    config: SearchConfig,
    out_dir=None,
    resume_from=None,
    netspec_text: str | None = None,
    plan_text: str | None = None,
) -> SearchResult:
    """Alternating weight / probability optimization, then branch selection.

    Per epoch, every training batch updates the sampled path's weights and
    every validation batch updates the branch probabilities. With `out_dir`
    set, per-epoch metrics go to metrics.jsonl and a resumable checkpoint to
    search_state.ckpt; `resume_from` picks up after the last finished epoch.
    """
    train_idx, val_idx = hash_split(
        inputs.shape[0], config.validation_fraction, config.seed
    )
    if len(train_idx) == 0 or len(val_idx) == 0:
        raise DataFormatError("train/validation split left one side empty")
    supernet = build_supernet(dense_net, plan, table, refine_iters=config.refine_iters)
    schedule = LrSchedule(config.weight_lr, config.lr_decay, config.lr_decay_period)
    opt = SgdNesterov(
        supernet.named_params(),
        lr=config.weight_lr,
        momentum=config.momentum,
        weight_decay=config.weight_decay,
    )
    if resume_from is not None:
        sample_rng, start_epoch = _restore_search_state(resume_from, supernet, opt, config)
    else:
        sample_rng = np.random.default_rng([config.seed, 1])
        start_epoch = 0

    x_train, y_train = inputs[train_idx], labels[train_idx]
    x_val, y_val = inputs[val_idx], labels[val_idx]
    metrics: list[dict] = []
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

    for epoch in range(start_epoch, config.epochs):
        opt.lr = schedule.at(epoch)
        tr_total = tr_ce = tr_app = 0.0
        n_tr = 0
        for batch in iter_batches(
            x_train, y_train, config.batch_size, np.random.default_rng([config.seed, epoch, 0])
        ):
            total, ce, app = _weight_step(
                supernet, dense_net, batch.inputs, batch.labels, config, opt, sample_rng
            )
            tr_total += total
            tr_ce += ce
            tr_app += app
            n_tr += 1
        va_pen = va_ce = 0.0
        n_va = 0
        for batch in iter_batches(
            x_val, y_val, config.batch_size, np.random.default_rng([config.seed, epoch, 1])
        ):
            pen_loss, ce, _, _ = _prob_step(supernet, batch.inputs, batch.labels, config)
            va_pen += pen_loss
            va_ce += ce
            n_va += 1
        row = {
            "epoch": epoch,
            "lr": opt.lr,
            "train_loss": tr_total / n_tr,
            "train_ce": tr_ce / n_tr,
            "train_approach": tr_app / n_tr,
            "val_penalized": va_pen / n_va,
            "val_ce": va_ce / n_va,
            "expected_cost": supernet.expected_cost(),
            "penalty": penalty_factor(
                supernet.expected_cost(), config.budget, config.eta, config.theta
            ),
        }
        metrics.append(row)
        if out_dir is not None:
            with open(out_dir / "metrics.jsonl", "a") as fh:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
            tensors = _checkpoint_tensors(supernet, dense_net, opt, sample_rng, epoch + 1)
            if netspec_text is not None:
                tensors["meta/netspec"] = pack_text(netspec_text)
            if plan_text is not None:
                tensors["meta/plan"] = pack_text(plan_text)
            save_checkpoint(out_dir / "search_state.ckpt", tensors, config.hash_bytes())

    selection = finalize(supernet, config, config.epochs)
    result = SearchResult(selection=selection, metrics=metrics, supernet=supernet)
    if out_dir is not None:
        with open(out_dir / "selection.json", "w") as fh:
            fh.write(selection.to_json())
    return result


def fine_tune(
    net: SequentialNet,
    inputs: np.ndarray,
    labels: np.ndarray,
    epochs: int,
    lr: float,
    seed: int = 0,
    batch_size: int = 64,
    momentum: float = 0.9,
    weight_decay: float = 1e-4,
    lr_decay: float = 0.2,
    lr_decay_period: int = 55,
    validation_fraction: float = 0.2,
    grad_clip: float = 5.0,
) -> list[dict]:
    """Plain classification training of a (factorized) network."""
    train_idx, val_idx = hash_split(inputs.shape[0], validation_fraction, seed)
    if len(train_idx) == 0:
        raise DataFormatError("empty training split")
    x_train, y_train = inputs[train_idx], labels[train_idx]
    schedule = LrSchedule(lr, lr_decay, lr_decay_period)
    opt = SgdNesterov(net.named_params(), lr=lr, momentum=momentum, weight_decay=weight_decay)
    history: list[dict] = []
    for epoch in range(epochs):
        opt.lr = schedule.at(epoch)
        ce_sum = 0.0
        n = 0
        for batch in iter_batches(
            x_train, y_train, batch_size, np.random.default_rng([seed, epoch, 2])
        ):
            logits = net.forward(batch.inputs)
            ce, dlogits = cross_entropy(logits, batch.labels)
            if not np.isfinite(ce):
                raise NumericError("training diverged (non-finite loss); lower lr")
            net.backward(dlogits)
            grads = net.named_grads()
            clip_grads(grads, grad_clip)
            opt.step(grads)
            ce_sum += ce
            n += 1
        row = {"epoch": epoch, "lr": opt.lr, "train_ce": ce_sum / n}
        if len(val_idx):
            val_ce, val_acc = evaluate(net, inputs[val_idx], labels[val_idx])
            row["val_ce"] = val_ce
            row["val_acc"] = val_acc
        history.append(row)
    return history
