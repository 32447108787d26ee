"""Command-line interface.

Verbs: plan, decompose, search, finetune, eval, report. Defaults can come
from an INI file (--config): section [tucksearch] applies everywhere, a
section named after the verb overrides it, and explicit flags override both.
The TUCKSEARCH_OUT environment variable supplies a default output directory
for `search` when --out is omitted.

Exit codes: 0 success, 1 bad arguments, 2 bad or missing data / unresolvable
cost lookups, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import modelio
from .costmodel import (
    count_flops,
    flops_proxy_table,
    load_latency_table,
    lookup,
    synthetic_plateau_table,
)
from .data import load_csv_dataset, load_idx_dataset, synthetic_dataset
from .errors import CostResolutionError, DataFormatError, NumericError
from .net import evaluate
from .netspec import conv_specs, load_netspec, netspec_to_text, trace_shapes
from .rankspace import CompressionTarget, RankSpacePlan, build_rank_space
from .search import SearchConfig, fine_tune, run_search, selected_net
from .tucker import RankPair, count_params, decompose, reconstruct

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _parse_hw(text: str) -> tuple[int, int]:
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError:
        raise ValueError(f"--hw must look like 12x12, got {text!r}") from None


def _add_data_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("dataset (pick one source)")
    g.add_argument("--data", help="CSV dataset with a label,pixel0,... header")
    g.add_argument("--images", help="IDX image file (pairs with --labels)")
    g.add_argument("--labels", help="IDX label file")
    g.add_argument("--synthetic", type=int, metavar="N", help="generate N synthetic samples")
    g.add_argument("--classes", type=int, default=10)
    g.add_argument("--channels", type=int, default=3)
    g.add_argument("--hw", default="12x12", help="image size, HxW")
    g.add_argument("--noise", type=float, default=0.25)
    g.add_argument("--data-seed", type=int, default=0)


def _load_dataset(args) -> tuple[np.ndarray, np.ndarray]:
    picked = [args.data is not None, args.images is not None, args.synthetic is not None]
    if sum(picked) != 1:
        raise ValueError("choose exactly one of --data, --images/--labels, --synthetic")
    if args.data is not None:
        return load_csv_dataset(args.data, channels=args.channels)
    if args.images is not None:
        if args.labels is None:
            raise ValueError("--images requires --labels")
        return load_idx_dataset(args.images, args.labels)
    return synthetic_dataset(
        args.synthetic,
        num_classes=args.classes,
        channels=args.channels,
        hw=_parse_hw(args.hw),
        seed=args.data_seed,
        noise=args.noise,
    )


def _conv_input_sizes(records, input_shape) -> dict[str, tuple[int, int]]:
    sizes: dict[str, tuple[int, int]] = {}
    shape = input_shape
    for (lid, out), rec in zip(trace_shapes(records, input_shape), records):
        if rec.kind == "conv":
            sizes[lid] = (shape[1], shape[2])
        shape = out
    return sizes


_SYNTHETIC_SCALE = 1e-9


def _resolve_table(args, records, specs):
    """Returns (table, dense_cost); dense_cost is the uncompressed network's
    cost under the same synthetic model, or None for an external table."""
    if args.latency_table:
        return load_latency_table(args.latency_table), None
    input_shape = (args.channels,) + _parse_hw(args.hw)
    sizes = _conv_input_sizes(records, input_shape)
    dense_cost = sum(
        count_flops(s, sizes[s.layer_id]) * _SYNTHETIC_SCALE for s in specs
    )
    candidates = None
    if getattr(args, "plan", None):
        plan = RankSpacePlan.from_json(Path(args.plan).read_text())
        candidates = {lp.layer_id: list(lp.candidates) for lp in plan.layers}
    if args.cost_model == "flops":
        return flops_proxy_table(specs, sizes, candidates, _SYNTHETIC_SCALE), dense_cost
    return synthetic_plateau_table(specs, sizes, scale=_SYNTHETIC_SCALE), dense_cost


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_plan(args) -> int:
    records = load_netspec(args.net)
    specs = conv_specs(records)
    if not specs:
        raise DataFormatError(f"{args.net}: no searched conv layers")
    plan = build_rank_space(specs, CompressionTarget(args.alpha))
    text = plan.to_json()
    if args.out:
        Path(args.out).write_text(text)
        summary = {
            "layers": {lp.layer_id: len(lp.candidates) for lp in plan.layers},
            "search_space_size": str(plan.search_space_size()),
            "diagnostics": plan.diagnostics,
            "out": args.out,
        }
        _emit(summary, None)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_decompose(args) -> int:
    net, records = modelio.load_model(args.model)
    ranks = modelio.load_ranks_csv(args.ranks)
    fac = modelio.decompose_net(net, ranks, refine_iters=args.refine_iters)
    modelio.save_model(args.out, fac, records)
    dense_by_id = {l.layer_id: l for l in net.conv_layers()}
    report = {}
    for layer in fac.conv_layers():
        if layer.layer_id not in ranks:
            continue
        dense_layer = dense_by_id[layer.layer_id]
        w = dense_layer.weight
        approx = reconstruct(layer.factors())
        rel = float(np.linalg.norm((w - approx).ravel()) / max(np.linalg.norm(w.ravel()), 1e-300))
        n_org, n_tucker = count_params(dense_layer.spec, ranks[layer.layer_id])
        report[layer.layer_id] = {
            "ranks": [ranks[layer.layer_id].r1, ranks[layer.layer_id].r2],
            "relative_error": rel,
            "params_dense": n_org,
            "params_factorized": n_tucker,
        }
    _emit(
        {
            "layers": report,
            "params_total_dense": net.param_count(),
            "params_total_factorized": fac.param_count(),
            "out": str(args.out),
        },
        args.report,
    )
    return 0


def _cmd_search(args) -> int:
    out_dir = args.out or os.environ.get("TUCKSEARCH_OUT")
    if not out_dir:
        raise ValueError("--out directory required (or set TUCKSEARCH_OUT)")
    out_dir = Path(out_dir)
    net, records = modelio.load_model(args.model)
    specs = conv_specs(records)
    plan = RankSpacePlan.from_json(Path(args.plan).read_text())
    table, dense_cost = _resolve_table(args, records, specs)
    if args.budget is not None:
        budget = args.budget
    elif dense_cost is not None:
        budget = args.budget_fraction * dense_cost
    else:
        full = sum(lookup(table, s.layer_id, RankPair(s.out_channels, s.in_channels)) for s in specs)
        budget = args.budget_fraction * full
    inputs, labels = _load_dataset(args)
    config = SearchConfig(
        alpha=plan.alpha,
        budget=budget,
        eta=args.eta,
        theta=args.theta,
        lam=getattr(args, "lambda"),
        epochs=args.epochs,
        weight_lr=args.weight_lr,
        prob_lr=args.prob_lr,
        grad_clip=args.grad_clip,
        seed=args.seed,
        validation_fraction=args.validation_fraction,
        batch_size=args.batch_size,
        momentum=args.momentum,
        weight_decay=args.weight_decay,
        lr_decay=args.lr_decay,
        lr_decay_period=args.lr_decay_period,
        refine_iters=args.refine_iters,
    )
    result = run_search(
        net,
        plan,
        table,
        inputs,
        labels,
        config,
        out_dir=out_dir,
        resume_from=args.resume,
        netspec_text=netspec_to_text(records),
        plan_text=plan.to_json(),
    )
    modelio.save_ranks_csv(result.selection.ranks, out_dir / "ranks.csv")
    chosen = selected_net(result.supernet, result.selection)
    modelio.save_model(out_dir / "searched_model.ckpt", chosen, records)
    _emit(
        {
            "ranks": {k: [v.r1, v.r2] for k, v in sorted(result.selection.ranks.items())},
            "total_cost": result.selection.total_cost,
            "budget": budget,
            "epochs_run": len(result.metrics),
            "out": str(out_dir),
        },
        None,
    )
    return 0


def _cmd_finetune(args) -> int:
    net, records = modelio.load_model(args.model)
    inputs, labels = _load_dataset(args)
    history = fine_tune(
        net,
        inputs,
        labels,
        epochs=args.epochs,
        lr=args.lr,
        seed=args.seed,
        batch_size=args.batch_size,
        momentum=args.momentum,
        weight_decay=args.weight_decay,
        lr_decay=args.lr_decay,
        lr_decay_period=args.lr_decay_period,
        validation_fraction=args.validation_fraction,
        grad_clip=args.grad_clip,
    )
    modelio.save_model(args.out, net, records)
    if args.history:
        with open(args.history, "w") as fh:
            for row in history:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    _emit({"final": history[-1] if history else {}, "out": str(args.out)}, None)
    return 0


def _cmd_eval(args) -> int:
    net, _ = modelio.load_model(args.model)
    inputs, labels = _load_dataset(args)
    loss, acc = evaluate(net, inputs, labels, batch_size=args.batch_size)
    _emit({"loss": loss, "top1": acc, "samples": int(inputs.shape[0])}, args.out)
    return 0


def _cmd_report(args) -> int:
    net, records = modelio.load_model(args.model)
    ranks = modelio.load_ranks_csv(args.ranks)
    specs = {s.layer_id: s for s in conv_specs(records, searched_only=False)}
    input_shape = (args.channels,) + _parse_hw(args.hw)
    sizes = _conv_input_sizes(records, input_shape)
    table = load_latency_table(args.latency_table) if args.latency_table else None
    layers = {}
    dense_params = fac_params = dense_flops = fac_flops = 0
    dense_cost = fac_cost = 0.0
    for lid, pair in sorted(ranks.items()):
        if lid not in specs:
            raise DataFormatError(f"{args.ranks}: layer {lid!r} is not a conv layer of the model")
        spec = specs[lid]
        n_org, n_tucker = count_params(spec, pair)
        f_org = count_flops(spec, sizes[lid])
        f_tucker = count_flops(spec, sizes[lid], pair)
        row = {
            "ranks": [pair.r1, pair.r2],
            "params_dense": n_org,
            "params_factorized": n_tucker,
            "params_reduction_pct": 100.0 * (1.0 - n_tucker / n_org),
            "flops_dense": f_org,
            "flops_factorized": f_tucker,
            "flops_reduction_pct": 100.0 * (1.0 - f_tucker / f_org),
        }
        dense_params += n_org
        fac_params += n_tucker
        dense_flops += f_org
        fac_flops += f_tucker
        if table is not None:
            c_org = lookup(table, lid, RankPair(spec.out_channels, spec.in_channels))
            c_fac = lookup(table, lid, pair)
            row["cost_dense"] = c_org
            row["cost_factorized"] = c_fac
            row["cost_reduction_pct"] = 100.0 * (1.0 - c_fac / c_org)
            dense_cost += c_org
            fac_cost += c_fac
        layers[lid] = row
    totals = {
        "params_dense": dense_params,
        "params_factorized": fac_params,
        "params_reduction_pct": 100.0 * (1.0 - fac_params / dense_params),
        "flops_dense": dense_flops,
        "flops_factorized": fac_flops,
        "flops_reduction_pct": 100.0 * (1.0 - fac_flops / dense_flops),
    }
    if table is not None:
        totals["cost_dense"] = dense_cost
        totals["cost_factorized"] = fac_cost
        totals["cost_reduction_pct"] = 100.0 * (1.0 - fac_cost / dense_cost)
    _emit({"layers": layers, "totals": totals}, args.out)
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="tucksearch", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="INI file with default option values")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("plan", parents=[], help="enumerate candidate rank pairs per layer")
    p.add_argument("--net", required=True, help="network description CSV")
    p.add_argument("--alpha", type=float, required=True, help="target compression ratio (>1)")
    p.add_argument("--out", help="plan JSON path (stdout if omitted)")
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("decompose", help="factorize convolutions at fixed ranks")
    p.add_argument("--model", required=True, help="dense model checkpoint")
    p.add_argument("--ranks", required=True, help="ranks CSV (layer_id,r1,r2)")
    p.add_argument("--refine-iters", type=int, default=3)
    p.add_argument("--out", required=True, help="factorized model checkpoint path")
    p.add_argument("--report", help="write the JSON report here instead of stdout")
    p.set_defaults(func=_cmd_decompose)

    p = sub.add_parser("search", help="select per-layer ranks under a cost budget")
    p.add_argument("--model", required=True, help="pretrained dense model checkpoint")
    p.add_argument("--plan", required=True, help="plan JSON from the plan verb")
    p.add_argument("--latency-table", help="measured cost table CSV")
    p.add_argument(
        "--cost-model",
        choices=["flops", "plateau"],
        default="flops",
        help="synthetic table to use when no --latency-table is given",
    )
    p.add_argument("--budget", type=float, help="absolute cost budget")
    p.add_argument(
        "--budget-fraction",
        type=float,
        default=0.5,
        help="budget as a fraction of the dense network's cost under a"
        " synthetic cost model (with --latency-table, where the dense cost"
        " is unknown, the fraction is of the full-rank table cost instead)",
    )
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--theta", type=float, default=0.6)
    p.add_argument("--lambda", type=float, default=0.1, dest="lambda")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--weight-lr", type=float, default=1e-3)
    p.add_argument("--prob-lr", type=float, default=3e-3)
    p.add_argument("--grad-clip", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--validation-fraction", type=float, default=0.2)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--lr-decay", type=float, default=0.2)
    p.add_argument("--lr-decay-period", type=int, default=55)
    p.add_argument("--refine-iters", type=int, default=2)
    p.add_argument("--resume", help="search_state.ckpt to continue from")
    p.add_argument("--out", help="output directory (default: $TUCKSEARCH_OUT)")
    _add_data_args(p)
    p.set_defaults(func=_cmd_search)

    p = sub.add_parser("finetune", help="train a factorized model on labels only")
    p.add_argument("--model", required=True)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.02)
    p.add_argument("--grad-clip", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--validation-fraction", type=float, default=0.2)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--lr-decay", type=float, default=0.2)
    p.add_argument("--lr-decay-period", type=int, default=55)
    p.add_argument("--history", help="write per-epoch JSON lines here")
    p.add_argument("--out", required=True, help="output model checkpoint")
    _add_data_args(p)
    p.set_defaults(func=_cmd_finetune)

    p = sub.add_parser("eval", help="loss and top-1 accuracy of a model")
    p.add_argument("--model", required=True)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--out", help="write metrics JSON here instead of stdout")
    _add_data_args(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("report", help="dense vs factorized params, flops, cost")
    p.add_argument("--model", required=True, help="dense model checkpoint")
    p.add_argument("--ranks", required=True, help="ranks CSV")
    p.add_argument("--latency-table", help="include measured costs from this table")
    p.add_argument("--channels", type=int, default=3)
    p.add_argument("--hw", default="12x12", help="model input size, HxW")
    p.add_argument("--out", help="write report JSON here instead of stdout")
    p.set_defaults(func=_cmd_report)

    return parser


def _apply_config(argv: list[str], parser: _Parser) -> list[str]:
    """Prepend option defaults from an INI file so explicit flags win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return argv
    ini = configparser.ConfigParser()
    read = ini.read(known.config)
    if not read:
        raise DataFormatError(f"{known.config}: cannot read config file")
    verb = next((a for a in argv if not a.startswith("-") and a != known.config), None)
    if verb is None:
        return argv
    items: dict[str, str] = {}
    for section in ("tucksearch", verb):
        if ini.has_section(section):
            items.update(ini[section])
    sub_actions = [a for a in parser._actions if isinstance(a, argparse._SubParsersAction)]
    known_flags = set()
    if sub_actions and verb in sub_actions[0].choices:
        known_flags = set(sub_actions[0].choices[verb]._option_string_actions)
    extra: list[str] = []
    for key, value in items.items():
        flag = "--" + key.replace("_", "-")
        if flag in known_flags:
            extra.extend([flag, value])
    idx = argv.index(verb)
    return argv[: idx + 1] + extra + argv[idx + 1 :]


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        argv = _apply_config(argv, parser)
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    except (DataFormatError, CostResolutionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
