"""Build a synthetic per-layer cost table for a network and save it as CSV.

Use --kind flops for a table proportional to factorized flops, or
--kind plateau for a stepped table where nearby ranks share one cost level
(closer to how real kernels behave).
"""

import argparse
import sys

from tucksearch.costmodel import flops_proxy_table, save_latency_table, synthetic_plateau_table
from tucksearch.netspec import conv_specs, load_netspec, trace_shapes
from tucksearch.rankspace import CompressionTarget, build_rank_space


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--net", required=True, help="network description CSV")
    ap.add_argument("--channels", type=int, default=3)
    ap.add_argument("--hw", default="12x12", help="network input size, HxW")
    ap.add_argument("--kind", choices=["flops", "plateau"], default="plateau")
    ap.add_argument("--alpha", type=float, help="flops tables: restrict to this plan's candidates")
    ap.add_argument("--step", type=int, default=4, help="plateau tables: rank grid step")
    ap.add_argument("--plateau", type=int, default=8, help="plateau tables: flat patch width")
    ap.add_argument("--out", required=True)
    args = ap.parse_args(argv)

    records = load_netspec(args.net)
    specs = conv_specs(records)
    h, w = (int(v) for v in args.hw.lower().split("x"))
    sizes = {}
    shape = (args.channels, h, w)
    for (lid, out), rec in zip(trace_shapes(records, shape), records):
        if rec.kind == "conv":
            sizes[lid] = (shape[1], shape[2])
        shape = out

    if args.kind == "flops":
        candidates = None
        if args.alpha:
            plan = build_rank_space(specs, CompressionTarget(args.alpha))
            candidates = {lp.layer_id: list(lp.candidates) for lp in plan.layers}
        table = flops_proxy_table(specs, sizes, candidates)
    else:
        table = synthetic_plateau_table(specs, sizes, step=args.step, plateau=args.plateau)
    save_latency_table(table, args.out)
    print(f"wrote {len(table.entries)} entries for {len(specs)} layers to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
