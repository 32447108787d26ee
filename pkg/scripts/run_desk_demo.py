"""End-to-end demo at desk scale, driven through the command-line verbs:

synthetic data -> dense pretraining -> rank planning -> differentiable
search under a cost budget -> fine-tuning -> evaluation -> report.

Everything lands in --out; the console shows each command as it runs.
"""

import argparse
import shlex
import sys
from pathlib import Path

import pretrain_dense

from tucksearch.cli import main as tucksearch_main


def run_cli(argv):
    print("$ tucksearch " + " ".join(shlex.quote(a) for a in argv))
    code = tucksearch_main(argv)
    if code != 0:
        raise SystemExit(f"step failed with exit code {code}")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="desk_demo")
    ap.add_argument("--samples", type=int, default=4000)
    ap.add_argument("--noise", type=float, default=1.0)
    ap.add_argument("--conv-channels", default="16,32,64,64")
    ap.add_argument("--alpha", type=float, default=4.0)
    ap.add_argument("--budget-fraction", type=float, default=0.5)
    ap.add_argument("--pretrain-epochs", type=int, default=8)
    ap.add_argument("--search-epochs", type=int, default=8)
    ap.add_argument("--finetune-epochs", type=int, default=6)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = ["--synthetic", str(args.samples), "--classes", "10", "--channels", "3",
            "--hw", "12x12", "--noise", str(args.noise)]

    print("== dense pretraining ==")
    pretrain_dense.main(
        ["--synthetic", str(args.samples), "--noise", str(args.noise),
         "--conv-channels", args.conv_channels,
         "--epochs", str(args.pretrain_epochs), "--lr-decay-period", "4",
         "--seed", str(args.seed), "--out", str(out / "dense.ckpt"),
         "--save-net", str(out / "net.csv")]
    )

    print("== rank planning ==")
    run_cli(["plan", "--net", str(out / "net.csv"), "--alpha", str(args.alpha),
             "--out", str(out / "plan.json")])

    print("== rank search ==")
    run_cli(["search", "--model", str(out / "dense.ckpt"), "--plan", str(out / "plan.json"),
             "--cost-model", "plateau", "--budget-fraction", str(args.budget_fraction),
             "--epochs", str(args.search_epochs), "--seed", str(args.seed),
             "--prob-lr", "0.05", "--out", str(out / "search")] + data)

    print("== fine-tuning the selected model ==")
    run_cli(["finetune", "--model", str(out / "search" / "searched_model.ckpt"),
             "--epochs", str(args.finetune_epochs), "--lr-decay-period", "4",
             "--seed", str(args.seed),
             "--history", str(out / "finetune_history.jsonl"),
             "--out", str(out / "final.ckpt")] + data)

    print("== evaluation (dense vs compressed) ==")
    run_cli(["eval", "--model", str(out / "dense.ckpt")] + data)
    run_cli(["eval", "--model", str(out / "final.ckpt")] + data)

    print("== report ==")
    run_cli(["report", "--model", str(out / "dense.ckpt"),
             "--ranks", str(out / "search" / "ranks.csv"),
             "--channels", "3", "--hw", "12x12",
             "--out", str(out / "report.json")])
    print("report written to", out / "report.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
