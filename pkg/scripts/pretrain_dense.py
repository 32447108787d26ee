"""Train a dense reference model and save it as a checkpoint.

Either pass an existing network description with --net, or let the script
build a small conv stack with --conv-channels.
"""

import argparse
import sys

import numpy as np

from tucksearch.data import load_csv_dataset, load_idx_dataset, synthetic_dataset
from tucksearch.modelio import save_model
from tucksearch.net import build_dense_net
from tucksearch.netspec import load_netspec, save_netspec, simple_cnn
from tucksearch.search import fine_tune


def load_data(args):
    if args.data:
        return load_csv_dataset(args.data, channels=args.channels)
    if args.images:
        return load_idx_dataset(args.images, args.labels)
    h, w = (int(v) for v in args.hw.lower().split("x"))
    return synthetic_dataset(
        args.synthetic, args.classes, args.channels, (h, w),
        seed=args.data_seed, noise=args.noise,
    )


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--net", help="network description CSV to train")
    ap.add_argument("--conv-channels", default="16,32,64,64", help="used when --net is absent")
    ap.add_argument("--data", help="CSV dataset")
    ap.add_argument("--images")
    ap.add_argument("--labels")
    ap.add_argument("--synthetic", type=int, default=10000)
    ap.add_argument("--classes", type=int, default=10)
    ap.add_argument("--channels", type=int, default=3)
    ap.add_argument("--hw", default="12x12")
    ap.add_argument("--data-seed", type=int, default=0)
    ap.add_argument("--noise", type=float, default=0.25)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--lr", type=float, default=0.05)
    ap.add_argument("--lr-decay", type=float, default=0.2)
    ap.add_argument("--lr-decay-period", type=int, default=55)
    ap.add_argument("--batch-size", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", required=True, help="model checkpoint path")
    ap.add_argument("--save-net", help="also write the network description CSV here")
    args = ap.parse_args(argv)

    inputs, labels = load_data(args)
    if args.net:
        records = load_netspec(args.net)
    else:
        channels = [int(v) for v in args.conv_channels.split(",")]
        records = simple_cnn(
            inputs.shape[1], (inputs.shape[2], inputs.shape[3]), channels, args.classes
        )
    net = build_dense_net(records, np.random.default_rng(args.seed))
    history = fine_tune(
        net, inputs, labels, epochs=args.epochs, lr=args.lr,
        seed=args.seed, batch_size=args.batch_size,
        lr_decay=args.lr_decay, lr_decay_period=args.lr_decay_period,
    )
    for row in history:
        print(
            f"epoch {row['epoch']:3d} lr {row['lr']:.4f} train_ce {row['train_ce']:.4f} "
            f"val_ce {row.get('val_ce', float('nan')):.4f} val_acc {row.get('val_acc', float('nan')):.4f}"
        )
    save_model(args.out, net, records)
    if args.save_net:
        save_netspec(records, args.save_net)
    print("saved", args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
