"""Generate a synthetic classification dataset and write it to disk.

Writes either one CSV (label,pixel0,...) or an IDX image/label pair.
"""

import argparse
import sys

from tucksearch.data import save_csv_dataset, synthetic_dataset, write_idx


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=10000)
    ap.add_argument("--classes", type=int, default=10)
    ap.add_argument("--channels", type=int, default=3)
    ap.add_argument("--hw", default="12x12")
    ap.add_argument("--noise", type=float, default=0.25)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv", help="write one CSV file here")
    ap.add_argument("--images", help="write IDX images here (with --labels)")
    ap.add_argument("--labels", help="write IDX labels here")
    args = ap.parse_args(argv)

    h, w = (int(v) for v in args.hw.lower().split("x"))
    inputs, labels = synthetic_dataset(
        args.samples, args.classes, args.channels, (h, w), seed=args.seed, noise=args.noise
    )
    wrote = []
    if args.csv:
        save_csv_dataset(inputs, labels, args.csv)
        wrote.append(args.csv)
    if args.images:
        if not args.labels:
            ap.error("--images requires --labels")
        write_idx(inputs.astype("float64"), args.images)
        write_idx(labels.astype("int64"), args.labels)
        wrote.extend([args.images, args.labels])
    if not wrote:
        ap.error("nothing to write: pass --csv or --images/--labels")
    print(f"wrote {args.samples} samples ({args.channels}x{h}x{w}, {args.classes} classes) to", *wrote)
    return 0


if __name__ == "__main__":
    sys.exit(main())
