"""Training-ratio or filter-count sweep on a synthetic recording.

Reproduces the data-efficiency experiment: how each approach degrades as
the training split shrinks (--axis ratio), or how accuracy depends on the
number of spatial filters (--axis f). Prints one grid row per approach
and writes the same grid as CSV.
"""

import csv
from argparse import ArgumentParser
from pathlib import Path

import numpy as np

from cspnet.data import SynthSpec, default_class_covariances, synthesize_dataset
from cspnet.harness import (
    FILTER_GRID,
    RATIO_GRID,
    ApproachSpec,
    TrainConfig,
    sweep_filter_count,
    sweep_training_ratio,
)


def get_args():
    parser = ArgumentParser(description=__doc__)
    parser.add_argument("--axis", choices=("ratio", "f"), default="ratio")
    parser.add_argument("--values",
                        help="comma-separated grid, e.g. 0.1,0.5,1.0")
    parser.add_argument("--approaches",
                        default="csp-lr,backbone,cspnet1-fix")
    parser.add_argument("--channels", type=int, default=8)
    parser.add_argument("--trials", type=int, default=100,
                        help="trials per class per subject")
    parser.add_argument("--samples", type=int, default=256)
    parser.add_argument("--fs", type=float, default=32.0)
    parser.add_argument("--noise", type=float, default=1.5)
    parser.add_argument("--contrast", type=float, default=2.0)
    parser.add_argument("--backbone", default="eegnet")
    parser.add_argument("--f", type=int, default=8)
    parser.add_argument("--epochs", type=int, default=150)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="results/sweep")
    return parser.parse_args()


def cell_text(cell) -> str:
    if cell.status != "ok":
        return f"{cell.status}: {cell.reason}"
    accs = [r.final_test_acc for r in cell.records]
    return f"{np.mean(accs):.4f}±{np.std(accs):.4f}"


def main():
    args = get_args()
    if args.axis == "ratio":
        grid = RATIO_GRID
        cast, runner = float, sweep_training_ratio
    else:
        grid = FILTER_GRID
        cast, runner = int, sweep_filter_count
    if args.values:
        grid = tuple(cast(v) for v in args.values.split(","))
    spec = SynthSpec(
        n_channels=args.channels,
        n_samples=args.samples,
        n_classes=2,
        class_covariances=default_class_covariances(
            args.channels, 2, args.contrast
        ),
        trials_per_class=args.trials,
        noise_scale=args.noise,
        fs=args.fs,
    )
    dataset = synthesize_dataset(spec, seed=args.seed)
    cfg = TrainConfig(max_epochs=args.epochs, eval_every=args.epochs,
                      seed=args.seed)
    rows = []
    for method in args.approaches.split(","):
        approach = ApproachSpec(method.strip(), backbone=args.backbone,
                                f=args.f)
        print(f"sweeping {approach.label} ...", flush=True)
        kwargs = dict(repeats=args.repeats, base_seed=args.seed, cfg=cfg)
        if args.axis == "ratio":
            cells = runner(dataset, approach, ratios=grid, **kwargs)
        else:
            cells = runner(dataset, approach, f_values=grid, **kwargs)
        rows.append([approach.label] + [cell_text(cells[v]) for v in grid])

    header = ["approach"] + [f"{v:g}" for v in grid]
    widths = [max(len(str(r[i])) for r in [header] + rows)
              for i in range(len(header))]
    for row in [header] + rows:
        print("  ".join(str(v).ljust(w) for v, w in zip(row, widths)))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    target = out / f"sweep_{args.axis}.csv"
    with open(target, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    print(f"\nwrote {target}")


if __name__ == "__main__":
    main()
