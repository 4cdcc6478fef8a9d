"""Train every approach on one synthetic recording and print the summary.

Runs the within-subject protocol for the classical baseline, the plain
backbone, and all five hybrid variants, then writes the report CSVs and
prints a compact table with significance stars against the backbone.
"""

from argparse import ArgumentParser

from cspnet.data import SynthSpec, default_class_covariances, synthesize_dataset
from cspnet.harness import (
    ApproachSpec,
    TrainConfig,
    export_report,
    run_within_subject,
    significance_stars,
)

METHODS = (
    "csp-lr",
    "backbone",
    "cspnet1-fix",
    "cspnet1-upd",
    "cspnet1-rad",
    "cspnet2-fix",
    "cspnet2-upd",
)


def get_args():
    parser = ArgumentParser(description=__doc__)
    parser.add_argument("--channels", type=int, default=8)
    parser.add_argument("--classes", type=int, default=2)
    parser.add_argument("--trials", type=int, default=60,
                        help="trials per class per subject")
    parser.add_argument("--samples", type=int, default=256)
    parser.add_argument("--subjects", type=int, default=1)
    parser.add_argument("--fs", type=float, default=32.0)
    parser.add_argument("--noise", type=float, default=1.0)
    parser.add_argument("--contrast", type=float, default=2.0)
    parser.add_argument("--backbone", default="eegnet")
    parser.add_argument("--f", type=int, default=8)
    parser.add_argument("--epochs", type=int, default=200)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="results/synth_benchmark")
    return parser.parse_args()


def main():
    args = get_args()
    spec = SynthSpec(
        n_channels=args.channels,
        n_samples=args.samples,
        n_classes=args.classes,
        class_covariances=default_class_covariances(
            args.channels, args.classes, args.contrast
        ),
        trials_per_class=args.trials,
        noise_scale=args.noise,
        n_subjects=args.subjects,
        fs=args.fs,
    )
    dataset = synthesize_dataset(spec, seed=args.seed)
    cfg = TrainConfig(max_epochs=args.epochs, eval_every=args.epochs,
                      seed=args.seed)
    records = []
    for method in METHODS:
        approach = ApproachSpec(method, backbone=args.backbone, f=args.f)
        print(f"running {approach.label} ...", flush=True)
        records.extend(
            run_within_subject(dataset, approach, repeats=args.repeats,
                               base_seed=args.seed, cfg=cfg)
        )
    report = export_report(records, args.out)
    print(f"\n{'approach':<24} {'accuracy':<16} vs {report.baseline}")
    for label in report.approaches:
        mean = report.average_mean[label]
        std = report.average_std[label]
        stars = ""
        if label in report.p_adj:
            stars = significance_stars(report.p_adj[label])
        print(f"{label:<24} {mean:.4f}±{std:.4f}  {stars}")
    print(f"\nwrote {args.out}")


if __name__ == "__main__":
    main()
