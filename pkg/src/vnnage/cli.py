"""Command-line front end: simulate -> train -> predict/delta-age ->
explain -> report.

Exit codes: 0 success, 2 input or usage error, 3 numeric failure.
Human-readable summaries go to stdout; machine-readable results go to
the requested output files only.
"""

from __future__ import annotations

import os

# Optional THREADS override must land before numpy is first imported.
if "THREADS" in os.environ:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, os.environ["THREADS"])

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import figures, io, pipeline, synth, training
from .linalg import ConvergenceError

log = logging.getLogger("vnnage")

DELTA_REPORT_NAME = "delta_age_report.json"
REGION_TABLE_JSON = "region_table.json"
REGION_TABLE_CSV = "region_table.csv"
EXPLAIN_REPORT_NAME = "explainability_report.json"
EIGEN_TABLE_CSV = "eigen_table.csv"


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vnnage",
        description="Covariance-network brain-age-gap estimation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic cohort CSV")
    p.add_argument("--config", type=Path, help="synth config JSON (default: built-in)")
    p.add_argument("--out", type=Path, required=True, help="cohort CSV to write")
    p.add_argument("--truth-out", type=Path, help="ground-truth JSON to write")
    _add_common(p)

    p = sub.add_parser("train", help="train a model on the HC rows of a cohort")
    p.add_argument("--cohort", type=Path, required=True)
    p.add_argument("--train-config", type=Path, help="training config JSON")
    p.add_argument("--out-model", type=Path, required=True)
    p.add_argument("--out-report", type=Path, help="training report JSON")
    p.add_argument("--max-epochs", type=int, default=None, help="override epoch cap")
    _add_common(p)

    p = sub.add_parser("predict", help="raw (uncorrected) age predictions")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--cohort", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="predictions CSV")
    _add_common(p)

    for name, help_text in (
        ("delta-age", "bias-corrected delta-age and regional characterization"),
        ("explain", "eigenvector-level explainability of the delta-age gap"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--model", type=Path, required=True)
        p.add_argument("--hc", type=Path, required=True, help="healthy-control cohort CSV")
        p.add_argument("--disease", type=Path, required=True, help="disease cohort CSV")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument(
            "--alpha",
            type=float,
            default=None,
            help="significance level (regions: adjusted p; eigenvectors: raw p)",
        )
        _add_common(p)

    p = sub.add_parser("report", help="render figures from exported reports")
    p.add_argument(
        "--results",
        type=Path,
        required=True,
        help="directory holding delta-age/explain outputs",
    )
    p.add_argument("--out-dir", type=Path, help="figure directory (default: results)")
    _add_common(p)

    return parser


def _load_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise io.SchemaError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise io.SchemaError(f"{path}: not valid JSON ({exc})") from None


def _cmd_simulate(args) -> int:
    if args.config is not None:
        config = synth.SynthConfig.from_dict(_load_json(args.config))
    else:
        config = synth.default_acceptance_config()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    cohort, truth = synth.generate_cohort(config)
    io.save_cohort_csv(cohort, args.out)
    if args.truth_out is not None:
        io.export_json(truth.to_dict(), args.truth_out)
    print(
        f"wrote {cohort.n_subjects} subjects "
        f"({config.n_hc} HC + {config.n_disease} {config.disease_label}) to {args.out}"
    )
    return 0


def _cmd_train(args) -> int:
    cohort = io.load_cohort_csv(args.cohort)
    hc = cohort.select_group(io.HC_GROUP)
    if hc.n_subjects == 0:
        print(f"error: {args.cohort} has no rows with group={io.HC_GROUP}", file=sys.stderr)
        return 2
    if args.train_config is not None:
        config = training.TrainConfig.from_dict(_load_json(args.train_config))
    else:
        config = training.TrainConfig()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.max_epochs is not None:
        config = replace(config, max_epochs=args.max_epochs)

    log.info("training on %d HC subjects for up to %d epochs", hc.n_subjects, config.max_epochs)
    model, report = training.train(hc, config)
    io.save_model(model, args.out_model)
    if args.out_report is not None:
        io.export_json(report.to_dict(), args.out_report)
    print(
        f"model: {len(model.layers)} layers, {model.n_parameters} parameters -> {args.out_model}"
    )
    if report.best_val_mae is not None:
        r_text = f"{report.test_pearson_r:.3f}" if report.test_pearson_r is not None else "undefined"
        print(
            f"selected epoch {report.selected_epoch}: "
            f"val MAE {report.best_val_mae:.3f} y, test MAE "
            f"{report.test_mae:.3f} y, test Pearson r {r_text}"
        )
    return 0


def _cmd_predict(args) -> int:
    from .vnn import forward_batch

    model = io.load_model(args.model)
    cohort = io.load_cohort_csv(args.cohort)
    if tuple(cohort.region_labels) != model.region_labels:
        print("error: model and cohort region schemas differ", file=sys.stderr)
        return 2
    predictions, _ = forward_batch(model, cohort.features)
    lines = ["subject_id,age,group,raw_prediction"]
    for i in range(cohort.n_subjects):
        lines.append(
            f"{cohort.subject_ids[i]},{cohort.ages[i]!r},"
            f"{cohort.groups[i]},{predictions[i]:.6f}"
        )
    args.out.write_text("\n".join(lines) + "\n")
    print(f"wrote {cohort.n_subjects} predictions to {args.out}")
    return 0


def _split_roles(args) -> tuple:
    """HC rows come from --hc; --disease uses its non-HC rows, or all
    rows when the file holds only healthy controls."""
    model = io.load_model(args.model)
    hc_all = io.load_cohort_csv(args.hc)
    hc = hc_all.select_group(io.HC_GROUP)
    if hc.n_subjects == 0:
        raise io.SchemaError(f"{args.hc} has no rows with group={io.HC_GROUP}")
    disease_all = io.load_cohort_csv(args.disease)
    disease = disease_all.exclude_group(io.HC_GROUP)
    if disease.n_subjects == 0:
        disease = disease_all
    if disease.n_subjects == 0:
        raise io.SchemaError(f"{args.disease} contains no subjects")
    return model, hc, disease


def _cmd_delta_age(args) -> int:
    model, hc, disease = _split_roles(args)
    alpha = args.alpha if args.alpha is not None else pipeline.DEFAULT_REGION_ALPHA
    delta_report, region_table, _ = pipeline.run_pipeline(model, hc, disease, alpha=alpha)
    args.out.mkdir(parents=True, exist_ok=True)
    io.export_json(delta_report.to_dict(), args.out / DELTA_REPORT_NAME)
    io.export_json(region_table.to_dict(), args.out / REGION_TABLE_JSON)
    io.export_region_table_csv(region_table, args.out / REGION_TABLE_CSV)
    for name, stats in (("HC", delta_report.hc_stats), ("disease", delta_report.disease_stats)):
        print(f"delta-age {name}: {stats.mean:.2f} +/- {stats.std:.2f} years (n={stats.n})")
    flagged = region_table.significant_labels()
    print(f"significant regions (adjusted p < {alpha:g}, disease > HC): {len(flagged)}")
    return 0


def _cmd_explain(args) -> int:
    model, hc, disease = _split_roles(args)
    alpha = args.alpha if args.alpha is not None else pipeline.DEFAULT_EIGEN_ALPHA
    delta_report, _, explain_report = pipeline.run_pipeline(
        model, hc, disease, eigen_alpha=alpha
    )
    args.out.mkdir(parents=True, exist_ok=True)
    io.export_json(explain_report.to_dict(), args.out / EXPLAIN_REPORT_NAME)
    io.export_eigen_table_csv(explain_report, args.out / EIGEN_TABLE_CSV)
    for name, stats in (("HC", delta_report.hc_stats), ("disease", delta_report.disease_stats)):
        print(f"delta-age {name}: {stats.mean:.2f} +/- {stats.std:.2f} years (n={stats.n})")
    print(f"flagged eigenvectors (raw p <= {alpha:g}): {explain_report.flagged_indices()}")
    return 0


def _cmd_report(args) -> int:
    results = args.results
    out_dir = args.out_dir if args.out_dir is not None else results
    out_dir.mkdir(parents=True, exist_ok=True)
    rendered = []

    delta_path = results / DELTA_REPORT_NAME
    if delta_path.exists():
        payload = _load_json(delta_path)
        figures.plot_delta_age(payload, out_dir / "delta_age_distribution.png")
        figures.write_group_summary_csv(payload, out_dir / "group_summary.csv")
        rendered += ["delta_age_distribution.png", "group_summary.csv"]
    region_path = results / REGION_TABLE_JSON
    if region_path.exists():
        figures.plot_region_f_values(_load_json(region_path), out_dir / "region_f_values.png")
        rendered.append("region_f_values.png")
    explain_path = results / EXPLAIN_REPORT_NAME
    if explain_path.exists():
        figures.plot_eigen_f_values(_load_json(explain_path), out_dir / "eigen_f_values.png")
        rendered.append("eigen_f_values.png")

    if not rendered:
        print(f"error: no report files found under {results}", file=sys.stderr)
        return 2
    print(f"rendered {', '.join(rendered)} in {out_dir}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "delta-age": _cmd_delta_age,
    "explain": _cmd_explain,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse handles usage errors and --help
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return _COMMANDS[args.command](args)
    except ConvergenceError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (io.SchemaError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
