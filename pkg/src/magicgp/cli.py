"""Command-line interface.

Subcommands: simulate, fit, predict, impute, benchmark, loocv. Exit codes:
0 success, 1 usage/configuration error, 2 data error, 3 numerical failure.
Seed precedence: --seed flag, then the MAGIC_SEED environment variable, then
the config file, then the default.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .baselines import fit_mtgp, fit_sgp
from .errors import EXIT_OK, EXIT_USAGE, ConfigError, MagicError
from .evaluate import METHOD_NAMES, EvalProtocol, run_benchmark, run_loocv
from .io import (
    RunConfig,
    ingest_long_csv,
    load_model,
    save_model,
    write_imputations,
    write_labels_csv,
    write_predictions,
    write_q_history,
    write_report,
    write_series_csv,
)
from .model import fit
from .predict import ClassPrior, MagicModel, PredictionResult, impute_new, predict_sample
from .simulate import apply_missingness, generate_dataset


class _Parser(argparse.ArgumentParser):
    """argparse maps usage errors to status 2; this CLI reserves 2 for data
    errors, so remap to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="magicgp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="path to a key=value config file")
        p.add_argument("--seed", type=int, help="seed (overrides MAGIC_SEED and config)")

    p = sub.add_parser("simulate", help="generate a synthetic labeled dataset")
    common(p)
    p.add_argument("--alpha", type=float, help="missing ratio; omit to keep curves complete")
    p.add_argument("--out-series", required=True, help="output series CSV")
    p.add_argument("--out-labels", required=True, help="output labels CSV")
    p.add_argument("--out-truth", help="output CSV with the complete curves")

    p = sub.add_parser("fit", help="fit a model and write a checkpoint")
    common(p)
    p.add_argument("--series", required=True, help="training series CSV")
    p.add_argument("--labels", required=True, help="training labels CSV")
    p.add_argument("--method", choices=METHOD_NAMES, help="model to fit")
    p.add_argument("--out", required=True, help="output checkpoint path")
    p.add_argument("--history", help="objective trace CSV (default <out>.history.csv)")

    p = sub.add_parser("predict", help="classify new samples with a fitted model")
    common(p)
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--series", required=True, help="input series CSV")
    p.add_argument("--out", required=True, help="output predictions CSV")

    p = sub.add_parser("impute", help="complete new samples on the model grid")
    common(p)
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--series", required=True, help="input series CSV")
    p.add_argument("--out", required=True, help="output imputations CSV")
    p.add_argument(
        "--class-choice", choices=("map", "0", "1"), default="map",
        help="class posterior used by the hierarchical model (default: MAP)",
    )

    p = sub.add_parser("benchmark", help="repeated-split simulation benchmark")
    common(p)
    p.add_argument("--methods", "--method", dest="methods",
                   help="comma list of methods or 'all'")
    p.add_argument("--alpha", help="comma list of missing ratios")
    p.add_argument("--reps", type=int, help="number of repetitions")
    p.add_argument("--out", required=True, help="output report file")

    p = sub.add_parser("loocv", help="leave-one-out evaluation on a CSV dataset")
    common(p)
    p.add_argument("--series", required=True, help="series CSV")
    p.add_argument("--labels", required=True, help="labels CSV")
    p.add_argument("--method", choices=METHOD_NAMES, help="method to evaluate")
    p.add_argument("--out", required=True, help="output report file")

    return parser


def _load_config(args) -> RunConfig:
    return RunConfig.from_file(args.config) if args.config else RunConfig()


def _resolve_seed(args, config: RunConfig) -> int:
    if args.seed is not None:
        return int(args.seed)
    env = os.environ.get("MAGIC_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"MAGIC_SEED must be an integer, got {env!r}") from None
    return config.seed


def _single_method(args, config: RunConfig) -> str:
    method = args.method if getattr(args, "method", None) else config.method
    if method not in METHOD_NAMES:
        raise ConfigError(
            f"this command needs one concrete method from {METHOD_NAMES}, got {method!r}"
        )
    return method


def _cmd_simulate(args) -> int:
    config = _load_config(args)
    seed = _resolve_seed(args, config)
    rng = np.random.default_rng(seed)
    samples, _truth = generate_dataset(config.sim_config(seed), rng=rng)
    out = samples
    if args.alpha is not None:
        out = [apply_missingness(s, args.alpha, rng) for s in samples]
    write_series_csv(out, args.out_series)
    write_labels_csv(samples, args.out_labels)
    if args.out_truth:
        write_series_csv(samples, args.out_truth)
    print(
        f"simulate: wrote {len(out)} samples to {args.out_series} (seed {seed})",
        file=sys.stderr,
    )
    return EXIT_OK


def _cmd_fit(args) -> int:
    config = _load_config(args)
    method = _single_method(args, config)
    grid = config.grid()
    basis = config.basis()
    samples = ingest_long_csv(args.series, args.labels, grid=grid)
    settings = config.method_settings()
    history = []
    if method == "magic":
        state = fit(
            samples, grid, basis=basis, lam=settings.lam,
            roughness_weight=settings.roughness_weight,
            epsilon=settings.epsilon, max_iters=settings.max_iters, bounds=settings.bounds,
        )
        labels = [s.label for s in samples]
        model = MagicModel.from_state(state, grid, basis, prior=ClassPrior.from_labels(labels))
        history = state.q_history
        for flag in state.flags:
            print(f"fit: {flag}", file=sys.stderr)
    elif method == "sgp":
        model = fit_sgp(
            samples, grid, basis, settings.lam, bounds=settings.bounds,
            share_hyperparams=settings.sgp_share_hyperparams,
        )
    else:
        model = fit_mtgp(
            samples, grid, basis, settings.lam,
            roughness_weight=settings.mtgp_roughness_weight, bounds=settings.bounds,
            epsilon=settings.epsilon, max_iters=settings.max_iters,
        )
        history = model.q_history
    save_model(model, args.out)
    write_q_history(history, args.history or f"{args.out}.history.csv")
    print(f"fit: wrote {method} checkpoint to {args.out}", file=sys.stderr)
    return EXIT_OK


def _predictions_for(model, samples):
    if isinstance(model, MagicModel):
        return [predict_sample(model, s) for s in samples]
    results = []
    for s in samples:
        curve, variance = model.impute(s)
        prob = model.predict_proba_sample(s)
        results.append(
            PredictionResult(
                sample_id=s.id,
                assigned_class=1 if prob > 0.5 else 0,
                map_log_scores=(float("nan"), float("nan")),
                probability=prob,
                curve=curve,
                variance=variance,
            )
        )
    return results


def _cmd_predict(args) -> int:
    model = load_model(args.model)
    samples = ingest_long_csv(args.series, grid=model.grid)
    results = _predictions_for(model, samples)
    write_predictions(results, args.out)
    print(f"predict: wrote {len(results)} rows to {args.out}", file=sys.stderr)
    return EXIT_OK


def _cmd_impute(args) -> int:
    model = load_model(args.model)
    samples = ingest_long_csv(args.series, grid=model.grid)
    entries = []
    if isinstance(model, MagicModel) and args.class_choice in ("0", "1"):
        z = int(args.class_choice)
        for s in samples:
            curve, variance = impute_new(s, z, model)
            entries.append((s.id, curve, variance))
    else:
        for r in _predictions_for(model, samples):
            entries.append((r.sample_id, r.curve, r.variance))
    write_imputations(entries, model.grid, args.out)
    print(f"impute: wrote {len(entries)} curves to {args.out}", file=sys.stderr)
    return EXIT_OK


def _cmd_benchmark(args) -> int:
    config = _load_config(args)
    seed = _resolve_seed(args, config)
    if args.methods:
        text = args.methods.strip().lower()
        methods = list(METHOD_NAMES) if text == "all" else [m.strip() for m in text.split(",")]
    else:
        methods = config.methods()
    for m in methods:
        if m not in METHOD_NAMES:
            raise ConfigError(f"unknown method {m!r}; choose from {METHOD_NAMES} or 'all'")
    alphas = (
        tuple(float(a) for a in args.alpha.split(",")) if args.alpha else config.alphas
    )
    reps = args.reps if args.reps is not None else config.repetitions
    protocol = EvalProtocol(
        kind="repeated-split",
        train_fraction=config.train_fraction,
        repetitions=reps,
        alphas=alphas,
    )
    report = run_benchmark(
        protocol, methods, config.sim_config(seed), config.method_settings(), seed=seed
    )
    write_report(report, args.out)
    for row in report.rows:
        print(
            f"benchmark: {row.method} alpha={row.alpha:g} "
            f"auc={row.auc_mean:.4f}±{row.auc_sd:.4f} "
            f"mse={row.mse_mean:.4f}±{row.mse_sd:.4f} "
            f"reps={row.n_reps} failures={row.n_failures}",
            file=sys.stderr,
        )
    print(f"benchmark: wrote report to {args.out}", file=sys.stderr)
    return EXIT_OK


def _cmd_loocv(args) -> int:
    config = _load_config(args)
    seed = _resolve_seed(args, config)
    method = _single_method(args, config)
    grid = config.grid()
    samples = ingest_long_csv(args.series, args.labels, grid=grid)
    report = run_loocv(samples, grid, method, config.method_settings(), seed=seed)
    write_report(report, args.out)
    row = report.rows[0]
    print(
        f"loocv: {row.method} auc={row.auc_mean:.4f} "
        f"mse={row.mse_mean:.4f}±{row.mse_sd:.4f} folds={row.n_reps} "
        f"failures={row.n_failures}",
        file=sys.stderr,
    )
    print(f"loocv: wrote report to {args.out}", file=sys.stderr)
    return EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "predict": _cmd_predict,
    "impute": _cmd_impute,
    "benchmark": _cmd_benchmark,
    "loocv": _cmd_loocv,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except MagicError as exc:
        print(f"magicgp {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except np.linalg.LinAlgError as exc:
        print(f"magicgp {args.command}: numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
