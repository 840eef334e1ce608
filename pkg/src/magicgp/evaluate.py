"""Evaluation metrics and experiment harnesses.

AUC is the Mann-Whitney statistic (ties counted half). Imputation MSE is
the mean squared error over a designated index set (the masked points in
simulation; single held-out values in nested masking). The benchmark
harness repeats: generate, mask, stratified split, fit each method, score.
The LOOCV harness scores AUC by leave-one-sample-out and MSE by
leave-one-value-out within each held-out sample.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import rankdata

from .basis import open_uniform_basis
from .baselines import fit_mtgp, fit_sgp
from .errors import DataError, InvalidParameterError, MagicError, MetricError, NumericalError
from .model import DEFAULT_NUM_BASIS, HyperBounds, fit
from .predict import ClassPrior, MagicModel, predict_sample
from .series import SampleSeries
from .simulate import SimConfig, apply_missingness, generate_dataset
from .validation import check_grid, grid_indices

PROTOCOL_KINDS = ("repeated-split", "loocv", "nested-mask")
METHOD_NAMES = ("magic", "sgp", "mtgp")
DEFAULT_ALPHAS = (0.5, 0.6, 0.7, 0.8)


@dataclass(frozen=True)
class EvalProtocol:
    """Experiment protocol: split kind, train fraction, repetitions, ratios."""

    kind: str = "repeated-split"
    train_fraction: float = 0.7
    repetitions: int = 50
    alphas: tuple = DEFAULT_ALPHAS

    def __post_init__(self):
        if self.kind not in PROTOCOL_KINDS:
            raise InvalidParameterError(
                f"unknown protocol kind {self.kind!r}; choose one of {PROTOCOL_KINDS}"
            )
        if not (0.0 < self.train_fraction < 1.0):
            raise InvalidParameterError(
                f"train fraction must lie in (0, 1), got {self.train_fraction!r}"
            )
        if int(self.repetitions) < 1:
            raise InvalidParameterError(
                f"repetitions must be at least 1, got {self.repetitions!r}"
            )
        object.__setattr__(self, "repetitions", int(self.repetitions))
        alphas = tuple(float(a) for a in self.alphas)
        for a in alphas:
            if not (0.0 <= a < 1.0):
                raise InvalidParameterError(f"alpha must lie in [0, 1), got {a!r}")
        object.__setattr__(self, "alphas", alphas)


@dataclass(frozen=True)
class BenchmarkRow:
    """One aggregated (method, alpha) result."""

    method: str
    alpha: float
    auc_mean: float
    auc_sd: float
    mse_mean: float
    mse_sd: float
    n_reps: int
    n_failures: int

    def __post_init__(self):
        if self.method not in METHOD_NAMES:
            raise InvalidParameterError(f"unknown method {self.method!r}")
        for name in ("auc_sd", "mse_sd"):
            v = getattr(self, name)
            if np.isfinite(v) and v < 0:
                raise InvalidParameterError(f"{name} must be nonnegative, got {v!r}")
        if np.isfinite(self.auc_mean) and not (0.0 <= self.auc_mean <= 1.0):
            raise InvalidParameterError(f"auc_mean must lie in [0,1], got {self.auc_mean!r}")


@dataclass
class BenchmarkReport:
    """All rows plus reproducibility context: seed, config echo, runtimes."""

    rows: list
    seed: int
    config_echo: dict = field(default_factory=dict)
    runtimes: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)


def auc(scores, labels) -> float:
    """Mann-Whitney AUC: (concordant pairs + half ties) / (n0 * n1)."""
    scores = np.asarray(scores, dtype=float).reshape(-1)
    labels = np.asarray(labels, dtype=int).reshape(-1)
    if scores.size != labels.size:
        raise InvalidParameterError("scores and labels differ in length")
    if not np.all(np.isfinite(scores)):
        raise MetricError("scores contain non-finite values")
    if not np.all(np.isin(labels, (0, 1))):
        raise MetricError("labels must be 0 or 1")
    n1 = int(np.sum(labels == 1))
    n0 = labels.size - n1
    if n0 == 0 or n1 == 0:
        raise MetricError(
            f"AUC needs both classes, got {n0} negatives and {n1} positives"
        )
    ranks = rankdata(scores)
    return float((ranks[labels == 1].sum() - n1 * (n1 + 1) / 2.0) / (n0 * n1))


def imputation_mse(imputed, truth, eval_indices) -> float:
    """Mean squared error over the evaluation index set."""
    imputed = np.asarray(imputed, dtype=float).reshape(-1)
    truth = np.asarray(truth, dtype=float).reshape(-1)
    idx = np.asarray(eval_indices, dtype=np.intp).reshape(-1)
    if imputed.size != truth.size:
        raise InvalidParameterError("imputed and truth curves differ in length")
    if idx.size == 0:
        raise MetricError("evaluation index set is empty")
    if idx.min(initial=0) < 0 or idx.max(initial=-1) >= truth.size:
        raise InvalidParameterError("evaluation indices out of range")
    diff = imputed[idx] - truth[idx]
    return float(np.mean(diff * diff))


def stratified_split(labels, train_fraction: float, rng: np.random.Generator):
    """Per-class random split preserving proportions to within one sample."""
    labels = np.asarray(labels, dtype=int)
    train, test = [], []
    for z in (0, 1):
        members = np.nonzero(labels == z)[0]
        if members.size == 0:
            continue
        perm = members[rng.permutation(members.size)]
        n_train = int(np.floor(train_fraction * members.size + 0.5))
        n_train = min(max(n_train, 1), members.size - 1) if members.size > 1 else n_train
        train.extend(perm[:n_train].tolist())
        test.extend(perm[n_train:].tolist())
    return np.array(sorted(train), dtype=np.intp), np.array(sorted(test), dtype=np.intp)


@dataclass(frozen=True)
class MethodSettings:
    """Shared knobs the harness forwards to every method."""

    num_basis: int = DEFAULT_NUM_BASIS
    lam: float = 1.0
    roughness_weight: float = 1.0
    mtgp_roughness_weight: float = 0.0
    epsilon: float = 1e-4
    max_iters: int = 100
    bounds: HyperBounds = HyperBounds()
    sgp_share_hyperparams: bool = True
    magic_uses_sim_means: bool = True


def _fold_model(method, train, grid, basis, settings, sim_config):
    """Fit one method on one training fold.

    Returns (prob_fn, impute_fn): class-1 probability and completed curve
    for a new sparse sample.
    """
    if method == "magic":
        mean0 = sim_config.class_mean_values(0) if settings.magic_uses_sim_means else None
        mean1 = sim_config.class_mean_values(1) if settings.magic_uses_sim_means else None
        state = fit(
            train, grid, basis=basis, lam=settings.lam,
            roughness_weight=settings.roughness_weight, mean0=mean0, mean1=mean1,
            epsilon=settings.epsilon, max_iters=settings.max_iters, bounds=settings.bounds,
        )
        labels = [s.label for s in train]
        model = MagicModel.from_state(state, grid, basis, prior=ClassPrior.from_labels(labels))

        def prob_fn(sample):
            return predict_sample(model, sample).probability

        def impute_fn(sample):
            return predict_sample(model, sample).curve

        return prob_fn, impute_fn
    if method == "sgp":
        model = fit_sgp(
            train, grid, basis, settings.lam, bounds=settings.bounds,
            share_hyperparams=settings.sgp_share_hyperparams,
        )
    elif method == "mtgp":
        model = fit_mtgp(
            train, grid, basis, settings.lam,
            roughness_weight=settings.mtgp_roughness_weight, bounds=settings.bounds,
            epsilon=settings.epsilon, max_iters=settings.max_iters,
        )
    else:
        raise InvalidParameterError(f"unknown method {method!r}")

    def prob_fn(sample):
        return model.predict_proba_sample(sample)

    def impute_fn(sample):
        return model.impute(sample)[0]

    return prob_fn, impute_fn


def _fit_score(method, train, test, grid, basis, settings, sim_config):
    """Fit one method and return (probabilities, completed curves) over test."""
    prob_fn, impute_fn = _fold_model(method, train, grid, basis, settings, sim_config)
    probs = np.array([prob_fn(s) for s in test])
    curves = [impute_fn(s) for s in test]
    return probs, curves


def _aggregate(values) -> tuple:
    vals = np.asarray(values, dtype=float)
    if vals.size == 0:
        return float("nan"), float("nan")
    if vals.size == 1:
        return float(vals[0]), 0.0
    return float(np.mean(vals)), float(np.std(vals, ddof=1))


def run_benchmark(protocol: EvalProtocol, methods, sim_config: SimConfig,
                  settings: MethodSettings | None = None, seed: int = 0) -> BenchmarkReport:
    """Repeated-split benchmark over simulated data.

    Per repetition (independently seeded from one root seed): draw a complete
    dataset, then per alpha mask every sample and split stratified; every
    method sees identical masked train/test data. A method failure in one
    repetition is recorded and excluded from that method's aggregate.
    """
    if protocol.kind != "repeated-split":
        raise InvalidParameterError(
            f"run_benchmark expects the repeated-split protocol, got {protocol.kind!r}"
        )
    settings = settings or MethodSettings()
    methods = list(methods)
    for m in methods:
        if m not in METHOD_NAMES:
            raise InvalidParameterError(f"unknown method {m!r}")
    grid = sim_config.grid
    basis = open_uniform_basis(settings.num_basis, grid[0], grid[-1])
    root = np.random.SeedSequence(seed)
    children = root.spawn(protocol.repetitions)
    collected = {(m, a): {"auc": [], "mse": []} for m in methods for a in protocol.alphas}
    failures = []
    runtimes = {m: 0.0 for m in methods}

    for rep, child in enumerate(children):
        rng = np.random.default_rng(child)
        complete, truth = generate_dataset(sim_config, rng=rng)
        labels = np.array([s.label for s in complete])
        for alpha in protocol.alphas:
            masked = [apply_missingness(s, alpha, rng) for s in complete]
            train_idx, test_idx = stratified_split(labels, protocol.train_fraction, rng)
            train = [masked[i] for i in train_idx]
            test = [masked[i] for i in test_idx]
            test_labels = labels[test_idx]
            for method in methods:
                started = time.perf_counter()
                try:
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore", RuntimeWarning)
                        probs, curves = _fit_score(
                            method, train, test, grid, basis, settings, sim_config
                        )
                    mses = []
                    for pos, sample in enumerate(test):
                        full = truth.complete[sample.id]
                        obs = grid_indices(sample.times, grid)
                        mask = np.ones(grid.size, dtype=bool)
                        mask[obs] = False
                        masked_idx = np.nonzero(mask)[0]
                        if masked_idx.size:
                            mses.append(imputation_mse(curves[pos], full, masked_idx))
                    rep_auc = auc(probs, test_labels)
                    rep_mse = float(np.mean(mses)) if mses else float("nan")
                except (MagicError, NumericalError, np.linalg.LinAlgError) as exc:
                    failures.append(
                        {"method": method, "alpha": alpha, "rep": rep, "error": str(exc)}
                    )
                else:
                    collected[(method, alpha)]["auc"].append(rep_auc)
                    collected[(method, alpha)]["mse"].append(rep_mse)
                finally:
                    runtimes[method] += time.perf_counter() - started

    rows = []
    for method in methods:
        for alpha in protocol.alphas:
            bucket = collected[(method, alpha)]
            auc_mean, auc_sd = _aggregate(bucket["auc"])
            mse_mean, mse_sd = _aggregate(bucket["mse"])
            n_fail = sum(
                1 for f in failures if f["method"] == method and f["alpha"] == alpha
            )
            rows.append(
                BenchmarkRow(
                    method=method, alpha=alpha, auc_mean=auc_mean, auc_sd=auc_sd,
                    mse_mean=mse_mean, mse_sd=mse_sd,
                    n_reps=len(bucket["auc"]), n_failures=n_fail,
                )
            )
    return BenchmarkReport(
        rows=rows, seed=seed,
        config_echo={
            "per_class": sim_config.per_class, "sigma": sim_config.sigma,
            "train_fraction": protocol.train_fraction,
            "repetitions": protocol.repetitions,
            "alphas": ",".join(repr(a) for a in protocol.alphas),
            "methods": ",".join(methods),
        },
        runtimes=runtimes, failures=failures,
    )


def _loocv_mse_for_sample(impute_fn, sample, grid) -> float:
    """Leave-one-value-out: mask each observed point once, impute from the
    already-fitted fold model, and average the squared errors."""
    errors = []
    for j in range(sample.n_obs):
        keep = np.ones(sample.n_obs, dtype=bool)
        keep[j] = False
        reduced = replace(sample, times=sample.times[keep], values=sample.values[keep])
        curve = impute_fn(reduced)
        target = grid_indices(sample.times[j : j + 1], grid)[0]
        errors.append((curve[target] - sample.values[j]) ** 2)
    return float(np.mean(errors))


def run_loocv(samples, grid, method: str, settings: MethodSettings | None = None,
              sim_config: SimConfig | None = None, seed: int = 0) -> BenchmarkReport:
    """Leave-one-sample-out AUC plus leave-one-value-out imputation MSE.

    Each outer fold fits on all other samples and scores the held-out
    sample's class-1 probability; the fold's fitted model then imputes the
    held-out sample once per observed value with that value masked. The alpha
    column reports the dataset's empirical missing fraction relative to the
    grid. Deterministic; ``seed`` is recorded for provenance only.
    """
    if method not in METHOD_NAMES:
        raise InvalidParameterError(f"unknown method {method!r}")
    settings = settings or MethodSettings()
    samples = list(samples)
    labels = np.array([-1 if s.label is None else int(s.label) for s in samples])
    if np.any(labels < 0):
        raise DataError("every sample needs a 0/1 label for cross-validation")
    if int(np.sum(labels == 0)) < 2 or int(np.sum(labels == 1)) < 2:
        raise DataError("cross-validation needs at least 2 samples per class")
    grid = check_grid(grid)
    basis = open_uniform_basis(settings.num_basis, grid[0], grid[-1])
    sim_config = sim_config or SimConfig.with_preset("zero", grid=grid)
    n = grid.size
    missing_fraction = 1.0 - float(np.mean([s.n_obs / n for s in samples]))

    probs = np.full(len(samples), np.nan)
    mses = np.full(len(samples), np.nan)
    failures = []
    started = time.perf_counter()
    for i, held in enumerate(samples):
        train = samples[:i] + samples[i + 1 :]
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                prob_fn, impute_fn = _fold_model(method, train, grid, basis, settings, sim_config)
                probs[i] = prob_fn(held)
                if held.n_obs >= 2:
                    mses[i] = _loocv_mse_for_sample(impute_fn, held, grid)
        except (MagicError, NumericalError, np.linalg.LinAlgError) as exc:
            failures.append({"method": method, "alpha": float("nan"), "rep": i, "error": str(exc)})
    elapsed = time.perf_counter() - started

    ok = ~np.isnan(probs)
    if ok.sum() < 2 or len(set(labels[ok].tolist())) < 2:
        raise MetricError("too many failed folds to evaluate cross-validated AUC")
    auc_value = auc(probs[ok], labels[ok])
    mse_ok = mses[~np.isnan(mses)]
    mse_mean, mse_sd = _aggregate(mse_ok)
    row = BenchmarkRow(
        method=method, alpha=missing_fraction, auc_mean=auc_value, auc_sd=0.0,
        mse_mean=mse_mean, mse_sd=mse_sd, n_reps=int(ok.sum()), n_failures=len(failures),
    )
    return BenchmarkReport(
        rows=[row], seed=seed,
        config_echo={"protocol": "loocv", "n_samples": len(samples), "method": method},
        runtimes={method: elapsed}, failures=failures,
    )
