"""Configuration files, dataset ingestion, model checkpoints, and reports.

* Config: flat ``key = value`` text; unknown keys are rejected.
* Series data: long CSV ``sample_id,time,value``; labels CSV ``sample_id,label``.
  Duplicate (sample_id, time) readings are averaged; times must land on the
  working grid within 1e-9 when a grid is supplied.
* Checkpoints: versioned JSON with full-precision floats; loading a
  checkpoint reproduces predictions bitwise.
* Reports: comment preamble (seed, config echo, runtimes, failures) plus a
  CSV table with columns method, alpha, auc_mean, auc_sd, mse_mean, mse_sd,
  n_reps, n_failures.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .baselines import MTGP_KIND, SGP_KIND, BaselineModel
from .basis import BasisConfig, open_uniform_basis
from .errors import (
    CheckpointError,
    ConfigError,
    IngestError,
    InvalidParameterError,
    UnsupportedVersionError,
)
from .evaluate import (
    DEFAULT_ALPHAS,
    METHOD_NAMES,
    BenchmarkReport,
    BenchmarkRow,
    EvalProtocol,
    MethodSettings,
)
from .kernels import KernelParams
from .logistic import LogisticCoefficients
from .model import ClassPosterior, HyperBounds, ModelParams
from .predict import ClassPrior, MagicModel
from .series import SampleSeries
from .simulate import MEAN_PRESETS, SimConfig
from .validation import GRID_SNAP_TOL, check_grid

CHECKPOINT_FORMAT = "magicgp-model"
CHECKPOINT_VERSION = 1
REPORT_COLUMNS = ("method", "alpha", "auc_mean", "auc_sd", "mse_mean", "mse_sd",
                  "n_reps", "n_failures")

_METHOD_CHOICES = METHOD_NAMES + ("all",)
_PROTOCOL_CHOICES = ("repeated-split", "loocv")


# ---------------------------------------------------------------------------
# run configuration


@dataclass(frozen=True)
class RunConfig:
    """Every tunable surfaced to the command line, with defaults."""

    grid_start: float = 0.0
    grid_stop: float = 50.0
    grid_num: int = 51
    num_basis: int = 8
    lam: float = 1.0
    roughness_weight: float = 1.0
    mtgp_roughness_weight: float = 0.0
    epsilon: float = 1e-4
    max_iters: int = 100
    amp_min: float = 1e-3
    amp_max: float = 1e4
    len_min: float = 1e-3
    len_max: float = 1e4
    noise_min: float = 1e-8
    noise_max: float = 1e2
    method: str = "magic"
    protocol: str = "repeated-split"
    train_fraction: float = 0.7
    repetitions: int = 50
    alphas: tuple = DEFAULT_ALPHAS
    seed: int = 0
    sgp_share_hyperparams: bool = True
    magic_uses_sim_means: bool = True
    sim_per_class: int = 75
    sim_sigma: float = 0.01
    sim_theta_v: float = 10.0
    sim_theta_l: float = 100.0
    sim_theta0_v: float = 1.0
    sim_theta0_l: float = 50.0
    sim_theta1_v: float = 1.0
    sim_theta1_l: float = 50.0
    sim_mean_preset: str = "default"

    def __post_init__(self):
        if self.grid_num < 2:
            raise ConfigError(f"grid_num must be at least 2, got {self.grid_num}")
        if self.grid_stop <= self.grid_start:
            raise ConfigError("grid_stop must exceed grid_start")
        if self.num_basis < 4:
            raise ConfigError(f"num_basis must be at least 4, got {self.num_basis}")
        if self.lam < 0 or self.roughness_weight < 0 or self.mtgp_roughness_weight < 0:
            raise ConfigError("penalty weights must be nonnegative")
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be at least 1, got {self.max_iters}")
        for lo, hi, name in (
            (self.amp_min, self.amp_max, "amp"),
            (self.len_min, self.len_max, "len"),
            (self.noise_min, self.noise_max, "noise"),
        ):
            if not (0 < lo < hi):
                raise ConfigError(f"{name} bounds must satisfy 0 < min < max")
        if self.method not in _METHOD_CHOICES:
            raise ConfigError(f"method must be one of {_METHOD_CHOICES}, got {self.method!r}")
        if self.protocol not in _PROTOCOL_CHOICES:
            raise ConfigError(
                f"protocol must be one of {_PROTOCOL_CHOICES}, got {self.protocol!r}"
            )
        if not (0.0 < self.train_fraction < 1.0):
            raise ConfigError(f"train_fraction must lie in (0,1), got {self.train_fraction}")
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be at least 1, got {self.repetitions}")
        alphas = tuple(float(a) for a in self.alphas)
        for a in alphas:
            if not (0.0 <= a < 1.0):
                raise ConfigError(f"alphas must lie in [0,1), got {a}")
        object.__setattr__(self, "alphas", alphas)
        if self.sim_mean_preset not in MEAN_PRESETS:
            raise ConfigError(
                f"sim_mean_preset must be one of {MEAN_PRESETS}, got {self.sim_mean_preset!r}"
            )
        if self.sim_per_class < 1:
            raise ConfigError("sim_per_class must be at least 1")
        if self.sim_sigma <= 0:
            raise ConfigError("sim_sigma must be positive")

    # -- construction -------------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        defaults = cls()
        known = asdict(defaults)
        parsed = {}
        for key, raw in data.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            parsed[key] = _coerce(key, raw, known[key])
        return cls(**parsed)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        data = {}
        try:
            with open(path, "r", encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    stripped = line.strip()
                    if not stripped or stripped.startswith("#"):
                        continue
                    if "=" not in stripped:
                        raise ConfigError(
                            f"{path}:{lineno}: expected 'key = value', got {stripped!r}"
                        )
                    key, _, value = stripped.partition("=")
                    key = key.strip()
                    if key in data:
                        raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
                    data[key] = value.strip()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["alphas"] = ",".join(repr(a) for a in self.alphas)
        return out

    # -- derived objects ----------------------------------------------------

    def grid(self) -> np.ndarray:
        return check_grid(np.linspace(self.grid_start, self.grid_stop, self.grid_num))

    def hyper_bounds(self) -> HyperBounds:
        return HyperBounds(
            amplitude=(self.amp_min, self.amp_max),
            length_scale=(self.len_min, self.len_max),
            noise=(self.noise_min, self.noise_max),
        )

    def basis(self) -> BasisConfig:
        return open_uniform_basis(self.num_basis, self.grid_start, self.grid_stop)

    def sim_config(self, seed: int | None = None) -> SimConfig:
        return SimConfig.with_preset(
            self.sim_mean_preset,
            grid=self.grid(),
            theta0=KernelParams(self.sim_theta0_v, self.sim_theta0_l),
            theta1=KernelParams(self.sim_theta1_v, self.sim_theta1_l),
            theta=KernelParams(self.sim_theta_v, self.sim_theta_l),
            sigma=self.sim_sigma,
            per_class=self.sim_per_class,
            seed=self.seed if seed is None else seed,
        )

    def method_settings(self) -> MethodSettings:
        return MethodSettings(
            num_basis=self.num_basis,
            lam=self.lam,
            roughness_weight=self.roughness_weight,
            mtgp_roughness_weight=self.mtgp_roughness_weight,
            epsilon=self.epsilon,
            max_iters=self.max_iters,
            bounds=self.hyper_bounds(),
            sgp_share_hyperparams=self.sgp_share_hyperparams,
            magic_uses_sim_means=self.magic_uses_sim_means,
        )

    def eval_protocol(self) -> EvalProtocol:
        kind = "loocv" if self.protocol == "loocv" else "repeated-split"
        return EvalProtocol(
            kind=kind,
            train_fraction=self.train_fraction,
            repetitions=self.repetitions,
            alphas=self.alphas,
        )

    def methods(self) -> list:
        return list(METHOD_NAMES) if self.method == "all" else [self.method]


def _coerce(key, raw, default):
    """Parse a raw config value to the type of its default."""
    if isinstance(raw, str):
        text = raw.strip()
    else:
        return raw
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            return tuple(float(part) for part in text.split(",") if part.strip())
        return text
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from exc


# ---------------------------------------------------------------------------
# CSV ingestion


def _read_rows(path, expected_columns):
    """Yield (line_num, row dict) from a CSV with an exact header set."""
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: file is empty (missing header row)") from None
        header = [h.strip() for h in header]
        missing = [c for c in expected_columns if c not in header]
        extra = [c for c in header if c not in expected_columns]
        if missing or extra:
            raise IngestError(
                f"{path}:1: header must be exactly {','.join(expected_columns)}; "
                f"missing {missing or 'none'}, unexpected {extra or 'none'}"
            )
        positions = [header.index(c) for c in expected_columns]
        for row in reader:
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise IngestError(
                    f"{path}:{reader.line_num}: expected {len(header)} fields, got {len(row)}"
                )
            yield reader.line_num, {c: row[p].strip() for c, p in zip(expected_columns, positions)}


def _parse_float(path, lineno, name, text):
    try:
        value = float(text)
    except ValueError:
        raise IngestError(f"{path}:{lineno}: non-numeric {name} {text!r}") from None
    if not np.isfinite(value):
        raise IngestError(f"{path}:{lineno}: non-finite {name} {text!r}")
    return value


def _snap_time(path, lineno, t, grid):
    if grid is None:
        return t
    pos = int(np.searchsorted(grid, t))
    best = None
    for cand in (pos - 1, pos):
        if 0 <= cand < grid.size and abs(grid[cand] - t) <= GRID_SNAP_TOL:
            best = float(grid[cand])
            break
    if best is None:
        raise IngestError(
            f"{path}:{lineno}: time {t!r} is not on the working grid (tolerance {GRID_SNAP_TOL:g})"
        )
    return best


def ingest_long_csv(series_path, labels_path=None, grid=None) -> list:
    """Long-format series CSV (plus optional labels CSV) to SampleSeries.

    Duplicate (sample_id, time) readings are averaged. With a grid supplied,
    times must land on it within 1e-9 and are snapped exactly. Labels must be
    0 or 1 and reference known sample ids. Samples keep first-appearance
    order; samples absent from the labels file get label None.
    """
    grid_arr = None if grid is None else check_grid(grid)
    per_sample: dict = {}
    order: list = []
    for lineno, row in _read_rows(series_path, ("sample_id", "time", "value")):
        sid = row["sample_id"]
        if not sid:
            raise IngestError(f"{series_path}:{lineno}: empty sample_id")
        t = _parse_float(series_path, lineno, "time", row["time"])
        v = _parse_float(series_path, lineno, "value", row["value"])
        t = _snap_time(series_path, lineno, t, grid_arr)
        if sid not in per_sample:
            per_sample[sid] = {}
            order.append(sid)
        per_sample[sid].setdefault(t, []).append(v)
    if not per_sample:
        raise IngestError(f"{series_path}: no data rows")

    labels: dict = {}
    if labels_path is not None:
        for lineno, row in _read_rows(labels_path, ("sample_id", "label")):
            sid = row["sample_id"]
            if sid not in per_sample:
                raise IngestError(
                    f"{labels_path}:{lineno}: unknown sample_id {sid!r}"
                )
            if sid in labels:
                raise IngestError(f"{labels_path}:{lineno}: duplicate label for {sid!r}")
            try:
                lab = int(row["label"])
            except ValueError:
                lab = -1
            if lab not in (0, 1):
                raise IngestError(
                    f"{labels_path}:{lineno}: label must be 0 or 1, got {row['label']!r}"
                )
            labels[sid] = lab

    samples = []
    for sid in order:
        times = np.array(sorted(per_sample[sid]))
        values = np.array([float(np.mean(per_sample[sid][t])) for t in times])
        samples.append(
            SampleSeries(id=sid, times=times, values=values, label=labels.get(sid))
        )
    return samples


def write_series_csv(samples, path):
    """Long-format series CSV; values at full float precision."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "time", "value"])
        for s in samples:
            for t, v in zip(s.times, s.values):
                writer.writerow([s.id, repr(float(t)), repr(float(v))])


def write_labels_csv(samples, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "label"])
        for s in samples:
            if s.label is not None:
                writer.writerow([s.id, int(s.label)])


# ---------------------------------------------------------------------------
# model checkpoints


def _kernel_to_list(kern: KernelParams):
    return [kern.amplitude, kern.length_scale]


def _gaussian_to_dict(g):
    return {"mean": g.mean.tolist(), "cov": g.cov.tolist()}


def _gaussian_from_dict(data) -> ClassPosterior:
    return ClassPosterior(np.array(data["mean"], dtype=float),
                          np.array(data["cov"], dtype=float))


def _basis_to_dict(basis: BasisConfig):
    return {"num_basis": basis.num_basis, "t_min": basis.t_min, "t_max": basis.t_max}


def _basis_from_dict(data) -> BasisConfig:
    return open_uniform_basis(int(data["num_basis"]), float(data["t_min"]), float(data["t_max"]))


def _coeffs_to_dict(coeffs: LogisticCoefficients):
    return {"intercept": coeffs.intercept, "weights": coeffs.weights.tolist()}


def _coeffs_from_dict(data) -> LogisticCoefficients:
    return LogisticCoefficients(float(data["intercept"]), np.array(data["weights"], dtype=float))


def save_model(model, path):
    """Write a versioned JSON checkpoint for a fitted model of any kind."""
    if isinstance(model, MagicModel):
        payload = {
            "kind": "magic",
            "grid": model.grid.tolist(),
            "basis": _basis_to_dict(model.basis),
            "params": {
                "theta0": _kernel_to_list(model.params.theta0),
                "theta1": _kernel_to_list(model.params.theta1),
                "theta": _kernel_to_list(model.params.theta),
                "sigma2": model.params.sigma2,
                "coeffs": _coeffs_to_dict(model.params.coeffs),
                "mean0": model.params.mean0.tolist(),
                "mean1": model.params.mean1.tolist(),
            },
            "post0": _gaussian_to_dict(model.post0),
            "post1": _gaussian_to_dict(model.post1),
            "prior": [model.prior.p0, model.prior.p1],
        }
    elif isinstance(model, BaselineModel):
        payload = {
            "kind": model.kind,
            "grid": model.grid.tolist(),
            "basis": _basis_to_dict(model.basis),
            "kernel": _kernel_to_list(model.kernel),
            "sigma2": model.sigma2,
            "prior_mean": model.prior_mean.tolist(),
            "coeffs": _coeffs_to_dict(model.coeffs),
            "per_sample": None
            if model.per_sample is None
            else {
                sid: [kern.amplitude, kern.length_scale, s2]
                for sid, (kern, s2) in model.per_sample.items()
            },
        }
        if model.kind == MTGP_KIND:
            payload["mean_kernel"] = _kernel_to_list(model.mean_kernel)
            payload["mean_post"] = _gaussian_to_dict(model.mean_post)
    else:
        raise InvalidParameterError(f"cannot checkpoint object of type {type(model).__name__}")
    payload = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, **payload}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_model(path):
    """Read a checkpoint back into a MagicModel or BaselineModel."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            try:
                payload = json.load(fh)
            except json.JSONDecodeError as exc:
                raise CheckpointError(
                    f"{path}: malformed checkpoint at offset {exc.pos}: {exc.msg}"
                ) from exc
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a model checkpoint")
    version = payload.get("version")
    if not isinstance(version, int) or version < 1:
        raise CheckpointError(f"{path}: missing or invalid version field")
    if version > CHECKPOINT_VERSION:
        raise UnsupportedVersionError(
            f"{path}: checkpoint version {version} is newer than supported "
            f"version {CHECKPOINT_VERSION}"
        )
    try:
        kind = payload["kind"]
        grid = np.array(payload["grid"], dtype=float)
        basis = _basis_from_dict(payload["basis"])
        if kind == "magic":
            p = payload["params"]
            params = ModelParams(
                theta0=KernelParams(*p["theta0"]),
                theta1=KernelParams(*p["theta1"]),
                theta=KernelParams(*p["theta"]),
                sigma2=float(p["sigma2"]),
                coeffs=_coeffs_from_dict(p["coeffs"]),
                mean0=np.array(p["mean0"], dtype=float),
                mean1=np.array(p["mean1"], dtype=float),
            )
            prior = ClassPrior(*payload["prior"])
            return MagicModel(
                params=params,
                post0=_gaussian_from_dict(payload["post0"]),
                post1=_gaussian_from_dict(payload["post1"]),
                grid=grid,
                basis=basis,
                prior=prior,
            )
        if kind in (SGP_KIND, MTGP_KIND):
            per_sample = payload.get("per_sample")
            if per_sample is not None:
                per_sample = {
                    sid: (KernelParams(entry[0], entry[1]), float(entry[2]))
                    for sid, entry in per_sample.items()
                }
            return BaselineModel(
                kind=kind,
                kernel=KernelParams(*payload["kernel"]),
                sigma2=float(payload["sigma2"]),
                coeffs=_coeffs_from_dict(payload["coeffs"]),
                grid=grid,
                basis=basis,
                prior_mean=np.array(payload["prior_mean"], dtype=float),
                mean_kernel=KernelParams(*payload["mean_kernel"]) if kind == MTGP_KIND else None,
                mean_post=_gaussian_from_dict(payload["mean_post"]) if kind == MTGP_KIND else None,
                per_sample=per_sample,
            )
        raise CheckpointError(f"{path}: unknown model kind {kind!r}")
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: incomplete or corrupt checkpoint ({exc})") from exc


# ---------------------------------------------------------------------------
# reports


def write_report(report: BenchmarkReport, path):
    """Comment preamble (reproducibility context) plus the CSV result table."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("# magicgp report\n")
        fh.write(f"# seed={report.seed}\n")
        for key in sorted(report.config_echo):
            fh.write(f"# config.{key}={report.config_echo[key]}\n")
        for method in sorted(report.runtimes):
            fh.write(f"# runtime_seconds.{method}={report.runtimes[method]!r}\n")
        for failure in report.failures:
            fh.write(
                "# failure: method={method} alpha={alpha} rep={rep} error={error}\n".format(
                    **failure
                )
            )
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for row in report.rows:
            writer.writerow(
                [
                    row.method,
                    repr(float(row.alpha)),
                    repr(float(row.auc_mean)),
                    repr(float(row.auc_sd)),
                    repr(float(row.mse_mean)),
                    repr(float(row.mse_sd)),
                    int(row.n_reps),
                    int(row.n_failures),
                ]
            )


def read_report(path) -> BenchmarkReport:
    """Parse a report file back into rows plus preamble context."""
    rows = []
    seed = 0
    config_echo: dict = {}
    runtimes: dict = {}
    failures: list = []
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            data_lines = []
            for line in fh:
                stripped = line.strip()
                if stripped.startswith("#"):
                    body = stripped.lstrip("#").strip()
                    if body.startswith("seed="):
                        seed = int(body.split("=", 1)[1])
                    elif body.startswith("config."):
                        key, _, value = body[len("config."):].partition("=")
                        config_echo[key] = value
                    elif body.startswith("runtime_seconds."):
                        key, _, value = body[len("runtime_seconds."):].partition("=")
                        runtimes[key] = float(value)
                    elif body.startswith("failure:"):
                        failures.append(body[len("failure:"):].strip())
                    continue
                if stripped:
                    data_lines.append(line)
    except OSError as exc:
        raise IngestError(f"cannot read report {path}: {exc}") from exc
    reader = csv.reader(data_lines)
    try:
        header = next(reader)
    except StopIteration:
        raise IngestError(f"{path}: report has no table") from None
    if tuple(h.strip() for h in header) != REPORT_COLUMNS:
        raise IngestError(
            f"{path}: unexpected report columns {header!r}"
        )
    for row in reader:
        if len(row) != len(REPORT_COLUMNS):
            raise IngestError(f"{path}: malformed report row {row!r}")
        rows.append(
            BenchmarkRow(
                method=row[0],
                alpha=float(row[1]),
                auc_mean=float(row[2]),
                auc_sd=float(row[3]),
                mse_mean=float(row[4]),
                mse_sd=float(row[5]),
                n_reps=int(row[6]),
                n_failures=int(row[7]),
            )
        )
    return BenchmarkReport(
        rows=rows, seed=seed, config_echo=config_echo, runtimes=runtimes, failures=failures
    )


def write_q_history(q_history, path):
    """Objective trace: iteration index and value, one row each."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "objective"])
        for i, q in enumerate(q_history):
            writer.writerow([i, repr(float(q))])


def write_predictions(results, path):
    """Per-sample classification table."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["sample_id", "assigned_class", "probability", "log_score_0", "log_score_1"]
        )
        for r in results:
            writer.writerow(
                [
                    r.sample_id,
                    r.assigned_class,
                    repr(float(r.probability)),
                    repr(float(r.map_log_scores[0])),
                    repr(float(r.map_log_scores[1])),
                ]
            )


def write_imputations(entries, grid, path):
    """Per-sample completed curves: sample_id, time, value, variance rows."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "time", "value", "variance"])
        for sid, curve, variance in entries:
            for t, v, var in zip(grid, curve, variance):
                writer.writerow([sid, repr(float(t)), repr(float(v)), repr(float(var))])
