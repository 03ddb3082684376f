"""Experiment orchestration: validated configs, saved model artifacts, and
the repeated-split benchmark/ablation protocol.

A benchmark evaluates one configuration by repeating, for each split index:
split -> standardize on the training side -> fit -> posterior-averaged
prediction on the test side -> metric.  Every random choice derives from
recorded integer seeds, so any emitted row can be reproduced exactly; the
split permutations depend only on (base_seed, repeat), which is what makes
"dtbks" and "rks-prior" runs of the same config a paired comparison.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .data import (CLASSIFICATION, REGRESSION, Dataset, SplitSpec,
                   Standardizer, fit_standardizer, load_csv,
                   misclassification_rate, read_schema, rmse, split)
from .errors import (ConfigError, DataError, NumericsError, SplitError,
                     UsageError)
from .model import (ClassificationTask, LayerParams, Network, RegressionTask,
                    Task, draw_prior_banks, forward_predict)
from .rng import RngStream
from .tdist import DiagStudentT
from .training import FitConfig, TrainReport, fit, init_from_prior

MODE_FULL = "dtbks"
MODE_FROZEN_BANKS = "rks-prior"
MODES = (MODE_FULL, MODE_FROZEN_BANKS)

ARTIFACT_VERSION = 1
RESULTS_VERSION = 1

#: Substream labels carved off each repeat's seed stream.  0 and 1 are used
#: inside the fit loop (shuffling, escort noise); these must not collide.
_BANK_STREAM = 2
_EVAL_STREAM = 3


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """One fully validated experiment: data, model shape, training, splits."""

    dataset_path: str
    schema_path: str
    dataset_name: str
    layers: int
    hidden_width: int
    fit: FitConfig
    split: SplitSpec
    mode: str
    seed: int
    eval_rounds: int
    resample_prior_banks: bool
    subsample: Optional[int]
    output_dir: str


_TOP_KEYS = {"dataset", "structure", "fit", "split", "mode", "seed",
             "eval_rounds", "resample_prior_banks", "subsample", "output_dir"}
_DATASET_KEYS = {"path", "schema", "name"}
_STRUCTURE_KEYS = {"layers", "hidden_width", "bank_size", "train_draws",
                   "eval_draws"}
_FIT_KEYS = {"epochs", "batch_size", "learning_rate", "adam_beta1",
             "adam_beta2", "adam_eps", "prior_nu", "sigma_y2",
             "likelihood_scale", "early_stop_patience", "early_stop_rel_tol"}
_SPLIT_KEYS = {"base_seed", "train_fraction", "repeats"}


def _expect_mapping(raw, key, errors):
    section = raw.get(key)
    if section is None:
        return {}
    if not isinstance(section, dict):
        errors.append(f"{key}: must be a mapping, got {type(section).__name__}")
        return {}
    return section


def _check_unknown(section: dict, allowed: set, prefix: str, errors: list):
    unknown = sorted(set(section) - allowed)
    for key in unknown:
        errors.append(f"{prefix}{key}: unknown key (allowed: {sorted(allowed)})")


def _as_positive_int(value, field, errors, minimum=1):
    if isinstance(value, bool) or not isinstance(value, int):
        errors.append(f"{field}: must be an integer, got {value!r}")
        return None
    if value < minimum:
        errors.append(f"{field}: must be at least {minimum}, got {value}")
        return None
    return value


def parse_config_data(raw: dict, base_dir: str) -> ExperimentConfig:
    """Validate a parsed config mapping, reporting every violated field.

    Relative paths resolve against `base_dir` (the config file's directory).
    """
    if not isinstance(raw, dict):
        raise ConfigError(
            f"configuration must be a mapping, got {type(raw).__name__}")
    errors: list[str] = []
    _check_unknown(raw, _TOP_KEYS, "", errors)

    dataset = _expect_mapping(raw, "dataset", errors)
    _check_unknown(dataset, _DATASET_KEYS, "dataset.", errors)
    dataset_path = schema_path = None
    for key in ("path", "schema"):
        value = dataset.get(key)
        if not isinstance(value, str) or not value:
            errors.append(f"dataset.{key}: required and must be a file path")
            continue
        resolved = os.path.normpath(os.path.join(base_dir, value))
        if not os.path.isfile(resolved):
            errors.append(f"dataset.{key}: file does not exist: {resolved}")
            continue
        if key == "path":
            dataset_path = resolved
        else:
            schema_path = resolved
    name = dataset.get("name")
    if name is not None and not isinstance(name, str):
        errors.append(f"dataset.name: must be a string, got {name!r}")
        name = None
    if name is None and dataset_path is not None:
        name = os.path.splitext(os.path.basename(dataset_path))[0]

    structure = _expect_mapping(raw, "structure", errors)
    _check_unknown(structure, _STRUCTURE_KEYS, "structure.", errors)
    layers = structure.get("layers")
    if layers is None:
        errors.append("structure.layers: required (number of stacked layers)")
    elif isinstance(layers, bool) or not isinstance(layers, int) or layers < 1:
        errors.append(
            f"structure.layers: the layer count must be an integer >= 1, "
            f"got {layers!r}")
        layers = None
    hidden_width = structure.get("hidden_width")
    if hidden_width is None:
        errors.append(
            "structure.hidden_width: required (width of each hidden layer)")
    elif (isinstance(hidden_width, bool) or not isinstance(hidden_width, int)
          or hidden_width < 1):
        errors.append(
            f"structure.hidden_width: the hidden width must be an integer "
            f">= 1, got {hidden_width!r}")
        hidden_width = None
    bank_size = structure.get("bank_size", 100)
    train_draws = structure.get("train_draws", 10)
    eval_draws = structure.get("eval_draws", 100)
    for label, value in (("structure.bank_size", bank_size),
                         ("structure.train_draws", train_draws),
                         ("structure.eval_draws", eval_draws)):
        _as_positive_int(value, label, errors)

    fit_section = _expect_mapping(raw, "fit", errors)
    _check_unknown(fit_section, _FIT_KEYS, "fit.", errors)

    split_section = _expect_mapping(raw, "split", errors)
    _check_unknown(split_section, _SPLIT_KEYS, "split.", errors)

    mode = raw.get("mode", MODE_FULL)
    if mode not in MODES:
        errors.append(f"mode: must be one of {list(MODES)}, got {mode!r}")

    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        errors.append(f"seed: must be a nonnegative integer, got {seed!r}")
        seed = 0

    eval_rounds = raw.get("eval_rounds", 50)
    eval_rounds = _as_positive_int(eval_rounds, "eval_rounds", errors) or 50

    resample = raw.get("resample_prior_banks", False)
    if not isinstance(resample, bool):
        errors.append(
            f"resample_prior_banks: must be true or false, got {resample!r}")
        resample = False
    if resample and mode == MODE_FULL:
        errors.append(
            "resample_prior_banks: only meaningful in 'rks-prior' mode")

    subsample = raw.get("subsample")
    if subsample is not None:
        subsample = _as_positive_int(subsample, "subsample", errors)

    output_dir = raw.get("output_dir", "results")
    if not isinstance(output_dir, str) or not output_dir:
        errors.append(f"output_dir: must be a directory path, got {output_dir!r}")
        output_dir = "results"
    output_dir = os.path.normpath(os.path.join(base_dir, output_dir))

    fit_cfg = None
    fit_kwargs = {k: v for k, v in fit_section.items() if k in _FIT_KEYS}
    try:
        fit_cfg = FitConfig(
            bank_size=bank_size if isinstance(bank_size, int) else 100,
            k_train=train_draws if isinstance(train_draws, int) else 10,
            k_eval=eval_draws if isinstance(eval_draws, int) else 100,
            seed=0,
            **fit_kwargs)
    except (ConfigError, TypeError) as exc:
        errors.append(f"fit: {exc}")

    split_spec = None
    split_kwargs = {k: v for k, v in split_section.items() if k in _SPLIT_KEYS}
    try:
        split_kwargs.setdefault("base_seed", seed)
        split_spec = SplitSpec(**split_kwargs)
    except (UsageError, TypeError) as exc:
        errors.append(f"split: {exc}")

    if errors:
        raise ConfigError(
            "invalid configuration (" + str(len(errors)) + " problem(s)): "
            + "; ".join(errors))

    return ExperimentConfig(
        dataset_path=dataset_path, schema_path=schema_path,
        dataset_name=name, layers=layers, hidden_width=hidden_width,
        fit=fit_cfg, split=split_spec, mode=mode, seed=seed,
        eval_rounds=eval_rounds, resample_prior_banks=resample,
        subsample=subsample, output_dir=output_dir)


def parse_config_file(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return parse_config_data(raw, os.path.dirname(os.path.abspath(path)))


def apply_overrides(cfg: ExperimentConfig, seed=None, out=None, mode=None,
                    repeats=None) -> ExperimentConfig:
    """Fold command-line overrides into a validated config."""
    if seed is not None:
        if seed < 0:
            raise ConfigError(f"seed override must be nonnegative, got {seed}")
        cfg = replace(cfg, seed=int(seed))
    if out is not None:
        cfg = replace(cfg, output_dir=str(out))
    if mode is not None:
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {list(MODES)}, got {mode!r}")
        if mode == MODE_FULL and cfg.resample_prior_banks:
            raise ConfigError(
                "resample_prior_banks is only meaningful in 'rks-prior' mode")
        cfg = replace(cfg, mode=mode)
    if repeats is not None:
        if repeats < 1:
            raise ConfigError(f"repeats override must be positive, got {repeats}")
        cfg = replace(cfg, split=replace(cfg.split, repeats=int(repeats)))
    return cfg


# ---------------------------------------------------------------------------
# Dataset plumbing
# ---------------------------------------------------------------------------

def load_experiment_dataset(cfg: ExperimentConfig) -> Dataset:
    """Load the configured CSV (optionally truncated to the first rows)."""
    ds = load_csv(cfg.dataset_path, read_schema(cfg.schema_path))
    if cfg.subsample is not None and cfg.subsample < ds.n_examples:
        ds = ds.take(np.arange(cfg.subsample))
    return ds


def network_widths(cfg: ExperimentConfig, n_features: int,
                   n_classes: int) -> tuple[int, ...]:
    """Layer width sequence: inputs, hidden widths, and the output head."""
    out = n_classes if n_classes else 1
    return (n_features, *([cfg.hidden_width] * (cfg.layers - 1)), out)


def make_task(ds: Dataset, fit_cfg: FitConfig) -> Task:
    if ds.task == CLASSIFICATION:
        return ClassificationTask(ds.n_classes)
    return RegressionTask(fit_cfg.sigma_y2)


def repeat_fit_seed(seed: int, repeat: int) -> int:
    """Per-repeat training seed, deterministic in (experiment seed, repeat)."""
    gen = RngStream(int(seed)).split(int(repeat)).generator
    return int(gen.integers(2 ** 62))


def split_fingerprint(train: Dataset, test: Dataset) -> str:
    """Content hash identifying one concrete train/test split."""
    h = hashlib.sha256()
    for part in (train, test):
        h.update(np.ascontiguousarray(part.features).tobytes())
        h.update(np.ascontiguousarray(np.asarray(part.targets,
                                                 dtype=float)).tobytes())
        h.update(b"|")
    return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# Model artifacts
# ---------------------------------------------------------------------------

@dataclass
class ModelArtifact:
    """Everything needed to reload a trained model and predict on raw CSVs."""

    network: Network
    mode: str
    frozen_banks: Optional[list]
    standardizer: Standardizer
    dataset_name: str
    label_names: tuple
    eval_draws: int
    resampled_banks: bool = False


def _posterior_to_dict(q: DiagStudentT) -> dict:
    return {"mean": q.mu.tolist(), "variance": q.sigma2.tolist(),
            "dof": float(q.nu)}


def _posterior_from_dict(raw: dict) -> DiagStudentT:
    return DiagStudentT(np.asarray(raw["mean"], dtype=float),
                        np.asarray(raw["variance"], dtype=float),
                        float(raw["dof"]))


def artifact_to_dict(art: ModelArtifact) -> dict:
    net = art.network
    if isinstance(net.task, ClassificationTask):
        task = {"kind": CLASSIFICATION, "num_classes": net.task.num_classes}
    else:
        task = {"kind": REGRESSION, "noise_variance": net.task.sigma_y2}
    std = art.standardizer
    return {
        "format_version": ARTIFACT_VERSION,
        "kind": "model",
        "dataset": art.dataset_name,
        "mode": art.mode,
        "resampled_banks": art.resampled_banks,
        "eval_draws": int(art.eval_draws),
        "task": task,
        "prior_dof": float(net.prior_nu),
        "label_names": list(art.label_names),
        "layers": [
            {"input_dim": layer.d_in, "width": layer.out_width,
             "bank_size": layer.bank_size,
             "feature_posterior": _posterior_to_dict(layer.q_omega),
             "mixing_posterior": _posterior_to_dict(layer.q_w)}
            for layer in net.layers
        ],
        "frozen_banks": (None if art.frozen_banks is None
                         else [np.asarray(b).tolist()
                               for b in art.frozen_banks]),
        "standardizer": {
            "column_mean": std.column_mean.tolist(),
            "column_std": std.column_std.tolist(),
            "kept": [bool(k) for k in std.kept],
            "target_mean": std.target_mean,
            "target_std": std.target_std,
        },
    }


def artifact_from_dict(raw: dict) -> ModelArtifact:
    version = raw.get("format_version")
    if version != ARTIFACT_VERSION:
        raise ConfigError(
            f"unsupported model artifact version {version!r} "
            f"(this build reads version {ARTIFACT_VERSION})")
    task_raw = raw["task"]
    if task_raw["kind"] == CLASSIFICATION:
        task: Task = ClassificationTask(int(task_raw["num_classes"]))
    else:
        task = RegressionTask(float(task_raw["noise_variance"]))
    layers = []
    for lraw in raw["layers"]:
        layers.append(LayerParams(
            q_omega=_posterior_from_dict(lraw["feature_posterior"]),
            q_w=_posterior_from_dict(lraw["mixing_posterior"]),
            d_in=int(lraw["input_dim"]), out_width=int(lraw["width"]),
            bank_size=int(lraw["bank_size"])))
    net = Network(layers=tuple(layers), task=task,
                  prior_nu=float(raw["prior_dof"]))
    sraw = raw["standardizer"]
    standardizer = Standardizer(
        column_mean=np.asarray(sraw["column_mean"], dtype=float),
        column_std=np.asarray(sraw["column_std"], dtype=float),
        kept=np.asarray(sraw["kept"], dtype=bool),
        target_mean=sraw["target_mean"], target_std=sraw["target_std"])
    banks = raw.get("frozen_banks")
    if banks is not None:
        banks = [np.asarray(b, dtype=float) for b in banks]
    return ModelArtifact(
        network=net, mode=raw["mode"], frozen_banks=banks,
        standardizer=standardizer, dataset_name=raw.get("dataset", ""),
        label_names=tuple(raw.get("label_names", ())),
        eval_draws=int(raw.get("eval_draws", 100)),
        resampled_banks=bool(raw.get("resampled_banks", False)))


def save_artifact(path: str, art: ModelArtifact) -> None:
    _write_json(path, artifact_to_dict(art))


def load_artifact(path: str) -> ModelArtifact:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read model artifact {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"model artifact {path} is not valid JSON: {exc}") from exc
    return artifact_from_dict(raw)


def _write_json(path: str, payload: dict) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, allow_nan=True)
        fh.write("\n")


def report_to_dict(report: TrainReport) -> dict:
    def _series(arr):
        return [None if not np.isfinite(v) else float(v) for v in arr]
    return {
        "objective": _series(report.objective),
        "divergence": _series(report.divergence),
        "log_lik": _series(report.log_lik),
        "wall_time": float(report.wall_time),
        "epochs_run": int(report.epochs_run),
        "stopped_early": bool(report.stopped_early),
    }


# ---------------------------------------------------------------------------
# Single-repeat runner
# ---------------------------------------------------------------------------

class RepeatOutcome(NamedTuple):
    """One repeat of the protocol: its metric, baseline, and provenance."""

    repeat: int
    metric: Optional[float]
    baseline: Optional[float]
    split_hash: str
    seconds: float
    error: Optional[str]


def _train_one(cfg: ExperimentConfig, train_std: Dataset, fit_cfg: FitConfig,
               fit_seed: int):
    """Fit one model in the configured mode.

    Returns (network, report, banks-for-prediction): the prediction banks
    are the frozen training banks in 'rks-prior' mode and None otherwise
    (full mode and the resampling comparison both redraw at prediction).
    """
    widths = network_widths(cfg, train_std.n_features, train_std.n_classes)
    task = make_task(train_std, fit_cfg)
    if cfg.mode == MODE_FULL:
        net, report = fit(train_std, fit_cfg, widths, task=task)
        return net, report, None
    start = init_from_prior(widths, fit_cfg, task=task)
    if cfg.resample_prior_banks:
        net, report = fit(train_std, fit_cfg, start,
                          resample_prior_banks=True)
        return net, report, None
    banks = draw_prior_banks(RngStream(fit_seed).split(_BANK_STREAM), start)
    net, report = fit(train_std, fit_cfg, start, fixed_banks=banks)
    return net, report, banks


def _evaluate(net: Network, test_std: Dataset, cfg: ExperimentConfig,
              fit_seed: int, banks) -> float:
    eval_rng = RngStream(fit_seed).split(_EVAL_STREAM)
    out = forward_predict(test_std.features, net, eval_rng,
                          mc_rounds=cfg.eval_rounds,
                          k_draws=cfg.fit.k_eval, fixed_banks=banks)
    if test_std.task == CLASSIFICATION:
        return misclassification_rate(out.labels, test_std.targets)
    return rmse(out, test_std.targets)


def _baseline_metric(train_std: Dataset, test_std: Dataset) -> float:
    """Constant predictor fitted on train: mean target / majority class."""
    if test_std.task == CLASSIFICATION:
        counts = np.bincount(train_std.targets,
                             minlength=train_std.n_classes)
        majority = int(np.argmax(counts))
        return misclassification_rate(
            np.full(test_std.n_examples, majority), test_std.targets)
    center = float(np.mean(train_std.targets))
    return rmse(np.full(test_std.n_examples, center), test_std.targets)


def run_repeat(cfg: ExperimentConfig, ds: Dataset,
               repeat: int) -> RepeatOutcome:
    """Run one split of the protocol, catching per-repeat runtime failures."""
    started = time.perf_counter()
    split_hash = ""
    try:
        train, test = split(ds, cfg.split, repeat)
        split_hash = split_fingerprint(train, test)
        train_std, test_std, _ = _standardize(train, test)
        fit_seed = repeat_fit_seed(cfg.seed, repeat)
        fit_cfg = replace(cfg.fit, seed=fit_seed)
        net, _, banks = _train_one(cfg, train_std, fit_cfg, fit_seed)
        metric = _evaluate(net, test_std, cfg, fit_seed, banks)
        baseline = _baseline_metric(train_std, test_std)
    except (NumericsError, SplitError, DataError) as exc:
        return RepeatOutcome(
            repeat=repeat, metric=None, baseline=None,
            split_hash=split_hash,
            seconds=time.perf_counter() - started,
            error=f"{type(exc).__name__}: {exc}")
    return RepeatOutcome(repeat=repeat, metric=float(metric),
                         baseline=float(baseline), split_hash=split_hash,
                         seconds=time.perf_counter() - started, error=None)


def _standardize(train: Dataset, test: Dataset):
    fitted = fit_standardizer(train)
    return fitted.apply(train), fitted.apply(test), fitted


def _repeat_worker(payload):
    cfg, ds, repeat = payload
    return run_repeat(cfg, ds, repeat)


# ---------------------------------------------------------------------------
# Result rows and files
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResultRow:
    """Aggregated benchmark result for one (dataset, mode, shape) cell."""

    dataset: str
    mode: str
    layers: int
    hidden_width: int
    metric_name: str
    per_repeat: tuple
    baseline_per_repeat: tuple
    mean: Optional[float]
    std: Optional[float]
    baseline_mean: Optional[float]
    wall_clock_seconds: float
    split_hashes: tuple
    failures: tuple

    def __post_init__(self):
        values = [v for v in self.per_repeat if v is not None]
        if values:
            mean = float(np.mean(values))
            std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
            if (self.mean is None
                    or not math.isclose(self.mean, mean, rel_tol=1e-12,
                                        abs_tol=1e-12)
                    or self.std is None
                    or not math.isclose(self.std, std, rel_tol=1e-12,
                                        abs_tol=1e-12)):
                raise UsageError(
                    f"row mean/std ({self.mean}, {self.std}) inconsistent "
                    f"with per-repeat values (expected {mean}, {std})")
        elif self.mean is not None or self.std is not None:
            raise UsageError(
                "row has no successful repeats but carries mean/std")

    @property
    def n_failed(self) -> int:
        return len(self.failures)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset, "mode": self.mode,
            "layers": self.layers, "hidden_width": self.hidden_width,
            "metric": self.metric_name,
            "per_repeat": list(self.per_repeat),
            "baseline_per_repeat": list(self.baseline_per_repeat),
            "mean": self.mean, "std": self.std,
            "baseline_mean": self.baseline_mean,
            "wall_clock_seconds": self.wall_clock_seconds,
            "split_hashes": list(self.split_hashes),
            "failures": [list(f) for f in self.failures],
        }

    @staticmethod
    def from_dict(raw: dict) -> "ResultRow":
        return ResultRow(
            dataset=raw["dataset"], mode=raw["mode"],
            layers=int(raw["layers"]),
            hidden_width=int(raw["hidden_width"]),
            metric_name=raw["metric"],
            per_repeat=tuple(raw["per_repeat"]),
            baseline_per_repeat=tuple(raw["baseline_per_repeat"]),
            mean=raw["mean"], std=raw["std"],
            baseline_mean=raw["baseline_mean"],
            wall_clock_seconds=float(raw["wall_clock_seconds"]),
            split_hashes=tuple(raw["split_hashes"]),
            failures=tuple((int(i), str(m)) for i, m in raw["failures"]))


def row_from_outcomes(cfg: ExperimentConfig, metric_name: str,
                      outcomes: Sequence[RepeatOutcome]) -> ResultRow:
    outcomes = sorted(outcomes, key=lambda o: o.repeat)
    values = [o.metric for o in outcomes]
    baselines = [o.baseline for o in outcomes]
    good = [v for v in values if v is not None]
    good_base = [b for b in baselines if b is not None]
    mean = float(np.mean(good)) if good else None
    std = (float(np.std(good, ddof=1)) if len(good) > 1
           else (0.0 if good else None))
    return ResultRow(
        dataset=cfg.dataset_name, mode=cfg.mode, layers=cfg.layers,
        hidden_width=cfg.hidden_width, metric_name=metric_name,
        per_repeat=tuple(values), baseline_per_repeat=tuple(baselines),
        mean=mean, std=std,
        baseline_mean=float(np.mean(good_base)) if good_base else None,
        wall_clock_seconds=float(sum(o.seconds for o in outcomes)),
        split_hashes=tuple(o.split_hash for o in outcomes),
        failures=tuple((o.repeat, o.error) for o in outcomes
                       if o.error is not None))


def write_results(path: str, rows: Sequence[ResultRow],
                  extra: Optional[dict] = None) -> None:
    payload = {"format_version": RESULTS_VERSION,
               "rows": [row.to_dict() for row in rows]}
    if extra:
        payload.update(extra)
    _write_json(path, payload)


def read_results(path: str) -> list[ResultRow]:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    version = raw.get("format_version")
    if version != RESULTS_VERSION:
        raise ConfigError(
            f"unsupported results version {version!r} "
            f"(this build reads version {RESULTS_VERSION})")
    return [ResultRow.from_dict(r) for r in raw["rows"]]


# ---------------------------------------------------------------------------
# Protocol drivers
# ---------------------------------------------------------------------------

def run_benchmark(cfg: ExperimentConfig, jobs: int = 1,
                  dataset: Optional[Dataset] = None) -> ResultRow:
    """Run every repeat of the protocol and aggregate one result row.

    Repeats are pure functions of (config, dataset, repeat index), so with
    jobs > 1 they run in worker processes; the aggregated row is identical
    either way.
    """
    if jobs < 1:
        raise UsageError(f"jobs must be positive, got {jobs}")
    ds = dataset if dataset is not None else load_experiment_dataset(cfg)
    metric_name = ("misclassification" if ds.task == CLASSIFICATION
                   else "rmse")
    indices = list(range(cfg.split.repeats))
    if jobs == 1 or len(indices) == 1:
        outcomes = [run_repeat(cfg, ds, i) for i in indices]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_repeat_worker,
                                     [(cfg, ds, i) for i in indices]))
    return row_from_outcomes(cfg, metric_name, outcomes)


def run_ablation(cfg: ExperimentConfig, jobs: int = 1) -> list[ResultRow]:
    """Paired comparison: the full model vs. frozen prior-drawn banks.

    Both rows come from the same split permutations and the same per-repeat
    seeds; only the mode differs, so metric deltas are paired differences.
    """
    ds = load_experiment_dataset(cfg)
    rows = []
    for mode in (MODE_FULL, MODE_FROZEN_BANKS):
        mode_cfg = replace(cfg, mode=mode,
                           resample_prior_banks=(cfg.resample_prior_banks
                                                 and mode != MODE_FULL))
        rows.append(run_benchmark(mode_cfg, jobs=jobs, dataset=ds))
    if rows[0].split_hashes != rows[1].split_hashes:
        raise NumericsError(
            "paired modes saw different splits; the comparison is invalid")
    return rows


def grid_cells(cfg: ExperimentConfig, n_features: int):
    """The model-selection grid: every (layer count, width) combination."""
    widths = sorted({max(1, math.ceil(n_features * f / 4))
                     for f in (1, 2, 3, 4)})
    return [(layer_count, width)
            for layer_count in (2, 3, 4, 5) for width in widths]


def run_training(cfg: ExperimentConfig, repeat: int = 0):
    """Train one model on one split; returns (artifact, report, metrics).

    Failures propagate (a single run has no partial-failure semantics).
    """
    ds = load_experiment_dataset(cfg)
    train, test = split(ds, cfg.split, repeat)
    train_std, test_std, stdzr = _standardize(train, test)
    fit_seed = repeat_fit_seed(cfg.seed, repeat)
    fit_cfg = replace(cfg.fit, seed=fit_seed)
    net, report, banks = _train_one(cfg, train_std, fit_cfg, fit_seed)
    metric = _evaluate(net, test_std, cfg, fit_seed, banks)
    baseline = _baseline_metric(train_std, test_std)
    artifact = ModelArtifact(
        network=net, mode=cfg.mode, frozen_banks=banks,
        standardizer=stdzr, dataset_name=cfg.dataset_name,
        label_names=ds.label_names, eval_draws=cfg.fit.k_eval,
        resampled_banks=cfg.resample_prior_banks)
    metrics = {
        "metric": ("misclassification" if ds.task == CLASSIFICATION
                   else "rmse"),
        "test": float(metric),
        "baseline": float(baseline),
        "repeat": repeat,
        "fit_seed": fit_seed,
    }
    return artifact, report, metrics


def run_prediction(art: ModelArtifact, data_path: str, schema_path: str,
                   rounds: int, seed: int) -> dict:
    """Predict on a raw CSV with a saved model; returns predictions+metrics."""
    schema = read_schema(schema_path)
    ds = load_csv(data_path, schema)
    x = art.standardizer.transform_features(ds.features)
    rng = RngStream(int(seed))
    out = forward_predict(x, art.network, rng, mc_rounds=int(rounds),
                          k_draws=art.eval_draws,
                          fixed_banks=art.frozen_banks)
    result: dict = {"n_examples": ds.n_examples}
    if isinstance(art.network.task, ClassificationTask):
        labels = out.labels
        names = art.label_names or tuple(
            str(i) for i in range(art.network.task.num_classes))
        result.update({
            "kind": CLASSIFICATION,
            "labels": [int(v) for v in labels],
            "label_names": [names[int(v)] for v in labels],
            "probabilities": out.probabilities.tolist(),
            "misclassification": misclassification_rate(labels, ds.targets),
        })
    else:
        std_scale = np.asarray(out, dtype=float).reshape(ds.n_examples, -1)
        raw_scale = art.standardizer.inverse_targets(std_scale)
        y_std = art.standardizer.transform_targets(ds.targets)
        flat = std_scale.shape[1] == 1
        result.update({
            "kind": REGRESSION,
            "predictions_standardized": (std_scale[:, 0] if flat
                                         else std_scale).tolist(),
            "predictions": (raw_scale[:, 0] if flat else raw_scale).tolist(),
            "rmse_standardized": rmse(std_scale if not flat
                                      else std_scale[:, 0], y_std),
        })
    return result


# ---------------------------------------------------------------------------
# Built-in numerical selfcheck
# ---------------------------------------------------------------------------

def run_selfcheck(fast: bool = True) -> list[tuple[str, bool, str]]:
    """Small built-in property suite; returns (name, passed, detail) rows."""
    from scipy.integrate import quad

    from .tdist import draw_noise, escort, pdf, reparam_sample
    from .tdivergence import dt_closed, dt_quadrature, t_of
    from .training import adam_init, adam_step

    checks: list[tuple[str, bool, str]] = []
    rng = np.random.default_rng(20260816)

    # closed form vs. quadrature at matched dof
    n_cases = 25 if fast else 200
    worst = 0.0
    for _ in range(n_cases):
        q = DiagStudentT([rng.uniform(-3, 3)], [rng.uniform(0.1, 10.0)], 2.1)
        closed = dt_closed(q, 2.1).total
        quad_val = dt_quadrature(q, DiagStudentT([0.0], [1.0], 2.1),
                                 t_of(q.nu))
        scale = max(abs(closed), abs(quad_val), 1e-12)
        worst = max(worst, abs(closed - quad_val) / scale)
    checks.append(("divergence closed form vs quadrature (matched dof)",
                   worst < 1e-4, f"worst relative gap {worst:.3e} "
                                 f"over {n_cases} cases"))

    # escort density normalization
    worst = 0.0
    for nu in (0.5, 2.1, 5.0, 50.0):
        dist = DiagStudentT([0.3], [1.7], nu)
        esc = escort(dist)
        total, _ = quad(lambda v: float(pdf(np.array([v]), esc)),
                        -np.inf, np.inf)
        worst = max(worst, abs(total - 1.0))
    checks.append(("escort density integrates to one",
                   worst < 1e-6, f"worst normalization gap {worst:.3e}"))

    # escort reparameterization variance.  The draw's variance is sigma^2
    # exactly for every dof, but at dof 0.5 the noise (dof 2.5) has an
    # infinite fourth moment, so the empirical variance converges only
    # like n^(-0.2) — that leg gets a correspondingly loose bound.
    n_samples = 200_000 if fast else 1_000_000
    stream = RngStream(7)
    worst_light = worst_heavy = 0.0
    for nu in (0.5, 2.1, 10.0):
        dist = DiagStudentT([0.0], [2.5], nu)
        eps = draw_noise(stream, dist, n_samples)
        samples = reparam_sample(dist, eps)
        err = abs(float(np.var(samples)) - 2.5) / 2.5
        if nu < 2.0:
            worst_heavy = max(worst_heavy, err)
        else:
            worst_light = max(worst_light, err)
    ok = worst_light < (0.05 if fast else 0.02) and worst_heavy < 0.35
    checks.append(("escort reparameterization variance",
                   ok,
                   f"relative variance error {worst_light:.3%} (dof >= 2), "
                   f"{worst_heavy:.3%} (dof 0.5, slow-converging estimator) "
                   f"at {n_samples} samples"))

    # Gaussian limit of the heavy-tailed pdf
    grid = np.linspace(-5.0, 5.0, 2001)
    heavy = DiagStudentT([0.0], [1.0], 1e6)
    gap = max(abs(float(pdf(np.array([v]), heavy))
                  - math.exp(-0.5 * v * v) / math.sqrt(2 * math.pi))
              for v in grid)
    checks.append(("density approaches the Gaussian at huge dof",
                   gap < 1e-5, f"sup-norm gap {gap:.3e} on [-5, 5]"))

    # optimizer first steps on a frozen toy problem (constant unit gradient)
    params = [np.array([1.0])]
    state = adam_init(params)
    cfg = FitConfig(epochs=1, learning_rate=1e-3)
    seen = []
    for _ in range(3):
        params, state = adam_step(params, [np.array([1.0])], state, cfg)
        seen.append(float(params[0][0]) - 1.0)
    expected = [-0.0009999999900000001, -0.0019999999800000002,
                -0.0029999999700000003]
    ok = all(math.isclose(a, b, rel_tol=1e-12)
             for a, b in zip(seen, expected))
    checks.append(("optimizer bias-corrected step trace", ok,
                   f"first steps {seen}"))
    return checks
