"""CSV ingestion, standardization, repeated random splits, and metrics.

The loading path is deliberately strict — comma-delimited numeric fields,
an optional single header line, no quoting — and every failure names the
file row (1-based physical line) and column involved, because benchmark
configs point at user-supplied files.

Inputs and regression targets are z-scored with statistics from the
training split only, and regression error is reported on the standardized
target scale; constant feature columns carry no information and are
dropped with a warning.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataError, SplitError, UsageError
from .rng import RngStream

REGRESSION = "regression"
CLASSIFICATION = "classification"
TASKS = (REGRESSION, CLASSIFICATION)


class ConstantColumnWarning(UserWarning):
    """A feature column with zero variance was dropped during fitting."""


# ---------------------------------------------------------------------------
# Core containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Dataset:
    """Immutable feature matrix plus aligned targets.

    Regression targets are floats (one or more output dimensions);
    classification targets are contiguous class indices, with
    ``label_names[i]`` recording the original file token for index ``i``.
    """

    features: np.ndarray
    targets: np.ndarray
    feature_names: tuple[str, ...]
    task: str
    label_names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.task not in TASKS:
            raise UsageError(f"task must be one of {TASKS}, got {self.task!r}")
        feats = np.array(self.features, dtype=float)
        if feats.ndim != 2:
            raise UsageError(f"features must be a 2-d matrix, got shape {feats.shape}")
        if self.task == CLASSIFICATION:
            targets = np.array(self.targets)
            if targets.ndim != 1:
                raise UsageError(
                    f"class targets must be a 1-d vector, got shape {targets.shape}"
                )
            if targets.size and not np.issubdtype(targets.dtype, np.integer):
                rounded = np.asarray(targets, dtype=float).astype(int)
                if not np.array_equal(rounded, np.asarray(targets, dtype=float)):
                    raise UsageError("class targets must be integer indices")
                targets = rounded
            targets = targets.astype(int)
        else:
            targets = np.array(self.targets, dtype=float)
            if targets.ndim not in (1, 2):
                raise UsageError(
                    f"regression targets must be 1-d or 2-d, got shape {targets.shape}"
                )
        if feats.shape[0] != targets.shape[0]:
            raise UsageError(
                f"feature rows ({feats.shape[0]}) and target rows "
                f"({targets.shape[0]}) disagree"
            )
        names = tuple(str(n) for n in self.feature_names)
        if len(names) != feats.shape[1]:
            raise UsageError(
                f"{len(names)} feature names for {feats.shape[1]} columns"
            )
        labels = tuple(str(n) for n in self.label_names)
        if self.task == CLASSIFICATION:
            if not labels:
                top = int(targets.max()) if targets.size else -1
                labels = tuple(str(i) for i in range(top + 1))
            if targets.size and (targets.min() < 0 or targets.max() >= len(labels)):
                raise UsageError(
                    f"class indices must lie in [0, {len(labels)}), got range "
                    f"[{targets.min()}, {targets.max()}]"
                )
        feats.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "label_names", labels)

    @property
    def n_examples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.label_names) if self.task == CLASSIFICATION else 0

    def take(self, rows) -> "Dataset":
        """Row subset (by index array) preserving all metadata."""
        rows = np.asarray(rows, dtype=int)
        return Dataset(
            features=self.features[rows],
            targets=self.targets[rows],
            feature_names=self.feature_names,
            task=self.task,
            label_names=self.label_names,
        )


@dataclass(frozen=True)
class DatasetSchema:
    """Which column holds the target, and how to interpret it.

    ``label_map`` (classification only) pins original label tokens to class
    indices; when absent, tokens are enumerated in sorted order.
    """

    target_column: str | int
    task: str
    label_map: dict | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise DataError(f"schema task must be one of {TASKS}, got {self.task!r}")
        if not isinstance(self.target_column, (str, int)) or isinstance(
            self.target_column, bool
        ):
            raise DataError(
                f"target column must be a name or integer index, got "
                f"{self.target_column!r}"
            )
        if self.label_map is not None:
            if self.task != CLASSIFICATION:
                raise DataError("label map only applies to classification schemas")
            values = sorted(self.label_map.values())
            if values != list(range(len(values))):
                raise DataError(
                    f"label map values must be contiguous indices 0..{len(values) - 1}, "
                    f"got {values}"
                )

    def label_names_in_order(self) -> tuple[str, ...]:
        assert self.label_map is not None
        by_index = sorted(self.label_map.items(), key=lambda kv: kv[1])
        return tuple(str(token) for token, _ in by_index)


_SCHEMA_KEYS = {"target_column", "task", "positive_label_map"}


def read_schema(path) -> DatasetSchema:
    """Parse a JSON schema descriptor with keys
    {target_column, task, positive_label_map (optional)}."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read schema file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"schema file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise DataError(f"schema file {path} must hold a JSON object")
    unknown = set(raw) - _SCHEMA_KEYS
    if unknown:
        raise DataError(
            f"schema file {path} has unknown keys {sorted(unknown)}; "
            f"allowed: {sorted(_SCHEMA_KEYS)}"
        )
    for key in ("target_column", "task"):
        if key not in raw:
            raise DataError(f"schema file {path} is missing required key {key!r}")
    return DatasetSchema(
        target_column=raw["target_column"],
        task=raw["task"],
        label_map=raw.get("positive_label_map"),
    )


# ---------------------------------------------------------------------------
# CSV loading
# ---------------------------------------------------------------------------

def _column_label(index: int, header: list[str] | None) -> str:
    if header is not None:
        return f"{index + 1} ({header[index]!r})"
    return str(index + 1)


def load_csv(path, schema: DatasetSchema) -> Dataset:
    """Load a comma-delimited numeric table and pull out the target column.

    Raises DataError with row/column diagnostics on missing files, ragged
    rows, non-numeric cells, or an unresolvable target column.
    """
    if not isinstance(schema, DatasetSchema):
        raise UsageError(f"schema must be a DatasetSchema, got {type(schema).__name__}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read dataset file {path}: {exc}") from exc

    lines = text.split("\n")
    while lines and lines[-1].strip() == "":
        lines.pop()
    rows: list[tuple[int, list[str]]] = []  # (1-based physical line, cells)
    for lineno, line in enumerate(lines, start=1):
        if line.strip() == "":
            raise DataError(f"{path}: row {lineno} is empty")
        rows.append((lineno, [cell.strip() for cell in line.split(",")]))
    if not rows:
        raise DataError(f"{path}: file contains no rows")

    width = len(rows[0][1])
    for lineno, cells in rows:
        if len(cells) != width:
            raise DataError(
                f"{path}: row {lineno} has {len(cells)} fields, expected {width}"
            )
    if width < 2:
        raise DataError(
            f"{path}: need at least two columns (features plus target), got {width}"
        )

    header, data_rows = _resolve_header(path, rows, schema, width)
    target_index = _resolve_target(path, header, schema, width)
    if not data_rows:
        raise DataError(f"{path}: no data rows after the header")

    if header is not None:
        feature_names = tuple(
            header[j] for j in range(width) if j != target_index
        )
    else:
        feature_names = tuple(f"x{j}" for j in range(width) if j != target_index)

    n = len(data_rows)
    features = np.empty((n, width - 1), dtype=float)
    raw_targets: list[str] = []
    for i, (lineno, cells) in enumerate(data_rows):
        k = 0
        for j, cell in enumerate(cells):
            if j == target_index:
                raw_targets.append(cell)
                continue
            try:
                features[i, k] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric value {cell!r} at row {lineno}, "
                    f"column {_column_label(j, header)}"
                ) from None
            k += 1

    if schema.task == REGRESSION:
        targets = np.empty(n, dtype=float)
        for i, ((lineno, _), cell) in enumerate(zip(data_rows, raw_targets)):
            try:
                targets[i] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric target {cell!r} at row {lineno}, "
                    f"column {_column_label(target_index, header)}"
                ) from None
        return Dataset(features, targets, feature_names, REGRESSION)

    label_names, indices = _map_labels(path, schema, data_rows, raw_targets)
    return Dataset(features, indices, feature_names, CLASSIFICATION, label_names)


def _resolve_header(path, rows, schema, width):
    """Decide whether row 1 is a header; return (header or None, data rows)."""
    first_cells = rows[0][1]
    if isinstance(schema.target_column, str):
        # A named target requires a header line to resolve against.
        header = first_cells
        return header, rows[1:]
    # Integer target index: row 1 is data iff every non-target cell parses
    # as a number (the target cell may legitimately be a class token).
    target = schema.target_column
    for j, cell in enumerate(first_cells):
        if j == target:
            continue
        try:
            float(cell)
        except ValueError:
            return first_cells, rows[1:]
    return None, rows


def _resolve_target(path, header, schema, width) -> int:
    if isinstance(schema.target_column, str):
        assert header is not None
        matches = [j for j, name in enumerate(header) if name == schema.target_column]
        if not matches:
            raise DataError(
                f"{path}: unknown target column {schema.target_column!r}; "
                f"header has {header}"
            )
        if len(matches) > 1:
            raise DataError(
                f"{path}: target column {schema.target_column!r} appears "
                f"{len(matches)} times in the header"
            )
        return matches[0]
    index = schema.target_column
    if not 0 <= index < width:
        raise DataError(
            f"{path}: target column index {index} out of range for {width} columns"
        )
    return index


def _map_labels(path, schema, data_rows, raw_targets):
    """Map class tokens to contiguous indices, recording the order."""
    if schema.label_map is not None:
        label_names = schema.label_names_in_order()
        token_to_index = {str(k): v for k, v in schema.label_map.items()}
        indices = np.empty(len(raw_targets), dtype=int)
        for i, ((lineno, _), token) in enumerate(zip(data_rows, raw_targets)):
            if token not in token_to_index:
                raise DataError(
                    f"{path}: label {token!r} at row {lineno} is not in the "
                    f"schema label map {sorted(token_to_index)}"
                )
            indices[i] = token_to_index[token]
        return label_names, indices
    tokens = sorted(set(raw_targets))
    try:
        tokens.sort(key=float)  # numeric tokens order numerically ("2" < "10")
    except ValueError:
        pass
    token_to_index = {tok: i for i, tok in enumerate(tokens)}
    indices = np.array([token_to_index[t] for t in raw_targets], dtype=int)
    return tuple(tokens), indices


# ---------------------------------------------------------------------------
# Repeated random splits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    """How to carve repeated train/test splits out of one dataset."""

    base_seed: int
    train_fraction: float = 0.9
    repeats: int = 20

    def __post_init__(self):
        if not isinstance(self.base_seed, (int, np.integer)) or isinstance(
            self.base_seed, bool
        ):
            raise UsageError(f"base seed must be an integer, got {self.base_seed!r}")
        if not (0.0 < self.train_fraction < 1.0):
            raise UsageError(
                f"train fraction must lie strictly between 0 and 1, got "
                f"{self.train_fraction}"
            )
        if not isinstance(self.repeats, (int, np.integer)) or self.repeats < 1:
            raise UsageError(f"repeats must be a positive count, got {self.repeats!r}")


def split(ds: Dataset, spec: SplitSpec, repeat_index: int):
    """Deterministic (train, test) pair for one repeat.

    The permutation depends only on (base_seed, repeat_index), so repeats
    can be evaluated in parallel and different model variants can be paired
    on identical splits.  Classification splits are stratified: each class
    contributes train rows in proportion to its share, within one example.
    """
    if (
        not isinstance(repeat_index, (int, np.integer))
        or isinstance(repeat_index, bool)
        or repeat_index < 0
    ):
        raise UsageError(f"repeat index must be a nonnegative integer, got {repeat_index!r}")
    if repeat_index >= spec.repeats:
        raise UsageError(
            f"repeat index {repeat_index} out of range for {spec.repeats} repeats"
        )
    n = ds.n_examples
    if n < 2:
        raise SplitError(f"need at least two examples to split, dataset has {n}")
    n_train = math.ceil(spec.train_fraction * n)
    gen = RngStream(int(spec.base_seed)).split(int(repeat_index)).generator
    perm = gen.permutation(n)
    if ds.task == CLASSIFICATION:
        train_rows, test_rows = _stratified_rows(ds, perm, n_train)
    else:
        train_rows, test_rows = perm[:n_train], perm[n_train:]
    if len(train_rows) == 0 or len(test_rows) == 0:
        raise SplitError(
            f"split of {n} examples at fraction {spec.train_fraction} leaves "
            f"{len(train_rows)} train / {len(test_rows)} test rows"
        )
    return ds.take(train_rows), ds.take(test_rows)


def _stratified_rows(ds: Dataset, perm: np.ndarray, n_train: int):
    """Largest-remainder allocation of train rows across classes."""
    labels = ds.targets
    n = labels.size
    classes = np.unique(labels)
    counts = {int(c): int(np.sum(labels == c)) for c in classes}
    quota = {c: n_train * counts[c] / n for c in counts}
    alloc = {c: math.floor(quota[c]) for c in counts}
    leftover = n_train - sum(alloc.values())
    by_remainder = sorted(counts, key=lambda c: (-(quota[c] - alloc[c]), c))
    for c in by_remainder:
        if leftover == 0:
            break
        if alloc[c] < counts[c]:
            alloc[c] += 1
            leftover -= 1
    for c in sorted(counts):
        if counts[c] > 0 and alloc[c] == 0:
            raise SplitError(
                f"class {ds.label_names[c]!r} would be absent from the training "
                f"split ({counts[c]} example(s), fraction {n_train / n:.3f})"
            )
    train_parts, test_parts = [], []
    for c in sorted(counts):
        rows_c = perm[labels[perm] == c]
        train_parts.append(rows_c[: alloc[c]])
        test_parts.append(rows_c[alloc[c]:])
    return np.concatenate(train_parts), np.concatenate(test_parts)


# ---------------------------------------------------------------------------
# Standardization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Standardizer:
    """Per-column z-scoring parameters, fitted on a training split only.

    ``column_mean``/``column_std`` cover every original feature column;
    ``kept`` marks columns with nonzero variance.  Dropped columns are
    reconstructed from their (constant) mean on inversion, so
    transform-then-invert is the identity on the fitting data.
    """

    column_mean: np.ndarray
    column_std: np.ndarray
    kept: np.ndarray
    target_mean: float | None = None
    target_std: float | None = None

    @property
    def n_kept(self) -> int:
        return int(np.sum(self.kept))

    def transform_features(self, features: np.ndarray) -> np.ndarray:
        x = np.asarray(features, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.column_mean.size:
            raise UsageError(
                f"expected a matrix with {self.column_mean.size} columns, got "
                f"shape {np.shape(features)}"
            )
        kept = self.kept
        return (x[:, kept] - self.column_mean[kept]) / self.column_std[kept]

    def inverse_features(self, standardized: np.ndarray) -> np.ndarray:
        z = np.asarray(standardized, dtype=float)
        if z.ndim != 2 or z.shape[1] != self.n_kept:
            raise UsageError(
                f"expected a matrix with {self.n_kept} columns, got shape "
                f"{np.shape(standardized)}"
            )
        full = np.tile(self.column_mean, (z.shape[0], 1))
        kept = self.kept
        full[:, kept] = z * self.column_std[kept] + self.column_mean[kept]
        return full

    def transform_targets(self, targets: np.ndarray) -> np.ndarray:
        if self.target_mean is None:
            raise UsageError("this standardizer was fitted without target statistics")
        return (np.asarray(targets, dtype=float) - self.target_mean) / self.target_std

    def inverse_targets(self, standardized: np.ndarray) -> np.ndarray:
        if self.target_mean is None:
            raise UsageError("this standardizer was fitted without target statistics")
        return np.asarray(standardized, dtype=float) * self.target_std + self.target_mean

    def apply(self, ds: Dataset) -> Dataset:
        """Standardized copy of a dataset (targets too, for regression)."""
        feats = self.transform_features(ds.features)
        names = tuple(
            name for name, keep in zip(ds.feature_names, self.kept) if keep
        )
        if ds.task == REGRESSION and self.target_mean is not None:
            targets = self.transform_targets(ds.targets)
        else:
            targets = ds.targets
        return Dataset(feats, targets, names, ds.task, ds.label_names)


def fit_standardizer(train: Dataset) -> Standardizer:
    """Fit z-scoring parameters on a training split.

    Constant feature columns are dropped with a ConstantColumnWarning;
    regression targets get their own mean/std (constant targets are an
    error — there is nothing to predict on a standardized scale).
    """
    x = train.features
    if x.shape[0] < 2:
        raise UsageError(
            f"need at least two rows to fit a standardizer, got {x.shape[0]}"
        )
    constant = np.all(x == x[:1, :], axis=0)
    if constant.any():
        dropped = [
            name for name, c in zip(train.feature_names, constant) if c
        ]
        warnings.warn(
            f"dropping constant feature column(s): {dropped}",
            ConstantColumnWarning,
            stacklevel=2,
        )
    kept = ~constant
    if not kept.any():
        raise DataError("every feature column is constant; nothing to standardize")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    target_mean = target_std = None
    if train.task == REGRESSION:
        y = np.asarray(train.targets, dtype=float)
        target_mean = float(y.mean())
        target_std = float(y.std())
        if target_std == 0.0:
            raise DataError("regression targets are constant; cannot standardize them")
    mean.setflags(write=False)
    std.setflags(write=False)
    kept.setflags(write=False)
    return Standardizer(mean, std, kept, target_mean, target_std)


def standardize_pair(train: Dataset, test: Dataset):
    """Fit on the training split, apply to both; returns (train, test, fit)."""
    fitted = fit_standardizer(train)
    return fitted.apply(train), fitted.apply(test), fitted


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def rmse(predictions, truth) -> float:
    """Root mean squared error over all examples and output dimensions."""
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(truth, dtype=float)
    if p.ndim == 1:
        p = p[:, None]
    if t.ndim == 1:
        t = t[:, None]
    if p.ndim != 2 or t.ndim != 2:
        raise UsageError(
            f"predictions and truth must be vectors or matrices, got shapes "
            f"{np.shape(predictions)} and {np.shape(truth)}"
        )
    if p.shape[0] != t.shape[0]:
        raise UsageError(
            f"prediction count {p.shape[0]} does not match truth count {t.shape[0]}"
        )
    if p.shape != t.shape:
        raise UsageError(
            f"prediction dims {p.shape[1]} do not match truth dims {t.shape[1]}"
        )
    return float(np.sqrt(np.mean((p - t) ** 2)))


def misclassification_rate(pred_labels, true_labels) -> float:
    """Fraction of label disagreements."""
    p = np.asarray(pred_labels)
    t = np.asarray(true_labels)
    if p.ndim != 1 or t.ndim != 1:
        raise UsageError(
            f"labels must be 1-d vectors, got shapes {p.shape} and {t.shape}"
        )
    if p.shape[0] != t.shape[0]:
        raise UsageError(
            f"prediction count {p.shape[0]} does not match truth count {t.shape[0]}"
        )
    if p.shape[0] == 0:
        raise UsageError("cannot score zero examples")
    return float(np.mean(p != t))
