"""Core data model, CSV ingestion, and column transforms.

A :class:`Dataset` bundles the outcome vector, the exposure (binary flags,
category labels 1..J, or real doses), and the covariate matrix. Instances
are immutable after construction so they can be shared freely across
concurrent estimator runs.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, DomainError, ParseError, SchemaError

BINARY = "binary"
CATEGORICAL = "categorical"
CONTINUOUS = "continuous"

_MISSING_MARKERS = {"", "na", "nan", "n/a", "null"}
_TRANSFORMS = ("identity", "log10", "ln")


@dataclass(frozen=True)
class ExposureKind:
    """Exposure regime tag: binary, categorical with J levels, or continuous."""

    tag: str
    n_levels: int | None = None

    def __post_init__(self):
        if self.tag not in (BINARY, CATEGORICAL, CONTINUOUS):
            raise ArgumentError(f"unknown exposure kind {self.tag!r}")
        if self.tag == CATEGORICAL:
            if self.n_levels is None or self.n_levels < 3:
                raise ArgumentError(
                    "categorical exposure needs at least 3 levels; use the binary tag for 2"
                )
        elif self.n_levels is not None:
            raise ArgumentError(f"{self.tag} exposure does not take a level count")

    @classmethod
    def binary(cls) -> "ExposureKind":
        return cls(BINARY)

    @classmethod
    def categorical(cls, n_levels: int) -> "ExposureKind":
        return cls(CATEGORICAL, int(n_levels))

    @classmethod
    def continuous(cls) -> "ExposureKind":
        return cls(CONTINUOUS)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Dataset:
    """Immutable unit-level observational record (y, exposure, covariates)."""

    y: np.ndarray
    exposure: np.ndarray
    covariates: np.ndarray
    column_names: tuple[str, ...]
    kind: ExposureKind
    exposure_labels: tuple | None = None  # original categorical codes, index j-1 -> label

    def __post_init__(self):
        y = _readonly(np.asarray(self.y, dtype=float).ravel())
        z = _readonly(np.asarray(self.exposure, dtype=float).ravel())
        X = np.asarray(self.covariates, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        X = _readonly(X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "exposure", z)
        object.__setattr__(self, "covariates", X)
        object.__setattr__(self, "column_names", tuple(self.column_names))

        n = y.shape[0]
        if n < 1:
            raise ArgumentError("dataset must contain at least one observation")
        if z.shape[0] != n or X.shape[0] != n:
            raise ArgumentError("y, exposure, and covariate rows must have equal length")
        if len(self.column_names) != X.shape[1]:
            raise ArgumentError("one column name per covariate is required")
        for name, arr in (("y", y), ("exposure", z), ("covariates", X)):
            if not np.all(np.isfinite(arr)):
                raise ArgumentError(f"non-finite values in {name}")

        if self.kind.tag == BINARY:
            if not np.all((z == 0.0) | (z == 1.0)):
                raise ArgumentError("binary exposure must contain only 0/1 values")
        elif self.kind.tag == CATEGORICAL:
            levels = np.unique(z)
            expected = np.arange(1, self.kind.n_levels + 1, dtype=float)
            if levels.shape != expected.shape or not np.all(levels == expected):
                raise ArgumentError(
                    f"categorical exposure must use contiguous labels 1..{self.kind.n_levels} "
                    "with every level observed"
                )

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    def take(self, indices) -> "Dataset":
        """Row subset/resample; revalidates invariants (a resample may lose a level)."""
        idx = np.asarray(indices, dtype=int)
        return Dataset(
            y=self.y[idx],
            exposure=self.exposure[idx],
            covariates=self.covariates[idx],
            column_names=self.column_names,
            kind=self.kind,
            exposure_labels=self.exposure_labels,
        )


@dataclass(frozen=True)
class ColumnSchema:
    """Mapping from CSV columns to dataset roles."""

    outcome: str
    exposure: str
    covariates: tuple[str, ...]
    exposure_kind: str = CONTINUOUS

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        if self.exposure_kind not in (BINARY, CATEGORICAL, CONTINUOUS):
            raise ArgumentError(f"unknown exposure kind {self.exposure_kind!r}")


@dataclass
class LoadReport:
    """What happened during ingestion; serialisable for run manifests."""

    path: str
    rows_read: int
    rows_dropped_missing: int
    n: int
    transforms: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)


def _apply_transform(values: np.ndarray, transform: str, column: str) -> np.ndarray:
    if transform == "identity":
        return values
    if np.any(values <= 0.0):
        bad = int(np.argmax(values <= 0.0))
        raise DomainError(
            f"{transform} transform on column {column!r}: non-positive value "
            f"{values[bad]} at data row {bad + 1}"
        )
    return np.log10(values) if transform == "log10" else np.log(values)


def load_csv(path, schema: ColumnSchema, transforms: dict | None = None):
    """Read an RFC-4180 CSV into a Dataset.

    Rows with a missing value in any mapped column are dropped (complete
    case) and counted in the returned :class:`LoadReport`. A non-empty cell
    that does not parse as a finite number raises :class:`ParseError` with
    its row index.

    Returns
    -------
    (Dataset, LoadReport)
    """
    transforms = dict(transforms or {})
    for col, t in transforms.items():
        if t not in _TRANSFORMS:
            raise ArgumentError(f"unknown transform {t!r} for column {col!r}")

    mapped = [schema.outcome, schema.exposure, *schema.covariates]
    if len(set(mapped)) != len(mapped):
        raise SchemaError("schema maps the same column to more than one role")

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row required") from None
        header = [h.strip() for h in header]
        missing_cols = [c for c in mapped if c not in header]
        if missing_cols:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing_cols)}")
        positions = {c: header.index(c) for c in mapped}

        columns: dict[str, list[float]] = {c: [] for c in mapped}
        rows_read = 0
        dropped = 0
        for i, row in enumerate(reader, start=1):
            if not row:
                continue
            rows_read += 1
            cells = {}
            skip = False
            for col, pos in positions.items():
                raw = row[pos].strip() if pos < len(row) else ""
                if raw.lower() in _MISSING_MARKERS:
                    skip = True
                    break
                try:
                    value = float(raw)
                except ValueError:
                    raise ParseError(
                        f"{path}: non-numeric value {raw!r} in column {col!r} at data row {i}"
                    ) from None
                if not math.isfinite(value):
                    raise ParseError(
                        f"{path}: non-finite value {raw!r} in column {col!r} at data row {i}"
                    )
                cells[col] = value
            if skip:
                dropped += 1
                continue
            for col, value in cells.items():
                columns[col].append(value)

    n = len(columns[schema.outcome])
    if n == 0:
        raise SchemaError(f"{path}: no complete data rows")

    arrays = {c: np.asarray(v, dtype=float) for c, v in columns.items()}
    for col, t in transforms.items():
        if col not in arrays:
            raise ArgumentError(f"transform given for unmapped column {col!r}")
        arrays[col] = _apply_transform(arrays[col], t, col)

    z = arrays[schema.exposure]
    labels = None
    if schema.exposure_kind == BINARY:
        if not np.all((z == 0.0) | (z == 1.0)):
            raise SchemaError(
                f"exposure column {schema.exposure!r} is not 0/1; "
                "declare it categorical or continuous"
            )
        kind = ExposureKind.binary()
    elif schema.exposure_kind == CATEGORICAL:
        # Re-code to 1..J in order of first appearance; keep the originals.
        seen: dict[float, int] = {}
        coded = np.empty_like(z)
        for i, v in enumerate(z):
            if v not in seen:
                seen[v] = len(seen) + 1
            coded[i] = seen[v]
        if len(seen) < 3:
            raise SchemaError(
                f"categorical exposure column {schema.exposure!r} has only "
                f"{len(seen)} observed level(s); use the binary kind for 2"
            )
        labels = tuple(seen.keys())
        z = coded
        kind = ExposureKind.categorical(len(seen))
    else:
        kind = ExposureKind.continuous()

    X = np.column_stack([arrays[c] for c in schema.covariates]) if schema.covariates else \
        np.empty((n, 0))
    dataset = Dataset(
        y=arrays[schema.outcome],
        exposure=z,
        covariates=X,
        column_names=schema.covariates,
        kind=kind,
        exposure_labels=labels,
    )
    report = LoadReport(
        path=str(path),
        rows_read=rows_read,
        rows_dropped_missing=dropped,
        n=n,
        transforms=transforms,
    )
    return dataset, report


def _fmt(v: float) -> str:
    # 17 significant digits round-trip any finite double exactly.
    return format(float(v), ".17g")


def write_csv(dataset: Dataset, path) -> None:
    """Write a dataset with header ``y,z,<covariate names>``."""
    integral = dataset.kind.tag in (BINARY, CATEGORICAL)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y", "z", *dataset.column_names])
        for i in range(dataset.n):
            z = dataset.exposure[i]
            writer.writerow(
                [_fmt(dataset.y[i]), str(int(z)) if integral else _fmt(z)]
                + [_fmt(v) for v in dataset.covariates[i]]
            )


def schema_for_written(dataset: Dataset) -> ColumnSchema:
    """Schema that re-loads a file produced by :func:`write_csv`."""
    return ColumnSchema(
        outcome="y",
        exposure="z",
        covariates=dataset.column_names,
        exposure_kind=dataset.kind.tag,
    )


@dataclass(frozen=True)
class SummaryRow:
    group: str
    column: str
    n: int
    mean: float
    sd: float


def summarize(dataset: Dataset, group_by=None) -> list[SummaryRow]:
    """Per-group mean and SD (n-1 denominator) of every numeric column.

    ``group_by`` is ``None`` (single group), ``"exposure"`` (one group per
    binary/categorical level), or an increasing sequence of bin edges for a
    continuous exposure. Empty groups are excluded with a warning.
    """
    if group_by is None:
        groups = [("all", np.ones(dataset.n, dtype=bool))]
    elif isinstance(group_by, str) and group_by == "exposure":
        if dataset.kind.tag == CONTINUOUS:
            raise ArgumentError("continuous exposure needs explicit bin edges to group by")
        levels = np.unique(dataset.exposure)
        groups = [(f"z={int(lv)}", dataset.exposure == lv) for lv in levels]
    else:
        edges = np.asarray(group_by, dtype=float)
        if edges.ndim != 1 or edges.shape[0] < 2 or np.any(np.diff(edges) <= 0):
            raise ArgumentError("bin edges must be an increasing sequence of length >= 2")
        groups = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            mask = (dataset.exposure > lo) & (dataset.exposure <= hi)
            groups.append((f"z in ({_fmt(lo)}, {_fmt(hi)}]", mask))

    columns = [("y", dataset.y)]
    if dataset.kind.tag == CONTINUOUS:
        columns.append(("z", dataset.exposure))
    columns += [(name, dataset.covariates[:, j]) for j, name in enumerate(dataset.column_names)]

    rows: list[SummaryRow] = []
    for label, mask in groups:
        m = int(mask.sum())
        if m == 0:
            warnings.warn(f"summarize: empty group {label!r} excluded", stacklevel=2)
            continue
        for name, values in columns:
            v = values[mask]
            sd = float(np.std(v, ddof=1)) if m > 1 else float("nan")
            rows.append(SummaryRow(group=label, column=name, n=m, mean=float(np.mean(v)), sd=sd))
    return rows
