"""Record schema, CSV persistence, splitting and descriptive statistics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CsvParseError, DataError, EmptyDatasetError

FEATURES = (
    "x_coord",
    "y_coord",
    "distance",
    "pathloss",
    "doa_phi",
    "doa_theta",
    "dod_phi",
    "dod_theta",
    "phase",
    "power",
    "time_of_arrival",
    "los",
)
TARGET = "pathloss"
TARGET_INDEX = FEATURES.index(TARGET)
LOS_INDEX = FEATURES.index("los")
# regression inputs: every column except the target
INPUT_FEATURES = tuple(f for f in FEATURES if f != TARGET)
INPUT_INDEX = np.array([FEATURES.index(f) for f in INPUT_FEATURES])


@dataclass(frozen=True)
class Record:
    x_coord: float
    y_coord: float
    distance: float
    pathloss: float
    doa_phi: float
    doa_theta: float
    dod_phi: float
    dod_theta: float
    phase: float
    power: float
    time_of_arrival: float
    los: int

    def to_array(self) -> np.ndarray:
        return np.array([float(getattr(self, f)) for f in FEATURES])

    @classmethod
    def from_array(cls, values) -> "Record":
        values = [float(v) for v in values]
        kwargs = dict(zip(FEATURES, values))
        kwargs["los"] = int(round(kwargs["los"]))
        return cls(**kwargs)

    def inputs(self) -> np.ndarray:
        return self.to_array()[INPUT_INDEX]


@dataclass(frozen=True)
class FeatureStats:
    minimum: np.ndarray
    maximum: np.ndarray
    mean: np.ndarray
    std: np.ndarray

    def as_dict(self):
        return {
            name: {
                "min": float(self.minimum[i]),
                "max": float(self.maximum[i]),
                "mean": float(self.mean[i]),
                "std": float(self.std[i]),
            }
            for i, name in enumerate(FEATURES)
        }


class RecordSet:
    """Immutable table of records backed by an ``(N, 12)`` float array.

    Column order is ``FEATURES``. ``meta`` carries free-form provenance details
    such as the generator's excluded-user counts.
    """

    def __init__(self, data, provenance="generated", meta=None):
        arr = np.array(data, dtype=np.float64, copy=True)
        if arr.ndim == 1 and arr.size == 0:
            arr = arr.reshape(0, len(FEATURES))
        if arr.ndim != 2 or arr.shape[1] != len(FEATURES):
            raise DataError(f"record array must have shape (N, {len(FEATURES)}), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DataError("records contain non-finite values")
        los = arr[:, LOS_INDEX]
        if not np.all((los == 0) | (los == 1)):
            raise DataError("los must be 0 or 1")
        arr.setflags(write=False)
        self._data = arr
        self.provenance = provenance
        self.meta = dict(meta or {})
        self._stats = None

    @classmethod
    def from_records(cls, records, provenance="generated", meta=None):
        rows = [r.to_array() for r in records]
        return cls(np.array(rows).reshape(len(rows), len(FEATURES)), provenance, meta)

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def records(self) -> list[Record]:
        return [Record.from_array(row) for row in self._data]

    def __len__(self):
        return self._data.shape[0]

    def __getitem__(self, i) -> Record:
        return Record.from_array(self._data[i])

    def __eq__(self, other):
        if not isinstance(other, RecordSet):
            return NotImplemented
        return np.array_equal(self._data, other._data)

    def column(self, name) -> np.ndarray:
        return self._data[:, FEATURES.index(name)]

    @property
    def inputs(self) -> np.ndarray:
        return self._data[:, INPUT_INDEX]

    @property
    def target(self) -> np.ndarray:
        return self._data[:, TARGET_INDEX]

    def subset(self, indices) -> "RecordSet":
        return RecordSet(self._data[np.asarray(indices, dtype=np.int64)], self.provenance)

    def concat(self, other: "RecordSet") -> "RecordSet":
        return RecordSet(np.vstack([self._data, other._data]), self.provenance)

    @property
    def feature_stats(self) -> FeatureStats:
        if len(self) == 0:
            raise EmptyDatasetError("no records")
        if self._stats is None:
            d = self._data
            self._stats = FeatureStats(d.min(axis=0), d.max(axis=0), d.mean(axis=0), d.std(axis=0))
        return self._stats


# CSV

def _format(value, name):
    if name == "los":
        return str(int(value))
    return format(float(value), ".17g")


def save_csv(recordset: RecordSet, path, extra_columns=None):
    """Write records (plus optional ``{name: values}`` integer columns) as CSV."""
    extra_columns = dict(extra_columns or {})
    for name, values in extra_columns.items():
        if len(values) != len(recordset):
            raise DataError(f"column {name} has {len(values)} values for {len(recordset)} records")
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(FEATURES) + list(extra_columns))
        extras = [np.asarray(v) for v in extra_columns.values()]
        for i, row in enumerate(recordset.data):
            cells = [_format(v, name) for v, name in zip(row, FEATURES)]
            cells += [str(int(col[i])) for col in extras]
            writer.writerow(cells)


def load_csv(path, extra_columns=(), provenance="ingested"):
    """Parse a records CSV.

    Columns may appear in any order but the header must contain exactly the
    twelve schema names plus ``extra_columns``. Returns the RecordSet, or
    ``(RecordSet, {name: int array})`` when extra columns are requested.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvParseError("empty file", row=0) from None
        header = [h.strip() for h in header]
        expected = list(FEATURES) + list(extra_columns)
        for name in expected:
            if name not in header:
                raise CsvParseError(f"missing column: {name}", row=0, column=name)
        for name in header:
            if name not in expected:
                raise CsvParseError(f"unexpected column: {name}", row=0, column=name)
        if len(header) != len(set(header)):
            raise CsvParseError("duplicate column in header", row=0)
        order = [header.index(name) for name in expected]
        rows = []
        for lineno, cells in enumerate(reader, start=1):
            if not cells:
                continue
            if len(cells) != len(header):
                raise CsvParseError(
                    f"row {lineno}: expected {len(header)} cells, got {len(cells)}", row=lineno
                )
            parsed = []
            for name, idx in zip(expected, order):
                text = cells[idx].strip()
                try:
                    value = float(text)
                except ValueError:
                    raise CsvParseError(
                        f"row {lineno}, column {name}: non-numeric value {text!r}",
                        row=lineno, column=name,
                    ) from None
                if not math.isfinite(value):
                    raise CsvParseError(
                        f"row {lineno}, column {name}: non-finite value", row=lineno, column=name
                    )
                if (name == "los" or name in extra_columns) and value not in (0.0, 1.0):
                    raise CsvParseError(
                        f"row {lineno}, column {name}: value {text!r} not in {{0, 1}}",
                        row=lineno, column=name,
                    )
                parsed.append(value)
            rows.append(parsed)
    if not rows:
        raise EmptyDatasetError(f"{path}: no records")
    arr = np.array(rows)
    rs = RecordSet(arr[:, : len(FEATURES)], provenance=provenance)
    if not extra_columns:
        return rs
    extras = {name: arr[:, len(FEATURES) + i].astype(np.int64) for i, name in enumerate(extra_columns)}
    return rs, extras


# splitting

@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple = (0.4, 0.4, 0.2)
    seed: int = 0

    def __post_init__(self):
        if len(self.ratios) != 3 or any(r < 0 for r in self.ratios):
            raise DataError("split ratios must be three non-negative reals")
        if abs(sum(self.ratios) - 1.0) > 1e-12:
            raise DataError(f"split ratios must sum to 1, got {sum(self.ratios)!r}")


def split_sizes(n, ratios):
    """Cumulative-floor part sizes for ``n`` records."""
    c1 = math.floor(ratios[0] * n + 1e-9)
    c2 = math.floor((ratios[0] + ratios[1]) * n + 1e-9)
    c2 = min(max(c2, c1), n)
    return c1, c2 - c1, n - c2


def split_indices(n, spec: SplitSpec):
    sizes = split_sizes(n, spec.ratios)
    if min(sizes) <= 0:
        raise DataError(f"split of {n} records with ratios {spec.ratios} leaves an empty part {sizes}")
    perm = np.random.default_rng(spec.seed).permutation(n)
    c1 = sizes[0]
    c2 = c1 + sizes[1]
    return np.sort(perm[:c1]), np.sort(perm[c1:c2]), np.sort(perm[c2:])


def split(recordset: RecordSet, spec: SplitSpec = SplitSpec()):
    """Seeded shuffle then cumulative-floor cut into (train, poison_pool, test)."""
    if len(recordset) == 0:
        raise EmptyDatasetError("cannot split an empty record set")
    return tuple(recordset.subset(idx) for idx in split_indices(len(recordset), spec))


# statistics

def pearson_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 2:
        raise DataError("correlation needs at least 2 records")
    centered = X - X.mean(axis=0)
    norms = np.sqrt((centered**2).sum(axis=0))
    active = norms > 0
    if not active.any():
        raise DataError("every feature is constant")
    safe = np.where(active, norms, 1.0)
    Z = centered / safe
    corr = Z.T @ Z
    corr[~active, :] = 0.0
    corr[:, ~active] = 0.0
    np.fill_diagonal(corr, np.where(active, 1.0, 0.0))
    return np.clip(corr, -1.0, 1.0)


def correlation_matrix(recordset: RecordSet) -> np.ndarray:
    """12x12 Pearson matrix in ``FEATURES`` order; zero-variance features get 0 rows."""
    return pearson_matrix(recordset.data)


@dataclass
class Histogram:
    feature: str
    bins: list = field(default_factory=list)  # (lo, hi, count)
    degenerate: bool = False

    def as_dict(self):
        return {
            "feature": self.feature,
            "degenerate": self.degenerate,
            "bins": [[float(lo), float(hi), int(c)] for lo, hi, c in self.bins],
        }


def histogram_values(values, bins, feature="value") -> Histogram:
    values = np.asarray(values, dtype=np.float64)
    if bins < 1:
        raise DataError("bins must be >= 1")
    if values.size == 0:
        raise EmptyDatasetError("no values to histogram")
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        return Histogram(feature, [(lo, hi, int(values.size))], degenerate=bins > 1)
    counts, edges = np.histogram(values, bins=bins, range=(lo, hi))
    return Histogram(
        feature, [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(bins)]
    )


def histogram(recordset: RecordSet, feature: str, bins: int) -> Histogram:
    """Equal-width histogram of one feature over [min, max], last bin right-closed."""
    if feature not in FEATURES:
        raise DataError(f"unknown feature: {feature}")
    return histogram_values(recordset.column(feature), bins, feature)
