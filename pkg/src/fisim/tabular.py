"""Typed tabular data: schema, CSV ingestion, splitting, binning and the
artificial classification datasets used throughout the experiments.

A :class:`Table` stores every cell in one ``float64`` array. Categorical
cells hold their level index (0, 1, ...) as an exactly representable float,
so the whole table can be handed to the compiled tree kernels as is.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, IngestionError, SchemaError, SizeError

CATEGORICAL = "categorical"
CONTINUOUS = "continuous"


@dataclass(frozen=True)
class Column:
    name: str
    kind: str
    n_levels: int | None = None
    is_target: bool = False
    labels: tuple[str, ...] | None = None
    engineered: bool = False

    def __post_init__(self):
        if self.kind not in (CATEGORICAL, CONTINUOUS):
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == CATEGORICAL:
            # None means "infer from data"; only legal in a schema passed to load_csv
            if self.n_levels is not None and self.n_levels < 1:
                raise SchemaError(f"column {self.name!r}: level count must be positive")
        elif self.n_levels is not None:
            raise SchemaError(f"column {self.name!r}: continuous columns have no levels")

    @classmethod
    def categorical(cls, name, n_levels=None, is_target=False, labels=None, engineered=False):
        return cls(name, CATEGORICAL, None if n_levels is None else int(n_levels), is_target,
                   None if labels is None else tuple(labels), engineered)

    @classmethod
    def continuous(cls, name, is_target=False, engineered=False):
        return cls(name, CONTINUOUS, None, is_target, None, engineered)

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL


def _check_schema(columns: Sequence[Column]) -> None:
    names = [c.name for c in columns]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise SchemaError(f"duplicate column names: {dupes}")
    n_targets = sum(c.is_target for c in columns)
    if n_targets != 1:
        raise SchemaError(f"exactly one target column required, found {n_targets}")
    for c in columns:
        if c.is_categorical and c.n_levels is None:
            raise SchemaError(f"column {c.name!r}: categorical level count is unset")
        # a categorical column observed with a single level is legal data;
        # the >= 2 rule applies to targets, which must support classification
        if c.is_target and (not c.is_categorical or c.n_levels < 2):
            raise SchemaError(f"target {c.name!r} must be categorical with >= 2 levels")


@dataclass(frozen=True, eq=False)
class Table:
    """Immutable column-typed table with exactly one target column."""

    columns: tuple[Column, ...]
    data: np.ndarray
    meta: Mapping = field(default_factory=dict)

    def __post_init__(self):
        cols = tuple(self.columns)
        object.__setattr__(self, "columns", cols)
        _check_schema(cols)
        data = np.array(self.data, dtype=np.float64, copy=True)
        if data.ndim == 1 and data.size == 0:
            data = data.reshape(0, len(cols))
        if data.ndim != 2 or data.shape[1] != len(cols):
            raise SchemaError(f"data shape {data.shape} does not match {len(cols)} columns")
        if not np.all(np.isfinite(data)):
            raise SchemaError("table cells must be finite")
        for j, c in enumerate(cols):
            if c.is_categorical and data.shape[0]:
                v = data[:, j]
                if np.any(v < 0) or np.any(v >= c.n_levels) or np.any(v != np.floor(v)):
                    raise SchemaError(f"column {c.name!r}: level index outside [0, {c.n_levels})")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    # -- accessors ---------------------------------------------------------
    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def target_index(self) -> int:
        return next(j for j, c in enumerate(self.columns) if c.is_target)

    @property
    def target(self) -> Column:
        return self.columns[self.target_index]

    @property
    def feature_columns(self) -> list[Column]:
        return [c for c in self.columns if not c.is_target]

    @property
    def feature_names(self) -> list[str]:
        return [c.name for c in self.feature_columns]

    def index(self, name: str) -> int:
        for j, c in enumerate(self.columns):
            if c.name == name:
                return j
        raise SchemaError(f"unknown column {name!r}")

    def column(self, name: str) -> Column:
        return self.columns[self.index(name)]

    def values(self, name: str) -> np.ndarray:
        return self.data[:, self.index(name)]

    def features(self) -> np.ndarray:
        """Feature matrix (rows x non-target columns), in schema order."""
        keep = [j for j, c in enumerate(self.columns) if not c.is_target]
        return self.data[:, keep]

    def labels(self) -> np.ndarray:
        return self.data[:, self.target_index].astype(np.int64)

    # -- derivation --------------------------------------------------------
    def take(self, rows) -> "Table":
        return Table(self.columns, self.data[np.asarray(rows, dtype=np.int64)], self.meta)

    def with_data(self, data: np.ndarray, columns=None, meta=None) -> "Table":
        return Table(self.columns if columns is None else columns, data,
                     self.meta if meta is None else meta)

    def same_schema(self, other: "Table") -> bool:
        return [(c.name, c.kind, c.is_target) for c in self.columns] == \
            [(c.name, c.kind, c.is_target) for c in other.columns]

    def __eq__(self, other):
        if not isinstance(other, Table):
            return NotImplemented
        return self.columns == other.columns and np.array_equal(self.data, other.data)

    def __hash__(self):
        return id(self)

    def __repr__(self):
        return f"Table({self.n_rows} rows, columns={self.names})"


@dataclass(frozen=True)
class SplitPair:
    train: Table
    validation: Table


# -- CSV -------------------------------------------------------------------

def load_schema(path) -> list[Column]:
    """Read a column sidecar: a TOML file with one ``[[columns]]`` entry per
    column (``name``, ``kind``, optional ``levels`` and ``target``)."""
    from ._toml import load_toml

    doc = load_toml(path)
    unknown = set(doc) - {"columns"}
    if unknown:
        raise ConfigError(f"schema {path}: unknown keys {sorted(unknown)}; valid keys: ['columns']")
    cols = []
    for entry in doc.get("columns", []):
        bad = set(entry) - {"name", "kind", "levels", "target"}
        if bad:
            raise ConfigError(f"schema {path}: unknown column keys {sorted(bad)}; "
                              "valid keys: ['kind', 'levels', 'name', 'target']")
        kind = entry.get("kind")
        if kind == CATEGORICAL:
            cols.append(Column.categorical(entry["name"], entry.get("levels"),
                                           bool(entry.get("target", False))))
        elif kind == CONTINUOUS:
            cols.append(Column.continuous(entry["name"], bool(entry.get("target", False))))
        else:
            raise ConfigError(f"schema {path}: column {entry.get('name')!r} has kind {kind!r}")
    return cols


def write_schema(columns: Sequence[Column], path) -> None:
    """Inverse of :func:`load_schema`."""
    lines = []
    for c in columns:
        lines += ["[[columns]]", f"name = {_toml_str(c.name)}", f'kind = "{c.kind}"']
        if c.is_categorical and c.n_levels is not None:
            lines.append(f"levels = {c.n_levels}")
        if c.is_target:
            lines.append("target = true")
        lines.append("")
    Path(path).write_text("\n".join(lines), encoding="utf-8")


def _toml_str(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def load_csv(path, schema: Sequence[Column]) -> Table:
    """Parse a CSV file against ``schema``.

    Categorical strings become level indices in order of first appearance.
    Empty or NaN cells are rejected rather than imputed.
    """
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file, expected a header row") from None
        want = [c.name for c in schema]
        if sorted(header) != sorted(want) or len(header) != len(want):
            raise IngestionError(f"{path}: header {header} does not match schema columns {want}")
        pos = [header.index(n) for n in want]
        codes: list[dict[str, int]] = [{} for _ in schema]
        rows = []
        for r, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != len(header):
                raise IngestionError(f"{path}:{r}: expected {len(header)} fields, got {len(record)}")
            row = []
            for j, (col, p) in enumerate(zip(schema, pos)):
                cell = record[p].strip()
                where = f"{path}:{r} column {col.name!r}"
                if cell == "" or cell.lower() in ("nan", "na", "null"):
                    raise IngestionError(f"{where}: missing value {record[p]!r}")
                if col.kind == CONTINUOUS:
                    try:
                        v = float(cell)
                    except ValueError:
                        raise IngestionError(f"{where}: cannot parse {cell!r} as a number") from None
                    if not math.isfinite(v):
                        raise IngestionError(f"{where}: non-finite value {cell!r}")
                else:
                    v = codes[j].setdefault(cell, len(codes[j]))
                    limit = col.n_levels
                    if limit is not None and v >= limit:
                        raise IngestionError(f"{where}: level {cell!r} exceeds declared "
                                             f"level count {limit}")
                row.append(float(v))
            rows.append(row)
    columns = []
    for col, seen in zip(schema, codes):
        if col.kind == CONTINUOUS:
            columns.append(Column.continuous(col.name, col.is_target))
        else:
            labels = tuple(seen)
            n_levels = col.n_levels or max(len(labels), 2)
            columns.append(Column.categorical(col.name, n_levels, col.is_target, labels))
    data = np.array(rows, dtype=np.float64).reshape(len(rows), len(columns))
    return Table(tuple(columns), data)


def write_csv(table: Table, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.names)
        for row in table.data:
            out = []
            for v, col in zip(row, table.columns):
                if col.is_categorical:
                    i = int(v)
                    out.append(col.labels[i] if col.labels and i < len(col.labels) else str(i))
                else:
                    out.append(repr(float(v)))
            w.writerow(out)


# -- splitting and binning --------------------------------------------------

def split(table: Table, train_frac: float, seed) -> SplitPair:
    """Uniform random train/validation partition of the rows."""
    n = table.n_rows
    if n < 2:
        raise SizeError(f"cannot split a table with {n} rows")
    if not 0.0 < train_frac < 1.0:
        raise ConfigError(f"train_frac must lie in (0, 1), got {train_frac}")
    n_train = min(max(int(math.floor(train_frac * n + 0.5)), 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    return SplitPair(table.take(np.sort(perm[:n_train])), table.take(np.sort(perm[n_train:])))


def quantile_bins(x: np.ndarray, n_bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Equal-frequency binning.

    Returns ``(codes, edges)`` where ``edges`` has one more entry than the
    number of non-empty bins: ``[min, cut_1, ..., cut_m, max]``. Bin ``b``
    holds values in ``(edges[b], edges[b+1]]`` (the first bin is closed on
    the left). Cut points are data values, so no bin is ever empty;
    duplicate quantiles merge.
    """
    x = np.asarray(x, dtype=np.float64)
    if n_bins < 1:
        raise ConfigError(f"n_bins must be >= 1, got {n_bins}")
    if x.size == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(2)
    lo, hi = float(x.min()), float(x.max())
    qs = np.quantile(x, np.arange(1, n_bins) / n_bins, method="inverted_cdf")
    cuts = np.unique(qs)
    cuts = cuts[cuts < hi]
    codes = np.searchsorted(cuts, x, side="left")
    return codes.astype(np.int64), np.concatenate([[lo], cuts, [hi]])


def apply_bins(x: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Bin codes for new values against edges from :func:`quantile_bins`."""
    return np.searchsorted(np.asarray(edges)[1:-1], x, side="left").astype(np.int64)


def discretize(table: Table, column: str, n_bins: int) -> Table:
    j = table.index(column)
    col = table.columns[j]
    if col.kind != CONTINUOUS:
        raise SchemaError(f"column {column!r} is not continuous")
    codes, edges = quantile_bins(table.data[:, j], n_bins)
    data = table.data.copy()
    data[:, j] = codes
    cols = list(table.columns)
    cols[j] = Column.categorical(col.name, len(edges) - 1, col.is_target, engineered=col.engineered)
    return Table(tuple(cols), data, table.meta)


# -- artificial datasets ----------------------------------------------------

@dataclass(frozen=True)
class ArtificialSpec:
    """Parameters of a synthetic binary/multiclass classification table.

    ``importance_profile`` is ``"uniform"`` (every informative feature gets
    the same class offset, with a random per-class covariance) or
    ``"distinct"`` (identity covariance, class offsets decaying by a factor
    of three per informative feature).
    """

    n_rows: int = 10000
    n_informative: int = 5
    n_redundant: int = 0
    n_noise: int = 0
    categorical: bool = True
    n_levels: int = 5
    class_sep: float = 1.0
    n_classes: int = 2
    importance_profile: str = "uniform"

    def validate(self) -> None:
        checks = [
            (self.n_rows >= 1, "n_rows must be positive"),
            (min(self.n_informative, self.n_redundant, self.n_noise) >= 0,
             "feature counts must be non-negative"),
            (self.n_informative + self.n_redundant + self.n_noise >= 1,
             "n_informative + n_redundant + n_noise must be >= 1"),
            (self.n_redundant == 0 or self.n_informative >= 1,
             "redundant features require n_informative >= 1"),
            (self.n_levels >= 2, "n_levels must be >= 2"),
            (self.class_sep > 0, "class_sep must be positive"),
            (self.n_classes >= 2, "n_classes must be >= 2"),
            (self.importance_profile in ("uniform", "distinct"),
             "importance_profile must be 'uniform' or 'distinct'"),
            (self.n_informative == 0 or self.n_classes <= 2 ** self.n_informative,
             "n_classes must not exceed 2**n_informative"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(f"invalid ArtificialSpec: {msg}")


ARTIFICIAL: dict[str, ArtificialSpec] = {
    "artificial-1": ArtificialSpec(n_informative=5),
    "artificial-2": ArtificialSpec(n_informative=1, n_redundant=4),
    "artificial-3": ArtificialSpec(n_informative=15),
    "artificial-4": ArtificialSpec(n_informative=15, categorical=False),
    "artificial-5": ArtificialSpec(n_informative=3, importance_profile="distinct", class_sep=1.0),
}


def _class_vertices(n_inf: int, n_classes: int, rng) -> np.ndarray:
    if n_classes == 2:
        v = rng.choice([-1.0, 1.0], size=n_inf)
        return np.stack([v, -v])
    for _ in range(100):
        ids = rng.choice(2 ** n_inf, size=n_classes, replace=False)
        bits = (ids[:, None] >> np.arange(n_inf)) & 1
        if np.all(bits.min(axis=0) != bits.max(axis=0)):
            break
    return 2.0 * bits - 1.0


def generate_artificial(spec: ArtificialSpec, seed) -> Table:
    spec.validate()
    rng = np.random.default_rng(seed)
    n, n_inf = spec.n_rows, spec.n_informative
    y = np.arange(n) % spec.n_classes
    rng.shuffle(y)

    informative = rng.standard_normal((n, n_inf))
    if n_inf:
        centroids = _class_vertices(n_inf, spec.n_classes, rng) * spec.class_sep
        if spec.importance_profile == "distinct":
            informative += centroids[y] * 3.0 ** -np.arange(n_inf)
        else:
            for c in range(spec.n_classes):
                mix = 2.0 * rng.random((n_inf, n_inf)) - 1.0
                rows = y == c
                informative[rows] = informative[rows] @ mix + centroids[c]
    redundant = informative @ (2.0 * rng.random((n_inf, spec.n_redundant)) - 1.0)
    noise = rng.standard_normal((n, spec.n_noise))
    feats = np.hstack([informative, redundant, noise])

    columns = []
    if spec.categorical:
        for j in range(feats.shape[1]):
            feats[:, j], edges = quantile_bins(feats[:, j], spec.n_levels)
            columns.append(Column.categorical(f"x{j}", len(edges) - 1))
    else:
        columns = [Column.continuous(f"x{j}") for j in range(feats.shape[1])]
    columns.append(Column.categorical("y", spec.n_classes, is_target=True))
    return Table(tuple(columns), np.column_stack([feats, y.astype(np.float64)]))


def artificial(name: str, seed, **overrides) -> Table:
    try:
        spec = ARTIFICIAL[name]
    except KeyError:
        raise ConfigError(f"unknown artificial dataset {name!r}; known: {sorted(ARTIFICIAL)}") from None
    return generate_artificial(replace(spec, **overrides), seed)
