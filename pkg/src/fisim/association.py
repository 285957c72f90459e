"""Pairwise association between mixed-type columns.

Numeric pairs use Pearson's r, categorical pairs Cramér's V and mixed pairs
the correlation ratio eta. Degenerate (constant) inputs score 0 instead of
NaN so that noisy synthetic tables never poison downstream optimisation.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SchemaError, SizeError
from .tabular import Table


def _pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise SizeError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.size < 2:
        raise SizeError("need at least 2 observations")
    return x, y


def pearson(x, y) -> float:
    x, y = _pair(x, y)
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return 0.0
    r = float(dx @ dy) / np.sqrt(sxx * syy)
    return float(np.clip(r, -1.0, 1.0))


def cramers_v(x, y) -> float:
    x, y = _pair(x, y)
    _, xi = np.unique(x, return_inverse=True)
    _, yi = np.unique(y, return_inverse=True)
    r, c = xi.max() + 1, yi.max() + 1
    if min(r, c) < 2:
        return 0.0
    table = np.zeros((r, c))
    np.add.at(table, (xi, yi), 1.0)
    n = table.sum()
    expected = np.outer(table.sum(1), table.sum(0)) / n
    chi2 = float(((table - expected) ** 2 / expected).sum())
    return float(min(np.sqrt(chi2 / (n * (min(r, c) - 1))), 1.0))


def correlation_ratio(cat, num) -> float:
    cat, num = _pair(cat, num)
    _, groups = np.unique(cat, return_inverse=True)
    total = float(((num - num.mean()) ** 2).sum())
    if total == 0.0:
        return 0.0
    sizes = np.bincount(groups)
    means = np.bincount(groups, weights=num) / sizes
    between = float((sizes * (means - num.mean()) ** 2).sum())
    return float(np.sqrt(min(between / total, 1.0)))


@dataclass(frozen=True, eq=False)
class AssociationMatrix:
    feature_names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.shape != (len(self.feature_names),) * 2:
            raise SizeError(f"matrix shape {v.shape} does not match {len(self.feature_names)} names")
        if not np.all(np.isfinite(v)):
            raise SchemaError("association values must be finite")
        if not np.allclose(v, v.T, rtol=0.0, atol=1e-12) or np.any(np.diag(v) != 1.0):
            raise SchemaError("association matrix must be symmetric with unit diagonal")
        v.setflags(write=False)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "_pos", {n: i for i, n in enumerate(self.feature_names)})

    def abs_block(self, rows, cols) -> np.ndarray:
        """|association| between each name in ``rows`` and each in ``cols``."""
        try:
            ri = [self._pos[n] for n in rows]
            ci = [self._pos[n] for n in cols]
        except KeyError as exc:
            raise SchemaError(f"association matrix has no feature {exc.args[0]!r}") from None
        return np.abs(self.values[np.ix_(ri, ci)])

    @classmethod
    def identity(cls, names) -> "AssociationMatrix":
        return cls(tuple(names), np.eye(len(names)))

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.feature_names)
            for row in self.values:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "AssociationMatrix":
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise SizeError(f"{path}: empty association file")
        names, body = rows[0], [r for r in rows[1:] if r]
        if names and names[0] == "":
            # labelled layout: blank corner cell, row names in the first column
            names = names[1:]
            if [r[0] for r in body] != names:
                raise SchemaError(f"{path}: row labels do not match the header")
            body = [r[1:] for r in body]
        try:
            values = np.array([[float(v) for v in r] for r in body])
        except ValueError as exc:
            raise SchemaError(f"{path}: {exc}") from None
        return cls(tuple(names), values)


def association(x, y, x_categorical: bool, y_categorical: bool) -> float:
    if x_categorical and y_categorical:
        return cramers_v(x, y)
    if x_categorical:
        return correlation_ratio(x, y)
    if y_categorical:
        return correlation_ratio(y, x)
    return pearson(x, y)


def association_matrix(table: Table) -> AssociationMatrix:
    cols = table.feature_columns
    if not cols:
        raise SchemaError("table has no feature columns")
    d = len(cols)
    m = np.eye(d)
    data = [table.values(c.name) for c in cols]
    for i in range(d):
        for j in range(i + 1, d):
            m[i, j] = m[j, i] = association(data[i], data[j], cols[i].is_categorical,
                                            cols[j].is_categorical)
    return AssociationMatrix(tuple(c.name for c in cols), m)


def mean_offdiag(m: AssociationMatrix) -> float:
    d = len(m.feature_names)
    if d < 2:
        raise SizeError("need a matrix of dimension >= 2")
    off = ~np.eye(d, dtype=bool)
    return float(np.abs(m.values[off]).mean())
