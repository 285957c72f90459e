"""Depth-one feature engineering applied identically to real and synthetic
tables.

Pairwise arithmetic on continuous features is named ``"x MULT y"``,
``"x ADD y"``, ``"x SUB y"`` and ``"x DIV y"``; group aggregations broadcast a
per-group statistic back to every row of the group. Engineered columns are
flagged so they never feed a second round of pairing.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import RecipeError, SchemaError
from .tabular import Column, Table

PAIRWISE = {"multiply": "MULT", "add": "ADD", "subtract": "SUB", "divide": "DIV"}
TRANSFORMS = (*PAIRWISE, "percentile")
AGGREGATIONS = ("min", "max", "count", "mode", "num_unique", "std", "sum")
_NUMERIC_AGG = ("min", "max", "std", "sum")


@dataclass(frozen=True)
class FeatureRecipe:
    transform_primitives: tuple[str, ...] = ()
    group_key: str | None = None
    aggregation_primitives: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "transform_primitives", tuple(self.transform_primitives))
        object.__setattr__(self, "aggregation_primitives", tuple(self.aggregation_primitives))
        if not self.transform_primitives and not self.aggregation_primitives:
            raise RecipeError("a recipe needs at least one primitive")
        bad = set(self.transform_primitives) - set(TRANSFORMS)
        bad |= set(self.aggregation_primitives) - set(AGGREGATIONS)
        if bad:
            raise RecipeError(f"unknown primitives {sorted(bad)}; valid: "
                              f"{list(TRANSFORMS) + list(AGGREGATIONS)}")
        if self.aggregation_primitives and not self.group_key:
            raise RecipeError("aggregation primitives require a group_key")


def _pairwise(prim: str, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, int]:
    if prim == "multiply":
        return x * y, 0
    if prim == "add":
        return x + y, 0
    if prim == "subtract":
        return x - y, 0
    zero = y == 0
    out = np.divide(x, y, out=np.zeros_like(x), where=~zero)
    return out, int(zero.sum())


def percentile(x: np.ndarray) -> np.ndarray:
    """Empirical CDF at each value: share of the column that is <= it."""
    x = np.asarray(x, dtype=np.float64)
    return np.searchsorted(np.sort(x), x, side="right") / max(len(x), 1)


def apply_transforms(table: Table, recipe: FeatureRecipe) -> Table:
    prims = recipe.transform_primitives
    if not prims:
        return table
    if any(c.engineered for c in table.columns):
        raise RecipeError("table already carries engineered columns; recipes apply once")
    cont = [c.name for c in table.feature_columns if not c.is_categorical]
    if not cont:
        raise RecipeError("transform primitives need at least one continuous feature")

    new_cols, new_data = [], []
    zero_hits = {}
    for a, b in combinations(cont, 2):
        for prim in (p for p in PAIRWISE if p in prims):
            name = f"{a} {PAIRWISE[prim]} {b}"
            values, hits = _pairwise(prim, table.values(a), table.values(b))
            if prim == "divide":
                zero_hits[name] = hits
            new_cols.append(Column.continuous(name, engineered=True))
            new_data.append(values)
    if "percentile" in prims:
        for a in cont:
            new_cols.append(Column.continuous(f"PERCENTILE({a})", engineered=True))
            new_data.append(percentile(table.values(a)))
    return _extend(table, new_cols, new_data, {"zero_division": zero_hits} if zero_hits else {})


def _extend(table: Table, cols, data, meta) -> Table:
    if not cols:
        return table
    merged = dict(table.meta)
    for key, val in meta.items():
        merged[key] = {**merged.get(key, {}), **val}
    stacked = np.column_stack([table.data, *data]) if table.n_rows else \
        np.zeros((0, len(table.columns) + len(cols)))
    return Table(table.columns + tuple(cols), stacked, merged)


def _group_stat(prim: str, values: np.ndarray, groups: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    g = len(sizes)
    if prim == "sum":
        return np.bincount(groups, weights=values, minlength=g)
    if prim == "min":
        out = np.full(g, np.inf)
        np.minimum.at(out, groups, values)
        return out
    if prim == "max":
        out = np.full(g, -np.inf)
        np.maximum.at(out, groups, values)
        return out
    if prim == "std":
        mean = np.bincount(groups, weights=values, minlength=g) / sizes
        ss = np.bincount(groups, weights=(values - mean[groups]) ** 2, minlength=g)
        return np.sqrt(np.divide(ss, sizes - 1, out=np.zeros(g), where=sizes > 1))
    if prim == "num_unique":
        pairs = np.unique(np.column_stack([groups, values]), axis=0)
        return np.bincount(pairs[:, 0].astype(np.int64), minlength=g).astype(np.float64)
    if prim == "mode":
        levels = values.astype(np.int64)
        counts = np.zeros((g, levels.max() + 1 if len(levels) else 1))
        np.add.at(counts, (groups, levels), 1.0)
        return counts.argmax(1).astype(np.float64)  # argmax picks the smallest level on ties
    raise RecipeError(f"unknown aggregation {prim!r}")


def apply_aggregations(table: Table, recipe: FeatureRecipe) -> Table:
    """Broadcast group statistics of every original feature.

    ``min``/``max``/``std``/``sum`` apply to continuous features, ``mode`` to
    categorical ones, ``num_unique`` to both; ``count`` yields one column of
    group sizes. ``std`` uses the n-1 denominator and is 0 for singletons.
    """
    prims = recipe.aggregation_primitives
    if not prims:
        return table
    key = recipe.group_key
    if key not in table.names:
        raise SchemaError(f"group_key {key!r} is not a column of the table")
    _, groups = np.unique(table.values(key), return_inverse=True)
    groups = groups.astype(np.int64)
    sizes = np.bincount(groups).astype(np.float64)
    new_cols, new_data = [], []
    if "count" in prims:
        new_cols.append(Column.continuous(f"COUNT({key})", engineered=True))
        new_data.append(sizes[groups])
    for col in table.feature_columns:
        if col.name == key or col.engineered:
            continue
        for prim in (p for p in AGGREGATIONS if p in prims and p != "count"):
            if prim in _NUMERIC_AGG and col.is_categorical:
                continue
            if prim == "mode" and not col.is_categorical:
                continue
            name = f"{prim.upper()}({col.name} BY {key})"
            stat = _group_stat(prim, table.values(col.name), groups, sizes)
            if prim == "mode":
                new_cols.append(Column.categorical(name, col.n_levels, labels=col.labels,
                                                   engineered=True))
            else:
                new_cols.append(Column.continuous(name, engineered=True))
            new_data.append(stat[groups])
    clash = [c.name for c in new_cols if c.name in table.names]
    if clash:
        raise RecipeError(f"columns {clash} already exist; recipes apply once")
    return _extend(table, new_cols, new_data, {})


def apply_recipe(table: Table, recipe: FeatureRecipe | None) -> Table:
    if recipe is None:
        return table
    if any(c.engineered for c in table.columns):
        raise RecipeError("table already carries engineered columns; recipes apply once")
    return apply_aggregations(apply_transforms(table, recipe), recipe)
