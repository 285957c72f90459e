"""Differentially private Bayesian-network synthesis (PrivBayes style) and the
two non-private baselines: independent column resampling and row
subsampling.

Privacy accounting for :func:`fit_privbayes` with budget ``epsilon``:

* ``beta * epsilon`` selects the network greedily. Each of the ``d - 1``
  selections is an exponential-mechanism draw over (feature, parent set)
  candidates scored by mutual information.
* ``(1 - beta) * epsilon`` perturbs the ``d`` conditional count tables with
  Laplace noise of scale ``2 d / ((1 - beta) epsilon)`` per cell.

Sampling from a fitted network spends nothing further.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np

from .errors import ConfigError, ConsistencyError, SizeError
from .tabular import CONTINUOUS, Column, Table, quantile_bins


@dataclass(frozen=True)
class PrivBayesConfig:
    epsilon: float
    k_parents: int = 3
    beta: float = 0.5
    n_bins: int = 10

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ConfigError(f"epsilon must be a positive finite number, got {self.epsilon}")
        if self.k_parents < 0:
            raise ConfigError("k_parents must be >= 0")
        if not 0.0 < self.beta < 1.0:
            raise ConfigError("beta must lie in (0, 1)")
        if self.n_bins < 2:
            raise ConfigError("n_bins must be >= 2")

    @property
    def structure_epsilon(self) -> float:
        return self.beta * self.epsilon

    @property
    def parameter_epsilon(self) -> float:
        return (1.0 - self.beta) * self.epsilon


@dataclass(frozen=True, eq=False)
class BayesNet:
    """A fitted network over discretized columns.

    ``cpts[name]`` has one row per joint configuration of ``parents[name]``
    (mixed radix, first parent most significant) and one column per level.
    """

    columns: tuple[Column, ...]
    ordering: tuple[str, ...]
    parents: dict[str, tuple[str, ...]]
    domain: dict[str, int]
    cpts: dict[str, np.ndarray]
    bin_edges: dict[str, np.ndarray]
    spent_epsilon: float

    def check(self) -> None:
        names = {c.name for c in self.columns}
        if set(self.ordering) != names or len(self.ordering) != len(names):
            raise ConsistencyError("ordering is not a permutation of the columns")
        placed: set[str] = set()
        for name in self.ordering:
            if not set(self.parents[name]) <= placed:
                raise ConsistencyError(f"parents of {name!r} do not precede it")
            placed.add(name)
            cpt = self.cpts[name]
            rows = int(np.prod([self.domain[p] for p in self.parents[name]]))
            if cpt.shape != (rows, self.domain[name]):
                raise ConsistencyError(f"CPT of {name!r} has shape {cpt.shape}")
            if np.any(cpt < 0) or np.any(np.abs(cpt.sum(1) - 1.0) > 1e-9):
                raise ConsistencyError(f"CPT rows of {name!r} are not distributions")

    def sample(self, n_rows: int, seed) -> Table:
        return sample_privbayes(self, n_rows, seed)

    # -- serialization --
    def to_json(self) -> str:
        doc = {
            "columns": [{"name": c.name, "kind": c.kind, "levels": c.n_levels,
                         "target": c.is_target, "labels": list(c.labels) if c.labels else None}
                        for c in self.columns],
            "ordering": list(self.ordering),
            "parents": {k: list(v) for k, v in self.parents.items()},
            "domain": self.domain,
            "cpts": {k: v.tolist() for k, v in self.cpts.items()},
            "bin_edges": {k: v.tolist() for k, v in self.bin_edges.items()},
            "spent_epsilon": self.spent_epsilon,
        }
        return json.dumps(doc, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "BayesNet":
        doc = json.loads(text)
        cols = tuple(Column(c["name"], c["kind"], c["levels"], c["target"],
                            tuple(c["labels"]) if c["labels"] else None) for c in doc["columns"])
        net = cls(cols, tuple(doc["ordering"]), {k: tuple(v) for k, v in doc["parents"].items()},
                  {k: int(v) for k, v in doc["domain"].items()},
                  {k: np.array(v, dtype=np.float64).reshape(-1, doc["domain"][k])
                   for k, v in doc["cpts"].items()},
                  {k: np.array(v) for k, v in doc["bin_edges"].items()},
                  float(doc["spent_epsilon"]))
        net.check()
        return net

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


def mi_sensitivity(n: int) -> float:
    """Bound on how much one record can move the plug-in mutual information
    of two discrete variables estimated from ``n`` records."""
    if n < 2:
        return math.log(2.0)
    return 2.0 / n * math.log((n + 1) / 2.0) + (1.0 - 1.0 / n) * math.log(1.0 + 2.0 / (n - 1))


def _config_index(codes: np.ndarray, domain: list[int], cols: tuple[int, ...]) -> np.ndarray:
    idx = np.zeros(codes.shape[0], dtype=np.int64)
    for c in cols:
        idx = idx * domain[c] + codes[:, c]
    return idx


def _mutual_information(a: np.ndarray, na: int, b: np.ndarray, nb: int) -> float:
    joint = np.bincount(a * nb + b, minlength=na * nb).reshape(na, nb).astype(np.float64)
    joint /= joint.sum()
    pa, pb = joint.sum(1), joint.sum(0)
    nz = joint > 0
    return float((joint[nz] * np.log(joint[nz] / np.outer(pa, pb)[nz])).sum())


def _discretize(table: Table, n_bins: int):
    codes = np.empty(table.data.shape, dtype=np.int64)
    domain, edges = [], {}
    for j, col in enumerate(table.columns):
        if col.kind == CONTINUOUS:
            codes[:, j], e = quantile_bins(table.data[:, j], n_bins)
            edges[col.name] = e
            domain.append(len(e) - 1)
        else:
            codes[:, j] = table.data[:, j].astype(np.int64)
            domain.append(col.n_levels)
    return codes, domain, edges


def _exponential_choice(scores: np.ndarray, epsilon: float, sensitivity: float, rng) -> int:
    logits = epsilon * scores / (2.0 * sensitivity)
    p = np.exp(logits - logits.max())
    return int(rng.choice(len(scores), p=p / p.sum()))


def _laplace_cpt(counts: np.ndarray, scale: float, rng) -> np.ndarray:
    noisy = np.maximum(counts + rng.laplace(0.0, scale, size=counts.shape), 0.0)
    mass = noisy.sum(1, keepdims=True)
    uniform = np.full_like(noisy, 1.0 / noisy.shape[1])
    return np.where(mass > 0, noisy / np.where(mass > 0, mass, 1.0), uniform)


def fit_privbayes(table: Table, cfg: PrivBayesConfig, seed=0) -> BayesNet:
    if table.n_rows < 10:
        raise SizeError(f"PrivBayes needs at least 10 rows, got {table.n_rows}")
    rng = np.random.default_rng(seed)
    codes, domain, edges = _discretize(table, cfg.n_bins)
    n, d = codes.shape
    names = table.names

    # structure: first node uniformly at random, then d - 1 private selections
    order = [int(rng.integers(d))]
    parents: dict[int, tuple[int, ...]] = {order[0]: ()}
    step_eps = cfg.structure_epsilon / (d - 1) if d > 1 else 0.0
    sensitivity = mi_sensitivity(n)
    while len(order) < d:
        remaining = [j for j in range(d) if j not in parents]
        size = min(cfg.k_parents, len(order))
        candidates, scores = [], []
        for pa in combinations(sorted(order), size):
            pa_idx = _config_index(codes, domain, pa)
            pa_size = int(np.prod([domain[p] for p in pa]))
            for child in remaining:
                candidates.append((child, pa))
                scores.append(_mutual_information(pa_idx, pa_size, codes[:, child], domain[child]))
        child, pa = candidates[_exponential_choice(np.array(scores), step_eps, sensitivity, rng)]
        order.append(child)
        parents[child] = pa

    scale = 2.0 * d / cfg.parameter_epsilon
    cpts = {}
    for j in order:
        pa = parents[j]
        rows = int(np.prod([domain[p] for p in pa]))
        cell = _config_index(codes, domain, pa) * domain[j] + codes[:, j]
        counts = np.bincount(cell, minlength=rows * domain[j]).reshape(rows, domain[j])
        cpts[names[j]] = _laplace_cpt(counts.astype(np.float64), scale, rng)

    net = BayesNet(
        columns=table.columns,
        ordering=tuple(names[j] for j in order),
        parents={names[j]: tuple(names[p] for p in parents[j]) for j in order},
        domain={names[j]: domain[j] for j in range(d)},
        cpts=cpts,
        bin_edges=edges,
        spent_epsilon=float(cfg.epsilon),
    )
    net.check()
    return net


def sample_privbayes(net: BayesNet, n_rows: int, seed=0) -> Table:
    net.check()
    if n_rows < 0:
        raise SizeError("n_rows must be non-negative")
    rng = np.random.default_rng(seed)
    names = [c.name for c in net.columns]
    codes = {}
    for name in net.ordering:
        config = np.zeros(n_rows, dtype=np.int64)
        for p in net.parents[name]:
            config = config * net.domain[p] + codes[p]
        cdf = np.cumsum(net.cpts[name], axis=1)[config]
        draw = (rng.random(n_rows)[:, None] > cdf).sum(1)
        codes[name] = np.minimum(draw, net.domain[name] - 1)
    data = np.empty((n_rows, len(names)))
    for j, col in enumerate(net.columns):
        c = codes[col.name]
        if col.kind == CONTINUOUS:
            e = net.bin_edges[col.name]
            data[:, j] = rng.uniform(e[c], e[c + 1]) if n_rows else 0.0
        else:
            data[:, j] = c
    return Table(net.columns, data)


# -- baselines --------------------------------------------------------------

def resample_columns(table: Table, seed=0) -> Table:
    """Bootstrap every column independently, destroying all dependence."""
    n = table.n_rows
    if n < 1:
        raise SizeError("cannot resample an empty table")
    rng = np.random.default_rng(seed)
    data = np.column_stack([table.data[rng.integers(0, n, size=n), j]
                            for j in range(len(table.columns))])
    return Table(table.columns, data)


def subsample(table: Table, fraction: float, seed=0) -> Table:
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"fraction must lie in (0, 1], got {fraction}")
    size = int(math.floor(fraction * table.n_rows + 0.5))
    if size < 1:
        raise SizeError(f"subsample of {fraction} x {table.n_rows} rows is empty")
    rows = np.random.default_rng(seed).choice(table.n_rows, size=size, replace=False)
    return table.take(rows)
