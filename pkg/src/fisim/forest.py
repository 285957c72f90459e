"""Random forest of Gini trees over mixed categorical/continuous tables, plus
the ROC AUC scores used to evaluate it.

Continuous splits are ``x <= threshold`` with thresholds at midpoints between
sorted distinct values. Categorical splits isolate one level (``x == level``
goes left). Trees are grown in a compiled kernel; the Python side only draws
bootstraps and seeds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations

import numpy as np
from numba import njit
from scipy.stats import rankdata

from .errors import ConfigError, DegenerateError, SchemaError
from .tabular import Table


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 150
    max_depth: int | None = None
    min_leaf: int = 1
    features_per_split: str = "sqrt"

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigError("n_trees must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ConfigError("max_depth must be positive or None")
        if self.min_leaf < 1:
            raise ConfigError("min_leaf must be >= 1")
        if self.features_per_split not in ("sqrt", "all"):
            raise ConfigError("features_per_split must be 'sqrt' or 'all'")

    def max_features(self, d: int) -> int:
        return d if self.features_per_split == "all" else max(1, math.ceil(math.sqrt(d)))


@njit(cache=True)
def _grow(X, y, is_cat, n_classes, max_level, idx, max_features, max_depth, min_leaf, seed):
    np.random.seed(seed)
    n = idx.shape[0]
    d = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    counts = np.zeros((cap, n_classes))

    st_node = np.empty(cap, np.int64)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    st_node[0], st_start[0], st_end[0], st_depth[0] = 0, 0, n, 0
    sp = 1
    n_nodes = 1

    node_cls = np.zeros(n_classes)
    lc = np.zeros(n_classes)
    cat_counts = np.zeros((max_level, n_classes))
    vals = np.empty(n)
    ys = np.empty(n, np.int64)
    buf = np.empty(n, np.int64)

    while sp > 0:
        sp -= 1
        node, start, end, depth = st_node[sp], st_start[sp], st_end[sp], st_depth[sp]
        m = end - start
        node_cls[:] = 0.0
        for i in range(start, end):
            node_cls[y[idx[i]]] += 1.0
        counts[node] = node_cls
        n_present = 0
        for c in range(n_classes):
            if node_cls[c] > 0:
                n_present += 1
        if n_present < 2 or m < 2 * min_leaf or (max_depth > 0 and depth >= max_depth):
            continue

        order_f = np.random.permutation(d)
        best_score = -1.0
        best_f = -1
        best_thr = 0.0
        visited = 0
        for fi in range(d):
            if visited >= max_features and best_f >= 0:
                break
            f = order_f[fi]
            if is_cat[f]:
                cat_counts[:, :] = 0.0
                for i in range(start, end):
                    r = idx[i]
                    cat_counts[np.int64(X[r, f]), y[r]] += 1.0
                levels = 0
                for v in range(max_level):
                    if cat_counts[v].sum() > 0:
                        levels += 1
                if levels < 2:
                    continue
                visited += 1
                for v in range(max_level):
                    nl = cat_counts[v].sum()
                    nr = m - nl
                    if nl == 0 or nl < min_leaf or nr < min_leaf:
                        continue
                    score = 0.0
                    for c in range(n_classes):
                        a = cat_counts[v, c]
                        b = node_cls[c] - a
                        score += a * a / nl + b * b / nr
                    if score > best_score:
                        best_score, best_f, best_thr = score, f, float(v)
            else:
                for i in range(m):
                    r = idx[start + i]
                    vals[i] = X[r, f]
                    ys[i] = y[r]
                order = np.argsort(vals[:m], kind="mergesort")
                sv = vals[:m][order]
                sy = ys[:m][order]
                if sv[0] == sv[m - 1]:
                    continue
                visited += 1
                lc[:] = 0.0
                for i in range(m - 1):
                    lc[sy[i]] += 1.0
                    if sv[i] == sv[i + 1]:
                        continue
                    nl = i + 1.0
                    nr = m - nl
                    if nl < min_leaf or nr < min_leaf:
                        continue
                    score = 0.0
                    for c in range(n_classes):
                        b = node_cls[c] - lc[c]
                        score += lc[c] * lc[c] / nl + b * b / nr
                    if score > best_score:
                        thr = 0.5 * (sv[i] + sv[i + 1])
                        if thr >= sv[i + 1]:
                            thr = sv[i]
                        best_score, best_f, best_thr = score, f, thr
        if best_f < 0:
            continue

        k = 0
        for i in range(start, end):
            r = idx[i]
            v = X[r, best_f]
            if (v == best_thr) if is_cat[best_f] else (v <= best_thr):
                buf[k] = r
                k += 1
        n_left = k
        for i in range(start, end):
            r = idx[i]
            v = X[r, best_f]
            if not ((v == best_thr) if is_cat[best_f] else (v <= best_thr)):
                buf[k] = r
                k += 1
        idx[start:end] = buf[:m]

        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        # right child below left on the stack
        st_node[sp], st_start[sp], st_end[sp] = n_nodes + 1, start + n_left, end
        st_node[sp + 1], st_start[sp + 1], st_end[sp + 1] = n_nodes, start, start + n_left
        st_depth[sp] = st_depth[sp + 1] = depth + 1
        sp += 2
        n_nodes += 2

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), counts[:n_nodes].copy())


@njit(cache=True)
def _predict(X, feature, threshold, left, right, prob, major_left, roots, is_cat, seen, out):
    n_trees = roots.shape[0]
    max_level = seen.shape[2]
    for r in range(X.shape[0]):
        for t in range(n_trees):
            node = roots[t]
            while left[node] >= 0:
                f = feature[node]
                v = X[r, f]
                if is_cat[f]:
                    lv = np.int64(v)
                    if lv >= 0 and lv < max_level and seen[t, f, lv]:
                        go_left = v == threshold[node]
                    else:
                        go_left = major_left[node]
                else:
                    go_left = v <= threshold[node]
                node = left[node] if go_left else right[node]
            out[r] += prob[node]
    out /= n_trees


@dataclass(frozen=True, eq=False)
class Tree:
    """One fitted tree. ``feature[i] == -1`` marks a leaf. ``counts`` holds the
    bootstrap class counts reaching each node; ``seen[f, v]`` records whether
    level ``v`` of categorical feature ``f`` occurred in the bootstrap."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray
    seen: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self, i) -> bool:
        return self.left[i] < 0

    @classmethod
    def stump(cls, feature: int, threshold: float, left_counts, right_counts, n_features: int,
              seen=None):
        """Depth-one tree; handy for hand-built forests."""
        lc, rc = np.asarray(left_counts, float), np.asarray(right_counts, float)
        return cls(np.array([feature, -1, -1]), np.array([threshold, 0.0, 0.0]),
                   np.array([1, -1, -1]), np.array([2, -1, -1]),
                   np.vstack([lc + rc, lc, rc]),
                   np.ones((n_features, 1), bool) if seen is None else np.asarray(seen, bool))


@dataclass(frozen=True, eq=False)
class Forest:
    trees: tuple[Tree, ...]
    classes: tuple[int, ...]
    feature_names: tuple[str, ...]
    is_categorical: np.ndarray
    class_counts: np.ndarray | None = None

    def __post_init__(self):
        d = len(self.feature_names)
        for t in self.trees:
            leaves = t.left < 0
            if np.any(t.counts < 0) or np.any(t.counts[leaves].sum(1) <= 0):
                raise SchemaError("leaf class counts must be non-negative with positive total")
            if np.any(t.feature[~leaves] >= d):
                raise SchemaError("split feature index out of range")

    @cached_property
    def _flat(self):
        sizes = [t.n_nodes for t in self.trees]
        roots = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)

        def shift(a, off):
            return np.where(a >= 0, a + off, -1)

        feature = np.concatenate([t.feature for t in self.trees]).astype(np.int64)
        threshold = np.concatenate([t.threshold for t in self.trees]).astype(np.float64)
        left = np.concatenate([shift(t.left, o) for t, o in zip(self.trees, roots)]).astype(np.int64)
        right = np.concatenate([shift(t.right, o) for t, o in zip(self.trees, roots)]).astype(np.int64)
        counts = np.concatenate([t.counts for t in self.trees])
        totals = counts.sum(1, keepdims=True)
        prob = np.divide(counts, totals, out=np.zeros_like(counts), where=totals > 0)
        # unseen categorical levels follow the child that received more bootstrap mass
        major_left = np.zeros(len(feature), bool)
        inner = left >= 0
        major_left[inner] = totals[left[inner], 0] >= totals[right[inner], 0]
        max_level = max(t.seen.shape[1] for t in self.trees)
        seen = np.zeros((len(self.trees), len(self.feature_names), max_level), bool)
        for i, t in enumerate(self.trees):
            seen[i, :, : t.seen.shape[1]] = t.seen
        return feature, threshold, left, right, prob, major_left, roots, seen

    def predict_matrix(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise SchemaError(f"expected {len(self.feature_names)} feature columns, got {X.shape}")
        if X.shape[0] >= _DEDUP_MIN_ROWS:
            # Shapley hybrids of categorical data repeat rows heavily
            rows = np.ascontiguousarray(X).view(np.dtype((np.void, X.dtype.itemsize * X.shape[1])))
            _, first, inverse = np.unique(rows.ravel(), return_index=True, return_inverse=True)
            if len(first) < 0.8 * X.shape[0]:
                return self.predict_matrix(X[first])[inverse.ravel()]
        out = np.zeros((X.shape[0], len(self.classes)))
        if X.shape[0]:
            feature, threshold, left, right, prob, major_left, roots, seen = self._flat
            _predict(X, feature, threshold, left, right, prob, major_left, roots,
                     np.asarray(self.is_categorical, bool), seen, out)
        return out


_DEDUP_MIN_ROWS = 4096


def _seed_sequence(seed) -> np.random.SeedSequence:
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def train_forest(train: Table, cfg: ForestConfig = ForestConfig(), seed=0) -> Forest:
    if train.n_rows < 2:
        raise DegenerateError("need at least 2 training rows")
    cols = train.feature_columns
    if not cols:
        raise SchemaError("training table has no feature columns")
    X = np.ascontiguousarray(train.features())
    y = train.labels()
    n_classes = train.target.n_levels
    if len(np.unique(y)) < 2:
        raise DegenerateError(f"target {train.target.name!r} has a single observed class")
    is_cat = np.array([c.is_categorical for c in cols])
    max_level = max([c.n_levels for c in cols if c.is_categorical], default=1)
    n, d = X.shape
    trees = []
    for child in _seed_sequence(seed).spawn(cfg.n_trees):
        rng = np.random.default_rng(child)
        idx = rng.integers(0, n, size=n).astype(np.int64)
        kernel_seed = int(rng.integers(0, 2**31 - 1))
        seen = np.zeros((d, max_level), bool)
        for j in np.flatnonzero(is_cat):
            seen[j, np.unique(X[idx, j]).astype(np.int64)] = True
        arrays = _grow(X, y, is_cat, n_classes, max_level, idx.copy(), cfg.max_features(d),
                       cfg.max_depth or 0, cfg.min_leaf, kernel_seed)
        trees.append(Tree(*arrays, seen=seen))
    return Forest(tuple(trees), tuple(range(n_classes)), tuple(c.name for c in cols), is_cat,
                  np.bincount(y, minlength=n_classes))


def predict_proba(forest: Forest, rows: Table) -> np.ndarray:
    names = tuple(rows.feature_names)
    if names != forest.feature_names:
        raise SchemaError(f"feature columns {names} do not match forest features "
                          f"{forest.feature_names}")
    kinds = np.array([c.is_categorical for c in rows.feature_columns], bool)
    if not np.array_equal(kinds, np.asarray(forest.is_categorical, bool)):
        raise SchemaError("feature kinds differ from the training table")
    return forest.predict_matrix(rows.features())


# -- AUC --------------------------------------------------------------------

def auc_binary(scores, labels) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 P(tie)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateError("AUC needs both classes present")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def auc_ovo(probs, labels) -> float:
    """One-vs-one multiclass AUC averaged over all unordered class pairs."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    observed = np.unique(labels)
    if observed.size < 2:
        raise DegenerateError("AUC needs at least 2 observed classes")
    pair_aucs = []
    for a, b in combinations(observed, 2):
        rows = (labels == a) | (labels == b)
        pa, pb = probs[rows, a], probs[rows, b]
        tot = pa + pb
        share_a = np.divide(pa, tot, out=np.full_like(pa, 0.5), where=tot > 0)
        is_a = (labels[rows] == a).astype(int)
        pair_aucs.append(0.5 * (auc_binary(share_a, is_a) + auc_binary(1.0 - share_a, 1 - is_a)))
    return float(np.mean(pair_aucs))


def auc_score(probs, labels) -> float:
    """Binary AUC on the positive-class column when there are two classes,
    one-vs-one otherwise."""
    probs = np.asarray(probs)
    if probs.shape[1] == 2:
        return auc_binary(probs[:, 1], labels)
    return auc_ovo(probs, labels)
