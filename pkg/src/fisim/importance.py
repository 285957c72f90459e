"""Feature importance measures for fitted forests.

* MDI: impurity decrease accumulated over the training-time splits.
* PFI: drop in validation AUC when one column is shuffled.
* Shapley: interventional Shapley values of the forest's probability for a
  reference class, either exactly (all 2**d coalitions) or by sampling
  feature orderings. Global importance is the mean absolute value over
  explained instances.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, DegenerateError, SchemaError, TractabilityError
from .forest import Forest, auc_score, predict_proba
from .tabular import Table

MEASURES = ("mdi", "pfi", "shap")
EXACT_MAX_FEATURES = 12


@dataclass(frozen=True, eq=False)
class ImportanceVector:
    feature_names: tuple[str, ...]
    scores: np.ndarray
    measure: str

    def __post_init__(self):
        scores = np.array(self.scores, dtype=np.float64)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if scores.shape != (len(self.feature_names),):
            raise SchemaError("one score per feature required")
        if not np.all(np.isfinite(scores)):
            raise SchemaError("importance scores must be finite")
        if self.measure not in MEASURES:
            raise ConfigError(f"unknown importance measure {self.measure!r}")
        if self.measure == "mdi" and scores.size and (
                np.any(scores < 0) or abs(scores.sum() - 1.0) > 1e-9):
            raise SchemaError("MDI scores must be non-negative and sum to 1")
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.feature_names, self.scores.tolist()))


def rank(iv: ImportanceVector) -> list[str]:
    """Feature names by descending score; exact ties by ascending name."""
    order = sorted(range(len(iv.feature_names)),
                   key=lambda i: (-iv.scores[i], iv.feature_names[i]))
    return [iv.feature_names[i] for i in order]


# -- MDI --------------------------------------------------------------------

def _gini(counts: np.ndarray) -> np.ndarray:
    tot = counts.sum(-1)
    p = np.divide(counts, tot[..., None], out=np.zeros_like(counts), where=tot[..., None] > 0)
    return 1.0 - (p ** 2).sum(-1)


def mdi(forest: Forest) -> ImportanceVector:
    d = len(forest.feature_names)
    total = np.zeros(d)
    for tree in forest.trees:
        inner = np.flatnonzero(tree.left >= 0)
        if inner.size == 0:
            continue
        n = tree.counts.sum(1)
        imp = _gini(tree.counts)
        l, r = tree.left[inner], tree.right[inner]
        gain = (n[inner] * imp[inner] - n[l] * imp[l] - n[r] * imp[r]) / n[0]
        np.add.at(total, tree.feature[inner], np.maximum(gain, 0.0))
    s = total.sum()
    scores = total / s if s > 0 else np.full(d, 1.0 / d)
    return ImportanceVector(forest.feature_names, scores, "mdi")


# -- PFI --------------------------------------------------------------------

def pfi(forest: Forest, validation: Table, n_repeats: int = 5, seed=0) -> ImportanceVector:
    if n_repeats < 1:
        raise ConfigError("n_repeats must be >= 1")
    if validation.n_rows == 0:
        raise DegenerateError("empty validation table")
    predict_proba(forest, validation.take(np.arange(0)))  # schema check
    X = validation.features().copy()
    y = validation.labels()
    base = auc_score(forest.predict_matrix(X), y)
    rng = np.random.default_rng(seed)
    scores = np.zeros(X.shape[1])
    for j in range(X.shape[1]):
        original = X[:, j].copy()
        for _ in range(n_repeats):
            X[:, j] = original[rng.permutation(len(original))]
            scores[j] += base - auc_score(forest.predict_matrix(X), y)
        X[:, j] = original
    return ImportanceVector(forest.feature_names, scores / n_repeats, "pfi")


# -- Shapley ----------------------------------------------------------------

Score = Callable[[np.ndarray], np.ndarray]


def reference_class(forest: Forest) -> int:
    """Class whose probability is explained: the positive class for binary
    targets, otherwise the most frequent training class."""
    if len(forest.classes) == 2 or forest.class_counts is None:
        return 1
    return int(np.argmax(forest.class_counts))


def forest_score(forest: Forest) -> Score:
    ref = reference_class(forest)
    return lambda X: forest.predict_matrix(X)[:, ref]


def _coalition_weights(d: int) -> np.ndarray:
    return np.array([math.factorial(s) * math.factorial(d - s - 1) / math.factorial(d)
                     for s in range(d)])


def exact_shapley(score: Score, instances: np.ndarray, background: np.ndarray,
                  chunk_rows: int = 1 << 20) -> np.ndarray:
    """Interventional Shapley values by enumerating every coalition.

    ``instances`` is (n, d) or (d,); returns an array of matching shape.
    """
    instances = np.asarray(instances, dtype=np.float64)
    single = instances.ndim == 1
    instances = np.atleast_2d(instances)
    background = np.atleast_2d(np.asarray(background, dtype=np.float64))
    d = instances.shape[1]
    if d > EXACT_MAX_FEATURES:
        raise TractabilityError(f"exact Shapley enumeration is limited to {EXACT_MAX_FEATURES} "
                                f"features (got {d}); use the sampled estimator instead")
    if background.shape[0] == 0:
        raise DegenerateError("empty background set")
    masks = np.arange(2 ** d)
    in_coalition = ((masks[:, None] >> np.arange(d)) & 1).astype(bool)
    sizes = in_coalition.sum(1)
    weights = _coalition_weights(d)
    per_instance = (2 ** d) * background.shape[0]
    step = max(1, chunk_rows // per_instance)
    phi = np.zeros_like(instances)
    for lo in range(0, len(instances), step):
        x = instances[lo:lo + step]
        hybrid = np.where(in_coalition[None, :, None, :], x[:, None, None, :],
                          background[None, None, :, :])
        value = score(hybrid.reshape(-1, d)).reshape(len(x), 2 ** d, -1).mean(-1)
        for i in range(d):
            without = masks[~in_coalition[:, i]]
            gain = value[:, without | (1 << i)] - value[:, without]
            phi[lo:lo + step, i] = gain @ weights[sizes[without]]
    return phi[0] if single else phi


def sampled_shapley(score: Score, instances: np.ndarray, background: np.ndarray,
                    n_permutations: int, rng, chunk_rows: int = 1 << 20) -> np.ndarray:
    """Permutation-sampling Shapley estimate, one background row per ordering.

    For each ordering the instance's values are switched in one feature at a
    time, starting from a background row; the score change at each step is
    credited to the feature just switched. Returns (n, d) estimates.
    """
    if n_permutations < 1:
        raise ConfigError("n_permutations must be >= 1")
    instances = np.atleast_2d(np.asarray(instances, dtype=np.float64))
    background = np.atleast_2d(np.asarray(background, dtype=np.float64))
    if background.shape[0] == 0 or instances.shape[0] == 0:
        raise DegenerateError("empty background or instance set")
    n, d = instances.shape
    steps = np.arange(d + 1)
    step = max(1, chunk_rows // (n_permutations * (d + 1)))
    phi = np.zeros((n, d))
    for lo in range(0, n, step):
        x = instances[lo:lo + step]
        k = len(x)
        position = np.argsort(rng.random((k, n_permutations, d)), axis=-1)
        z = background[rng.integers(0, len(background), size=(k, n_permutations))]
        switched = position[:, :, None, :] < steps[None, None, :, None]
        hybrid = np.where(switched, x[:, None, None, :], z[:, :, None, :])
        s = score(hybrid.reshape(-1, d)).reshape(k, n_permutations, d + 1)
        gains = np.diff(s, axis=-1)
        phi[lo:lo + k] = np.take_along_axis(gains, position, axis=-1).mean(1)
    return phi


def shapley_exact(forest: Forest, instance, background: Table | np.ndarray) -> np.ndarray:
    bg = background.features() if isinstance(background, Table) else background
    return exact_shapley(forest_score(forest), np.asarray(instance, dtype=np.float64), bg)


def _rows(table: Table, limit: int | None, rng) -> np.ndarray:
    X = table.features()
    if limit is not None and len(X) > limit:
        X = X[np.sort(rng.choice(len(X), size=limit, replace=False))]
    return X


def shapley_mc(forest: Forest, validation: Table, background: Table, n_permutations: int = 100,
               seed=0, max_instances: int | None = 200,
               max_background: int | None = 100) -> ImportanceVector:
    """Global Shapley importance (mean |phi| over validation instances)."""
    if n_permutations < 1:
        raise ConfigError("n_permutations must be >= 1")
    if validation.n_rows == 0 or background.n_rows == 0:
        raise DegenerateError("validation and background tables must be non-empty")
    rng = np.random.default_rng(seed)
    X = _rows(validation, max_instances, rng)
    B = _rows(background, max_background, rng)
    phi = sampled_shapley(forest_score(forest), X, B, n_permutations, rng)
    return ImportanceVector(forest.feature_names, np.abs(phi).mean(0), "shap")


def shapley_exact_global(forest: Forest, validation: Table, background: Table, seed=0,
                         max_instances: int | None = 200,
                         max_background: int | None = 100) -> ImportanceVector:
    """Exact counterpart of :func:`shapley_mc` (same row subsampling)."""
    rng = np.random.default_rng(seed)
    X = _rows(validation, max_instances, rng)
    B = _rows(background, max_background, rng)
    phi = exact_shapley(forest_score(forest), X, B)
    return ImportanceVector(forest.feature_names, np.abs(phi).mean(0), "shap")
