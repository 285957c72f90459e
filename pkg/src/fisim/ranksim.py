"""Similarity between two feature-importance outputs.

Rank-based measures operate on ranked lists of feature names; the
corrected variants give partial credit when the lists place different but
associated features at the same depth. The correlation-corrected agreement
maximises a linear objective over doubly stochastic matrices, whose optimum
sits at a permutation vertex, so it is computed with an exact assignment
solver. The permutation-corrected agreement enumerates all d! pairings and
is kept as an independent check (d <= 8).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from itertools import permutations
from typing import Sequence

import numpy as np

from . import assignment
from .association import AssociationMatrix
from .errors import ConfigError, DegenerateError, SchemaError, SizeError, TractabilityError
from .importance import ImportanceVector, rank

EXACT_MAX_DEPTH = 8


@dataclass(frozen=True)
class RboParams:
    p: float = 0.8
    k: int | None = None  # None: full list length
    normalize: bool = True

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ConfigError(f"p must lie in (0, 1), got {self.p}")
        if self.k is not None and self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")

    def depth(self, S: Sequence, T: Sequence) -> int:
        k = min(len(S), len(T)) if self.k is None else self.k
        if k > min(len(S), len(T)) or k < 1:
            raise SizeError(f"depth {k} outside 1..{min(len(S), len(T))}")
        return k


def _check_depth(S, T, d):
    if not 1 <= d <= min(len(S), len(T)):
        raise SizeError(f"depth {d} outside 1..{min(len(S), len(T))}")


def agreement(S: Sequence[str], T: Sequence[str], d: int) -> float:
    _check_depth(S, T, d)
    return len(set(S[:d]) & set(T[:d])) / d


def weights(p: float, k: int) -> np.ndarray:
    return (1.0 - p) * p ** np.arange(k)


def _weighted(per_depth: np.ndarray, params: RboParams) -> float:
    w = weights(params.p, len(per_depth))
    raw = float(w @ per_depth)
    if not params.normalize:
        return raw
    # same reduction for numerator and total (1 - p^k), so identical lists give exactly 1
    return min(1.0, raw / float(w @ np.ones_like(per_depth)))


def rbo(S: Sequence[str], T: Sequence[str], params: RboParams = RboParams()) -> float:
    k = params.depth(S, T)
    # running intersection size, one pass over both prefixes
    seen_s, seen_t, overlap = set(), set(), 0
    per_depth = np.empty(k)
    for i in range(k):
        a, b = S[i], T[i]
        if a == b:
            overlap += 1
        else:
            overlap += (a in seen_t) + (b in seen_s)
        seen_s.add(a)
        seen_t.add(b)
        per_depth[i] = overlap / (i + 1)
    return _weighted(per_depth, params)


@lru_cache(maxsize=None)
def _all_permutations(d: int) -> np.ndarray:
    return np.array(list(permutations(range(d))), dtype=np.int64).reshape(-1, d)


def best_pairing_bruteforce(weight: np.ndarray) -> float:
    """Max over all permutations pi of sum_i weight[i, pi(i)] by enumeration."""
    w = np.asarray(weight, dtype=np.float64)
    d = w.shape[0]
    if d > EXACT_MAX_DEPTH:
        raise TractabilityError(f"factorial search is limited to d <= {EXACT_MAX_DEPTH} (got {d}); "
                                "use the assignment solver")
    if d == 0:
        return 0.0
    perms = _all_permutations(d)
    return float(w[np.arange(d), perms].sum(1).max())


def corrected_agreement_exact(S, T, d: int, corr: AssociationMatrix) -> float:
    _check_depth(S, T, d)
    if d > EXACT_MAX_DEPTH:
        raise TractabilityError(f"permutation search is limited to depth {EXACT_MAX_DEPTH} "
                                f"(got {d}); use corrected_agreement_assignment")
    return best_pairing_bruteforce(corr.abs_block(S[:d], T[:d])) / d


def corrected_agreement_assignment(S, T, d: int, corr: AssociationMatrix) -> float:
    _check_depth(S, T, d)
    _, best = assignment.solve_max(corr.abs_block(S[:d], T[:d]))
    return best / d


def rbo_per(S, T, params: RboParams, corr: AssociationMatrix) -> float:
    k = params.depth(S, T)
    return _weighted(np.array([corrected_agreement_exact(S, T, d, corr)
                               for d in range(1, k + 1)]), params)


def rbo_cor(S, T, params: RboParams, corr: AssociationMatrix) -> float:
    k = params.depth(S, T)
    return _weighted(np.array([corrected_agreement_assignment(S, T, d, corr)
                               for d in range(1, k + 1)]), params)


def _aligned(a: ImportanceVector, b: ImportanceVector) -> tuple[np.ndarray, np.ndarray]:
    if set(a.feature_names) != set(b.feature_names) or \
            len(a.feature_names) != len(b.feature_names):
        raise SchemaError("importance vectors cover different features")
    pos = {n: i for i, n in enumerate(b.feature_names)}
    return a.scores, b.scores[[pos[n] for n in a.feature_names]]


def cosine(a: ImportanceVector, b: ImportanceVector) -> float:
    x, y = _aligned(a, b)
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        raise DegenerateError("cosine similarity of a zero vector is undefined")
    return float(np.clip(x @ y / (nx * ny), -1.0, 1.0))


def permute_rank_list(S: Sequence[str], seed) -> list[str]:
    order = np.random.default_rng(seed).permutation(len(S))
    return [S[i] for i in order]


def permute_importance(iv: ImportanceVector, seed) -> ImportanceVector:
    """Reassign the sorted scores of ``iv`` to a random ordering of its features,
    so that the result ranks exactly like ``permute_rank_list(rank(iv), seed)``
    (up to exact ties)."""
    ranked = rank(iv)
    shuffled = permute_rank_list(ranked, seed)
    sorted_scores = np.sort(iv.scores)[::-1]
    by_name = dict(zip(shuffled, sorted_scores))
    return ImportanceVector(iv.feature_names, [by_name[n] for n in iv.feature_names], iv.measure)


@dataclass(frozen=True)
class SimilarityReport:
    rbo: float
    rbo_raw: float
    rbo_per: float | None  # unavailable beyond the factorial search depth
    rbo_cor: float
    cosine: float
    params: RboParams = RboParams()

    def __post_init__(self):
        tol = 1e-9
        if self.rbo_per is not None and not (self.rbo_cor + tol >= self.rbo_per >= self.rbo - tol):
            raise ConfigError(f"similarity chain violated: {self}")
        if self.rbo_cor + tol < self.rbo:
            raise ConfigError(f"similarity chain violated: {self}")

    def metrics(self) -> dict[str, float | None]:
        out = asdict(self)
        out.pop("params")
        return out


def compare(original: ImportanceVector, synthetic: ImportanceVector, corr: AssociationMatrix,
            params: RboParams = RboParams()) -> SimilarityReport:
    S, T = rank(original), rank(synthetic)
    if set(S) != set(T):
        raise SchemaError("ranked lists cover different features")
    k = params.depth(S, T)
    raw = RboParams(params.p, params.k, normalize=False)
    return SimilarityReport(
        rbo=rbo(S, T, params),
        rbo_raw=rbo(S, T, raw),
        rbo_per=rbo_per(S, T, params, corr) if k <= EXACT_MAX_DEPTH else None,
        rbo_cor=rbo_cor(S, T, params, corr),
        cosine=cosine(original, synthetic),
        params=params,
    )
