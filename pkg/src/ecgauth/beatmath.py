"""Per-beat mathematics.

Pearson correlation for prescreening, average-linkage rank assignment,
Kaiser-window weights keyed by rank, weighted averaging, and the truncated
orthonormal DCT-II used as the feature transform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._accel import maybe_jit
from .errors import ContractError, ZeroVarianceError


def pearson(x, y, y_mean: float | None = None, y_sdev: float | None = None) -> float:
    """Sample Pearson correlation between two equal-length vectors.

    The y-side mean and sample standard deviation (ddof=1) may be supplied
    precomputed, which is how the verification loop avoids recomputing
    template statistics on every beat.

    Raises:
        ContractError: mismatched shapes or fewer than 2 points.
        ZeroVarianceError: either vector is constant.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise ContractError(f"pearson needs equal-length vectors, got {x.shape} and {y.shape}")
    n = x.shape[0]
    if n < 2:
        raise ContractError("pearson needs at least 2 points")
    dx = x - x.mean()
    sx = math.sqrt(float(dx @ dx))
    if not (sx > 0.0) or not math.isfinite(sx):
        raise ZeroVarianceError("x is constant; correlation undefined")
    if y_mean is None or y_sdev is None:
        dy = y - y.mean()
        sy = math.sqrt(float(dy @ dy))
    else:
        dy = y - y_mean
        sy = y_sdev * math.sqrt(n - 1)
    if not (sy > 0.0) or not math.isfinite(sy):
        raise ZeroVarianceError("y is constant; correlation undefined")
    r = float(dx @ dy) / (sx * sy)
    return min(1.0, max(-1.0, r))


def _linkage_ranks_impl(dist):
    b = dist.shape[0]
    ranks = np.zeros(b, dtype=np.int64)
    if b == 1:
        ranks[0] = 1
        return ranks
    d = dist.copy()
    size = np.ones(b, dtype=np.int64)
    mm = np.arange(b)  # smallest buffer index inside each active cluster
    active = np.ones(b, dtype=np.bool_)
    next_rank = 1
    for _step in range(b - 1):
        best_i = -1
        best_j = -1
        best_d = np.inf
        best_lo = -1
        best_hi = -1
        for i in range(b):
            if not active[i]:
                continue
            for j in range(i + 1, b):
                if not active[j]:
                    continue
                dij = d[i, j]
                if mm[i] < mm[j]:
                    lo, hi = mm[i], mm[j]
                else:
                    lo, hi = mm[j], mm[i]
                take = False
                if dij < best_d:
                    take = True
                elif dij == best_d:
                    # equal-distance merges resolved by buffer order
                    if lo < best_lo or (lo == best_lo and hi < best_hi):
                        take = True
                if take:
                    best_d = dij
                    best_i, best_j = i, j
                    best_lo, best_hi = lo, hi
        i, j = best_i, best_j
        if size[i] == 1 and size[j] == 1:
            older = mm[i] if mm[i] < mm[j] else mm[j]
            newer = mm[j] if mm[i] < mm[j] else mm[i]
            ranks[older] = next_rank
            ranks[newer] = next_rank + 1
            next_rank += 2
        elif size[i] == 1:
            ranks[mm[i]] = next_rank
            next_rank += 1
        elif size[j] == 1:
            ranks[mm[j]] = next_rank
            next_rank += 1
        si, sj = size[i], size[j]
        for k in range(b):
            if active[k] and k != i and k != j:
                dk = (si * d[i, k] + sj * d[j, k]) / (si + sj)
                d[i, k] = dk
                d[k, i] = dk
        size[i] = si + sj
        if mm[j] < mm[i]:
            mm[i] = mm[j]
        active[j] = False
    return ranks


_linkage_ranks = maybe_jit(_linkage_ranks_impl)


def pairwise_euclidean(vectors: np.ndarray) -> np.ndarray:
    """Dense Euclidean distance matrix for a (B, N) stack of vectors."""
    x = np.asarray(vectors, dtype=np.float64)
    sq = np.einsum("ij,ij->i", x, x)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return np.sqrt(d2)


def cluster_ranks(beats) -> np.ndarray:
    """Assign agglomeration ranks 1..B via average-linkage clustering.

    Clusters start as singletons over pairwise Euclidean distances and merge
    by lowest average linkage until one remains. A beat's rank is the order
    in which it first joins a cluster; earlier means more central. When two
    singletons merge in one step the older buffer entry takes the lower rank,
    and any remaining ties resolve by buffer order.
    """
    x = np.asarray(beats, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ContractError(f"cluster_ranks needs a (B, N) stack, got shape {x.shape}")
    if x.shape[0] == 1:
        return np.array([1], dtype=np.int64)
    return _linkage_ranks(pairwise_euclidean(x))


def _i0(x: float) -> float:
    # power series for the order-zero modified Bessel function,
    # truncated when a term drops below 1e-12 relative
    q = x * x / 4.0
    term = 1.0
    total = 1.0
    k = 0
    while True:
        k += 1
        term *= q / (k * k)
        total += term
        if term <= 1e-12 * total:
            return total


_kaiser_cache: dict[tuple[int, float], np.ndarray] = {}


def kaiser_weights(b: int, beta: float = 6.0) -> np.ndarray:
    """Rank-indexed averaging weights from the descending half of a Kaiser window.

    Builds a length 2B-1 Kaiser window, takes its descending half (center to
    end), maps it onto ranks 1..B, and normalizes to sum 1. Rank 1 therefore
    always carries the largest weight.
    """
    if b < 1:
        raise ContractError(f"need at least 1 beat, got {b}")
    if beta < 0:
        raise ContractError(f"beta must be nonnegative, got {beta}")
    key = (b, float(beta))
    cached = _kaiser_cache.get(key)
    if cached is None:
        if b == 1:
            cached = np.array([1.0])
        else:
            length = 2 * b - 1
            denom = _i0(float(beta))
            half = np.empty(b, dtype=np.float64)
            for r in range(b):
                m = (b - 1) + r
                xi = 2.0 * m / (length - 1) - 1.0
                half[r] = _i0(float(beta) * math.sqrt(max(0.0, 1.0 - xi * xi))) / denom
            cached = half / half.sum()
        _kaiser_cache[key] = cached
    return cached.copy()


@dataclass(frozen=True)
class AveragedBeat:
    """Weighted average of the buffered beats at one verification instant."""

    vector: np.ndarray
    t: float
    contributing_count: int

    def __post_init__(self):
        if self.contributing_count < 1:
            raise ContractError("contributing_count must be >= 1")


def weighted_average(beats, weights, t: float = 0.0) -> AveragedBeat:
    """Convex combination of beat vectors; weights must be aligned with beats."""
    x = np.asarray(beats, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if x.ndim != 2 or w.ndim != 1 or x.shape[0] != w.shape[0]:
        raise ContractError(f"shape mismatch: beats {x.shape}, weights {w.shape}")
    if np.any(w < 0):
        raise ContractError("weights must be nonnegative")
    if abs(float(w.sum()) - 1.0) > 1e-9:
        raise ContractError(f"weights must sum to 1, got {w.sum()!r}")
    return AveragedBeat(vector=w @ x, t=t, contributing_count=x.shape[0])


@dataclass(frozen=True)
class DctMatrix:
    """Precomputed M x N slice of the orthonormal DCT-II basis.

    Row k (1-based) holds sqrt(2/N) / sqrt(1 + [k == 1]) *
    cos(pi/(2N) * (2n - 1) * (k - 1)) for n = 1..N. With M = N the matrix
    satisfies G @ G.T = I to machine precision.
    """

    n: int
    m: int
    g: np.ndarray

    @classmethod
    def build(cls, n: int = 256, m: int = 40) -> "DctMatrix":
        if not (1 <= m <= n):
            raise ContractError(f"need 1 <= M <= N, got M={m}, N={n}")
        k = np.arange(1, m + 1, dtype=np.float64)[:, None]
        nn = np.arange(1, n + 1, dtype=np.float64)[None, :]
        g = math.sqrt(2.0 / n) * np.cos(math.pi / (2.0 * n) * (2.0 * nn - 1.0) * (k - 1.0))
        g[0, :] /= math.sqrt(2.0)
        return cls(n=n, m=m, g=g)


def dct_features(a, matrix: DctMatrix) -> np.ndarray:
    """First M DCT-II coefficients of an averaged beat: D = G @ A."""
    vec = a.vector if isinstance(a, AveragedBeat) else np.asarray(a, dtype=np.float64)
    if vec.ndim != 1 or vec.shape[0] != matrix.n:
        raise ContractError(f"input length {vec.shape} does not match N={matrix.n}")
    return matrix.g @ vec
