"""Descriptor similarity: normalized mutual information combined with cosine.

MI tolerates intensity remapping between scans (useful across acquisitions),
cosine anchors absolute agreement; the product of the clamped cosine and NMI
keeps both on [0, 1] and penalizes disagreement from either side. A batch
entry point scores many candidate descriptors against many queries in one
parallel kernel call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels

COMBINE_MODES = ("product", "mean")


@dataclass(frozen=True)
class SimilarityParams:
    histogram_bins: int = 16
    intensity_range: tuple[float, float] = (0.0, 4096.0)
    combine: str = "product"

    def __post_init__(self):
        if self.histogram_bins < 2:
            raise ValueError(f"histogram_bins must be >= 2, got {self.histogram_bins}")
        lo, hi = self.intensity_range
        if not hi > lo:
            raise ValueError(f"bad intensity_range {self.intensity_range}")
        if self.combine not in COMBINE_MODES:
            raise ValueError(f"combine must be one of {COMBINE_MODES}")

    @property
    def inv_bin_width(self) -> float:
        lo, hi = self.intensity_range
        return self.histogram_bins / (hi - lo)


DEFAULT_PARAMS = SimilarityParams()


def _check_pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    return a, b


def cosine(a, b) -> float:
    """Inner-product cosine in [-1, 1]; 0 if either vector is all-zero.

    Evaluated as sign(dot) * sqrt(dot^2 / (|a|^2 |b|^2)) so that identical
    (or exactly opposite) vectors score exactly +-1.
    """
    a, b = _check_pair(a, b)
    aa = float(np.dot(a, a))
    bb = float(np.dot(b, b))
    if aa == 0.0 or bb == 0.0:
        return 0.0
    dot = float(np.dot(a, b))
    c = float(np.sqrt(min(dot * dot / (aa * bb), 1.0)))
    return c if dot >= 0 else -c


def bin_indices(values, params: SimilarityParams = DEFAULT_PARAMS) -> np.ndarray:
    """Fixed-edge histogram bin per value, clamped to the edge bins."""
    v = np.asarray(values, dtype=np.float64)
    lo, _ = params.intensity_range
    idx = np.floor((v - lo) * params.inv_bin_width).astype(np.int64)
    return np.clip(idx, 0, params.histogram_bins - 1)


def _entropy(counts: np.ndarray, total: int) -> float:
    nz = counts[counts > 0].astype(np.float64)
    return float(np.log(total) - np.dot(nz, np.log(nz)) / total)


def normalized_mutual_information(a, b, params: SimilarityParams = DEFAULT_PARAMS) -> float:
    """2*I(A;B) / (H(A)+H(B)) over the fixed joint histogram; 0/0 -> 0.

    The joint table is accumulated in a canonical orientation (decided by
    lexicographic comparison of the two bin sequences) so the scan order of
    the entropy sum, and therefore the result, is exactly symmetric in a, b.
    """
    a, b = _check_pair(a, b)
    nb_ = params.histogram_bins
    if a.shape[0] < nb_:
        raise ValueError(f"need at least {nb_} samples, got {a.shape[0]}")
    ia = bin_indices(a, params)
    ib = bin_indices(b, params)
    diff = np.nonzero(ia != ib)[0]
    if diff.size and ia[diff[0]] > ib[diff[0]]:
        ia, ib = ib, ia
    joint = np.bincount(ia * nb_ + ib, minlength=nb_ * nb_).reshape(nb_, nb_)
    n = a.shape[0]
    h_a = _entropy(joint.sum(axis=1), n)
    h_b = _entropy(joint.sum(axis=0), n)
    h_ab = _entropy(joint.reshape(-1), n)
    denom = h_a + h_b
    if denom <= 0.0:
        return 0.0
    return float(np.clip(2.0 * (denom - h_ab) / denom, 0.0, 1.0))


def combined_similarity(a, b, params: SimilarityParams = DEFAULT_PARAMS) -> float:
    """Clamped-cosine and NMI combined per params.combine; range [0, 1]."""
    c = max(cosine(a, b), 0.0)
    m = normalized_mutual_information(a, b, params)
    if params.combine == "product":
        return c * m
    return 0.5 * (c + m)


class QueryPack:
    """Query descriptors with the per-query stats the scoring kernel reuses.

    Entropies and summed squares are computed with the same strict kernels
    the candidate side uses, so a candidate identical to a query reproduces
    the query's stats bit for bit and scores exactly 1.
    """

    __slots__ = ("values", "bins", "entropies", "sumsq")

    def __init__(self, queries: np.ndarray, params: SimilarityParams = DEFAULT_PARAMS):
        q = np.ascontiguousarray(np.atleast_2d(np.asarray(queries, dtype=np.float32)))
        self.values = q
        self.bins = np.ascontiguousarray(bin_indices(q, params).astype(np.int32))
        nb_ = params.histogram_bins
        ent = np.empty(q.shape[0], dtype=np.float64)
        sumsq = np.empty(q.shape[0], dtype=np.float64)
        for i in range(q.shape[0]):
            counts = np.bincount(self.bins[i], minlength=nb_).astype(np.float64)
            ent[i] = _kernels.count_entropy(counts, float(q.shape[1]))
            sumsq[i] = _kernels.sum_squares(q[i])
        self.entropies = ent
        self.sumsq = sumsq


def combined_similarity_batch(
    queries, candidates, params: SimilarityParams = DEFAULT_PARAMS
) -> np.ndarray:
    """Score (q, m) query descriptors against (n, m) candidates -> (q, n)."""
    pack = queries if isinstance(queries, QueryPack) else QueryPack(queries, params)
    cands = np.ascontiguousarray(np.atleast_2d(np.asarray(candidates, dtype=np.float32)))
    if cands.shape[1] != pack.values.shape[1]:
        raise ValueError(f"length mismatch: {pack.values.shape[1]} vs {cands.shape[1]}")
    if cands.shape[1] < params.histogram_bins:
        raise ValueError(f"need at least {params.histogram_bins} samples")
    out = np.empty((pack.values.shape[0], cands.shape[0]), dtype=np.float64)
    _kernels.score_combined(
        cands,
        pack.values,
        pack.bins,
        pack.entropies,
        pack.sumsq,
        params.histogram_bins,
        params.intensity_range[0],
        params.inv_bin_width,
        0 if params.combine == "product" else 1,
        out,
    )
    return out
