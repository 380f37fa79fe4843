"""Pure numeric kernels for affinity-based memory reads.

All operations are pure functions of their inputs; given the same inputs (and
seed, for the stochastic regularizers) they produce bit-identical outputs.
Column reductions use a fixed summation order, so per-query columns can be
evaluated in parallel by callers without changing results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import FeatureGrid, MemorySlot
from .errors import MissingObjectError, NonFiniteError, ShapeError


@dataclass(frozen=True)
class AffinityMatrix:
    """Scaled negative squared distances, support rows x query columns.

    Entries are <= 0 and hit 0 only for an exact key match. Dropped
    connections are -inf and take exactly zero softmax weight. Row order is
    the caller's support order; the bank keeps its support sorted by
    ascending slot id, so row-index tie-breaks equal slot-id tie-breaks.
    """

    data: np.ndarray  # (S, Q) float64

    @property
    def num_support(self) -> int:
        return self.data.shape[0]

    @property
    def num_query(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class TopKSelection:
    """Per-query lists of the strongest support indices.

    indices has shape (min(k, S), Q); each column is sorted by descending
    affinity, ties broken by ascending row index. stamp is an opaque token a
    support owner may attach to detect stale selections after mutation.
    """

    k: int
    num_support: int
    indices: np.ndarray  # (m, Q) int64
    stamp: object = None

    @property
    def per_query(self) -> int:
        return self.indices.shape[0]

    def column(self, j: int) -> list[int]:
        return self.indices[:, j].tolist()


def _as_key_matrix(keys, c_key: int, name: str) -> np.ndarray:
    arr = np.ascontiguousarray(keys, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != c_key:
        raise ShapeError(
            f"{name} must be (n, {c_key}) key vectors, got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return arr


def compute_affinity(support_keys, query_keys, c_key: int) -> AffinityMatrix:
    """Entry (i, j) = -||s_i - q_j||^2 / sqrt(c_key).

    Uses the Gram expansion ||s||^2 + ||q||^2 - 2 s.q. Entries the expansion
    leaves within rounding error of zero are recomputed from the actual
    difference vectors, so an exact key match lands on exactly 0 and nothing
    else does. The Gram product is evaluated in a canonical orientation so
    that swapping support and query transposes the result exactly.
    """
    if c_key < 1:
        raise ShapeError(f"c_key must be >= 1, got {c_key}")
    s = _as_key_matrix(support_keys, c_key, "support_keys")
    q = _as_key_matrix(query_keys, c_key, "query_keys")
    if s.shape[0] == 0 or q.shape[0] == 0:
        raise ShapeError("affinity needs at least one support and one query vector")
    sn = np.einsum("ic,ic->i", s, s)
    qn = np.einsum("jc,jc->j", q, q)
    if s.shape[0] >= q.shape[0]:
        gram = s @ q.T
    else:
        gram = (q @ s.T).T
    d2 = sn[:, None] + qn[None, :]
    np.multiply(gram, 2.0, out=gram)
    np.subtract(d2, gram, out=d2)
    tol = 1e-12 * (sn.max() + qn.max())
    near = d2 < tol
    if np.any(near):
        rows, cols = np.nonzero(near)
        # a shared random projection separates equal pairs (exactly zero)
        # from merely-near ones, which get an honest recompute
        probe = np.random.default_rng(0x5EED).standard_normal(c_key)
        ps, pq = s @ probe, q @ probe
        same = ps[rows] == pq[cols]
        d2[rows[same], cols[same]] = 0.0
        rows, cols = rows[~same], cols[~same]
        if rows.size:
            diff = s[rows] - q[cols]
            d2[rows, cols] = np.einsum("nc,nc->n", diff, diff)
    np.maximum(d2, 0.0, out=d2)
    np.multiply(d2, -1.0 / math.sqrt(c_key), out=d2)
    return AffinityMatrix(d2)


def select_topk(aff: AffinityMatrix, k: int) -> TopKSelection:
    """Indices of the min(k, S) largest entries per query column.

    Each column comes back sorted by descending affinity with ties broken by
    ascending row index. Uses a partial partition with an exact fix-up pass
    for columns whose cutoff value is tied across the partition boundary.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    data = aff.data
    n_support = data.shape[0]
    m = min(k, n_support)
    if m == n_support:
        order = np.argsort(-data, axis=0, kind="stable")
        return TopKSelection(k=k, num_support=n_support, indices=order)

    # partition for the m largest without materializing -data
    cand = np.argpartition(data, n_support - m, axis=0)[n_support - m:, :]
    cand.sort(axis=0)  # ascending row index, so the stable sort breaks ties right
    vals = np.take_along_axis(data, cand, axis=0)
    inner = np.argsort(-vals, axis=0, kind="stable")
    sel = np.take_along_axis(cand, inner, axis=0)
    selv = np.take_along_axis(vals, inner, axis=0)

    # Partition picks ties at the cutoff arbitrarily; redo those columns exactly.
    cutoff = selv[-1, :]
    ties_total = np.count_nonzero(data == cutoff[None, :], axis=0)
    ties_kept = np.count_nonzero(selv == cutoff[None, :], axis=0)
    for j in np.flatnonzero(ties_total != ties_kept):
        sel[:, j] = np.argsort(-data[:, j], kind="stable")[:m]
    return TopKSelection(k=k, num_support=n_support, indices=sel)


def softmax_weights(aff_entries) -> np.ndarray:
    """Stabilized softmax over one query column's affinities."""
    a = np.asarray(aff_entries, dtype=np.float64)
    if a.ndim != 1:
        raise ShapeError(f"expected a 1-D list of entries, got shape {a.shape}")
    if a.size == 0:
        raise ValueError("softmax over an empty entry list")
    if not np.all(np.isfinite(a)):
        raise NonFiniteError("softmax entries must be finite")
    w = np.exp(a - a.max())
    return w / w.sum()


def _column_softmax(a: np.ndarray, valid: np.ndarray | None = None) -> np.ndarray:
    """Softmax along axis 0 of an (m, Q) block.

    valid marks entries that participate; excluded entries get weight exactly
    0. Columns with no valid entry come back all-zero (the caller decides
    what an unsupported column means).
    """
    if valid is not None:
        a = np.where(valid, a, -np.inf)
    col_max = a.max(axis=0)
    live = np.isfinite(col_max)
    shifted = a - np.where(live, col_max, 0.0)[None, :]
    w = np.exp(shifted)
    if valid is not None:
        w = np.where(valid, w, 0.0)
    w[:, ~live] = 0.0
    total = w.sum(axis=0)
    safe = np.where(total > 0.0, total, 1.0)
    return w / safe


def weighted_read(
    weights: np.ndarray,
    selection: TopKSelection,
    values: np.ndarray,
    grid_hw: tuple[int, int],
    has_value: np.ndarray | None = None,
) -> FeatureGrid:
    """Reconstruct a value grid: output position j = sum_i w[i, j] * v[sel[i, j]].

    values is the full (S, C_value) per-slot table for one object; has_value
    marks which slots actually hold it. A selected slot without a value must
    carry weight exactly 0, otherwise the read is unsound and raises.
    """
    weights = np.asarray(weights, dtype=np.float64)
    sel = selection.indices
    if weights.shape != sel.shape:
        raise ShapeError(
            f"weights shape {weights.shape} does not align with selection {sel.shape}"
        )
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != selection.num_support:
        raise ShapeError(
            f"values must be ({selection.num_support}, C_value), got {values.shape}"
        )
    if has_value is not None:
        missing = ~np.asarray(has_value, dtype=bool)[sel]
        if np.any(missing & (weights != 0.0)):
            raise MissingObjectError(
                "a selected slot with nonzero weight holds no value for this object"
            )
        gathered = np.where(missing[:, :, None], 0.0, values[sel])
    else:
        gathered = values[sel]
    out = np.einsum("mq,mqc->qc", weights, gathered)
    h, w = grid_hw
    return FeatureGrid(h, w, values.shape[1], out)


def full_read(
    slots: Sequence[MemorySlot], query_keys: FeatureGrid, object_id: int
) -> FeatureGrid:
    """Dense read: softmax over every slot holding the object, no top-k.

    This is the training-style path and doubles as the oracle for the top-k
    inference path (they agree when k >= S).
    """
    holders = [s for s in slots if object_id in s.values]
    if not holders:
        raise MissingObjectError(f"no slot holds values for object {object_id}")
    keys = np.stack([s.key for s in holders])
    vals = np.stack([np.asarray(s.values[object_id], dtype=np.float64) for s in holders])
    aff = compute_affinity(keys, query_keys.data, query_keys.channels)
    w = _column_softmax(aff.data)
    out = np.einsum("sq,sc->qc", w, vals)
    return FeatureGrid(query_keys.height, query_keys.width, vals.shape[1], out)


def affinity_dropout(aff: AffinityMatrix, q: float, rng_seed: int) -> AffinityMatrix:
    """Independently drop each connection with probability q.

    Dropped entries become -inf, which the softmax treats as exact exclusion
    rather than a large-but-finite penalty. Deterministic given the seed.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"drop probability must be in [0, 1], got {q}")
    rng = np.random.default_rng(rng_seed)
    dropped = rng.random(aff.data.shape) < q
    return AffinityMatrix(np.where(dropped, -np.inf, aff.data))


def reallocate_support_attention(
    aff: AffinityMatrix,
    foreground_mask: np.ndarray,
    on_raw_distances: bool = True,
) -> AffinityMatrix:
    """Rescale foreground support rows by their normalized attention rank.

    Per foreground row i: A_i = sum_j of the working matrix row, rows are
    ranked descending (rank 1 = largest A_i), and row i is multiplied by
    rank_i / sum(ranks). Background rows pass through untouched.

    on_raw_distances=True (default) applies the rule to the positive squared
    distances (-affinity) and negates back, so rows that match queries poorly
    get the small multipliers and gain softmax weight. With False the rule is
    applied verbatim to the signed affinities.
    """
    fg = np.asarray(foreground_mask, dtype=bool)
    if fg.shape != (aff.num_support,):
        raise ShapeError(
            f"foreground mask must have shape ({aff.num_support},), got {fg.shape}"
        )
    fg_rows = np.flatnonzero(fg)
    if fg_rows.size == 0:
        raise ValueError("foreground mask selects no slots")

    work = -aff.data if on_raw_distances else aff.data.copy()
    attention = work[fg_rows].sum(axis=1)
    order = np.argsort(-attention, kind="stable")  # ties keep ascending row order
    ranks = np.empty(fg_rows.size, dtype=np.float64)
    ranks[order] = np.arange(1, fg_rows.size + 1)
    work[fg_rows] *= (ranks / ranks.sum())[:, None]
    return AffinityMatrix(-work if on_raw_distances else work)
