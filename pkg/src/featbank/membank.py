"""Fixed-capacity feature memory with usage-based eviction.

Operations:
  query          affinity + one shared top-k selection + per-object reads
  record_usage   add top-k hit counts from a selection to the shared counters
  record_softmax_usage   add softmax weight mass instead of hit counts
  advance_frame / advance_to   age bookkeeping
  lfu_scores     usage / age per live slot
  evict          remove the n lowest-scoring slots
  write_frame    evict just enough, then insert one frame's worth of slots
  remove_source_frame          drop every slot written from one frame
  snapshot       diagnostic rows for eviction-timeline output

Counters are shared across objects: matching keys are object-agnostic, so one
usage count and one age per slot serves every tracked object. Concurrency:
query is read-only and may run in parallel; the mutating calls require
exclusive access and must not overlap reads.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from .attention import (
    TopKSelection,
    _column_softmax,
    compute_affinity,
    select_topk,
    weighted_read,
)
from .core import FeatureGrid, FrameFeatures, MemorySlot, StrategyConfig
from .errors import (
    CapacityError,
    EmptyBankError,
    MissingObjectError,
    ShapeError,
    StaleSelectionError,
)


@dataclass(frozen=True)
class LfuScore:
    slot_id: int
    score: float  # usage_count / age, age >= 1 always


@dataclass(frozen=True)
class ReadResult:
    """Per-object reconstructed value grids plus the selection that made them.

    selection_weights is the object-agnostic softmax over the selected
    affinities, kept for weight-mass counter updates.
    """

    values: Mapping[int, FeatureGrid]
    selection: TopKSelection
    selection_weights: np.ndarray


class MemoryBank:
    """Pool of at most capacity_slots feature slots over an (H, W) grid."""

    def __init__(self, grid_hw: tuple[int, int], capacity_slots: int):
        h, w = grid_hw
        if h < 1 or w < 1:
            raise ShapeError(f"grid dims must be positive, got {grid_hw}")
        if capacity_slots < h * w:
            raise CapacityError(
                f"capacity {capacity_slots} cannot hold one frame of {h * w} slots"
            )
        self.grid_hw = (int(h), int(w))
        self.capacity_slots = int(capacity_slots)
        self.current_frame = 0
        self.slots: list[MemorySlot] = []
        self.first_source_frame: int | None = None
        self.revision = 0  # bumped on every slot-list mutation
        self._next_slot_id = 0
        self._keys_cache: np.ndarray | None = None
        self._values_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._objects_cache: tuple[int, ...] | None = None

    # ------------------------------------------------------------------
    # introspection
    # ------------------------------------------------------------------

    @property
    def live_slots(self) -> int:
        return len(self.slots)

    @property
    def positions_per_frame(self) -> int:
        return self.grid_hw[0] * self.grid_hw[1]

    @property
    def frames_equivalent(self) -> float:
        return len(self.slots) / self.positions_per_frame

    def object_ids(self) -> tuple[int, ...]:
        if self._objects_cache is None:
            ids: set[int] = set()
            for slot in self.slots:
                ids.update(slot.values)
            self._objects_cache = tuple(sorted(ids))
        return self._objects_cache

    def slot_age(self, slot: MemorySlot) -> int:
        # +1 so a slot inserted this frame has age 1 and LFU is defined
        return self.current_frame - slot.insertion_frame + 1

    def snapshot(self) -> list[dict]:
        return [
            {
                "slot_id": s.slot_id,
                "source_frame": s.source_frame,
                "insertion_frame": s.insertion_frame,
                "usage_count": s.usage_count,
                "lfu_score": s.usage_count / self.slot_age(s),
            }
            for s in self.slots
        ]

    # ------------------------------------------------------------------
    # cached matrices (rebuilt after any slot-list mutation)
    # ------------------------------------------------------------------

    def _invalidate(self) -> None:
        self.revision += 1
        self._keys_cache = None
        self._values_cache.clear()
        self._objects_cache = None

    def key_matrix(self) -> np.ndarray:
        if self._keys_cache is None:
            self._keys_cache = np.stack([s.key for s in self.slots])
        return self._keys_cache

    def object_values(self, object_id: int) -> tuple[np.ndarray, np.ndarray]:
        """(S, C_value) value table for one object plus a has-value mask.

        Slots lacking the object contribute zero rows and a False mask entry.
        """
        cached = self._values_cache.get(object_id)
        if cached is not None:
            return cached
        c_value = None
        for slot in self.slots:
            vec = slot.values.get(object_id)
            if vec is not None:
                c_value = len(vec)
                break
        if c_value is None:
            raise MissingObjectError(f"no slot holds values for object {object_id}")
        table = np.zeros((len(self.slots), c_value))
        mask = np.zeros(len(self.slots), dtype=bool)
        for i, slot in enumerate(self.slots):
            vec = slot.values.get(object_id)
            if vec is not None:
                table[i] = vec
                mask[i] = True
        table.setflags(write=False)
        mask.setflags(write=False)
        self._values_cache[object_id] = (table, mask)
        return table, mask

    # ------------------------------------------------------------------
    # read path
    # ------------------------------------------------------------------

    def query(
        self,
        query_keys: FeatureGrid,
        object_ids: Sequence[int],
        cfg: StrategyConfig,
    ) -> ReadResult:
        """One shared affinity + top-k, then one weighted read per object.

        Slots lacking an object are excluded from that object's softmax; a
        query column whose whole selection lacks the object reads as zeros
        (no supporting evidence at that position). Counters are not touched;
        call record_usage / record_softmax_usage with the returned selection.
        """
        if not self.slots:
            raise EmptyBankError("query against an empty bank")
        keys = self.key_matrix()
        if query_keys.channels != keys.shape[1]:
            raise ShapeError(
                f"query keys have {query_keys.channels} channels, bank has {keys.shape[1]}"
            )
        aff = compute_affinity(keys, query_keys.data, keys.shape[1])
        selection = replace(select_topk(aff, cfg.top_k), stamp=self.revision)
        aff_sel = np.take_along_axis(aff.data, selection.indices, axis=0)
        shared_weights = _column_softmax(aff_sel)

        h, w = self.grid_hw
        out: dict[int, FeatureGrid] = {}
        for obj in object_ids:
            table, mask = self.object_values(int(obj))
            valid = mask[selection.indices]
            weights = shared_weights if valid.all() else _column_softmax(aff_sel, valid)
            out[int(obj)] = weighted_read(weights, selection, table, (h, w), mask)
        return ReadResult(
            values=MappingProxyType(out),
            selection=selection,
            selection_weights=shared_weights,
        )

    # ------------------------------------------------------------------
    # counters
    # ------------------------------------------------------------------

    def _check_selection(self, selection: TopKSelection) -> None:
        if selection.stamp is not None and selection.stamp != self.revision:
            raise StaleSelectionError(
                f"selection was built at bank revision {selection.stamp}, "
                f"bank is now at {self.revision}"
            )
        if selection.num_support != len(self.slots):
            raise StaleSelectionError(
                f"selection was built over {selection.num_support} slots, "
                f"bank now holds {len(self.slots)}"
            )
        if selection.indices.size and (
            selection.indices.min() < 0 or selection.indices.max() >= len(self.slots)
        ):
            raise StaleSelectionError("selection references slots outside the bank")

    def record_usage(self, selection: TopKSelection) -> None:
        """+1 per appearance of a slot in any query position's top-k list."""
        self._check_selection(selection)
        counts = np.bincount(selection.indices.ravel(), minlength=len(self.slots))
        for i in np.flatnonzero(counts):
            self.slots[i].usage_count += int(counts[i])

    def record_softmax_usage(self, selection: TopKSelection, weights: np.ndarray) -> None:
        """Add each slot's received softmax weight mass instead of hit counts."""
        self._check_selection(selection)
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != selection.indices.shape:
            raise ShapeError(
                f"weights shape {weights.shape} does not match selection "
                f"{selection.indices.shape}"
            )
        mass = np.bincount(
            selection.indices.ravel(), weights=weights.ravel(), minlength=len(self.slots)
        )
        for i in np.flatnonzero(mass):
            self.slots[i].usage_count += float(mass[i])

    # ------------------------------------------------------------------
    # aging and eviction
    # ------------------------------------------------------------------

    def advance_frame(self) -> None:
        self.current_frame += 1

    def advance_to(self, frame_index: int) -> None:
        if frame_index < self.current_frame:
            raise ValueError(
                f"cannot rewind bank clock from {self.current_frame} to {frame_index}"
            )
        self.current_frame = int(frame_index)

    def lfu_scores(self) -> list[LfuScore]:
        return [
            LfuScore(slot_id=s.slot_id, score=s.usage_count / self.slot_age(s))
            for s in self.slots
        ]

    def evict(self, n_slots: int, pin_first: bool = False) -> list[int]:
        """Remove the n lowest-LFU slots; returns their slot ids.

        Order: ascending score, ties to larger age first, then smaller
        slot id. With pin_first, slots from the first written frame are
        exempt.
        """
        if n_slots < 0:
            raise ValueError(f"cannot evict {n_slots} slots")
        if n_slots == 0:
            return []
        if pin_first and self.first_source_frame is not None:
            candidates = [
                i for i, s in enumerate(self.slots)
                if s.source_frame != self.first_source_frame
            ]
        else:
            candidates = list(range(len(self.slots)))
        if n_slots > len(candidates):
            raise CapacityError(
                f"cannot evict {n_slots} of {len(candidates)} evictable slots"
            )
        scores = np.array([
            self.slots[i].usage_count / self.slot_age(self.slots[i]) for i in candidates
        ])
        ages = np.array([self.slot_age(self.slots[i]) for i in candidates])
        ids = np.array([self.slots[i].slot_id for i in candidates])
        order = np.lexsort((ids, -ages, scores))
        doomed = {candidates[j] for j in order[:n_slots]}
        evicted = [self.slots[i].slot_id for i in sorted(doomed)]
        self.slots = [s for i, s in enumerate(self.slots) if i not in doomed]
        self._invalidate()
        return evicted

    # ------------------------------------------------------------------
    # writes
    # ------------------------------------------------------------------

    def write_frame(
        self,
        frame: FrameFeatures,
        evict_to_fit: bool = True,
        pin_first: bool = False,
    ) -> list[int]:
        """Insert one frame's worth of slots, evicting just enough to fit.

        With evict_to_fit=False an overfull write raises instead (the growth
        ceiling of the unbounded every-k policy). Returns evicted slot ids.
        """
        h, w = self.grid_hw
        if (frame.keys.height, frame.keys.width) != (h, w):
            raise ShapeError(
                f"frame grid {frame.keys.height}x{frame.keys.width} does not match "
                f"bank grid {h}x{w}"
            )
        if not frame.values:
            raise ValueError("a frame written to memory must carry at least one object")
        if self.slots:
            if frame.keys.channels != self.key_matrix().shape[1]:
                raise ShapeError(
                    f"frame keys have {frame.keys.channels} channels, bank has "
                    f"{self.key_matrix().shape[1]}"
                )
            existing = self._existing_value_channels()
            if existing is not None and frame.value_channels != existing:
                raise ShapeError(
                    f"frame values have {frame.value_channels} channels, bank has {existing}"
                )
        n = h * w
        overflow = len(self.slots) + n - self.capacity_slots
        evicted: list[int] = []
        if overflow > 0:
            if not evict_to_fit:
                raise CapacityError(
                    f"bank at {len(self.slots)} slots cannot absorb {n} more "
                    f"within capacity {self.capacity_slots}"
                )
            evicted = self.evict(overflow, pin_first=pin_first)

        value_rows = {obj: grid.data for obj, grid in frame.values.items()}
        key_rows = frame.keys.data
        for i in range(n):
            self.slots.append(
                MemorySlot(
                    key=key_rows[i],
                    values={obj: rows[i] for obj, rows in value_rows.items()},
                    source_frame=frame.frame_index,
                    insertion_frame=self.current_frame,
                    slot_id=self._next_slot_id + i,
                )
            )
        self._next_slot_id += n
        if self.first_source_frame is None:
            self.first_source_frame = frame.frame_index
        self._invalidate()
        return evicted

    def _existing_value_channels(self) -> int | None:
        for slot in self.slots:
            for vec in slot.values.values():
                return len(vec)
        return None

    def remove_source_frame(self, source_frame: int) -> int:
        """Drop every slot written from the given frame; returns the count."""
        before = len(self.slots)
        self.slots = [s for s in self.slots if s.source_frame != source_frame]
        removed = before - len(self.slots)
        if removed:
            self._invalidate()
        return removed
