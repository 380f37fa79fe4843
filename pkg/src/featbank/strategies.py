"""Write policies that drive a memory bank across a frame sequence.

every-k           read every frame, write every k-th; the bank grows without
                  eviction and a configurable frame ceiling aborts runaway
                  growth cleanly.
first-and-latest  keep exactly the first written frame plus the most recent
                  one; every frame is written and the previous latest removed.
adaptive-lfu      read with top-k, count selection hits, write every k-th
                  frame, evicting the lowest usage/age scores to stay within
                  capacity.
softmax-index     adaptive-lfu with softmax weight mass as the counter
                  increment instead of top-k hit counts; the read path is
                  identical.

Frames annotated mid-sequence force a write regardless of schedule: the
annotation is the only source of that object's values. Written values for
already-tracked objects come from the caller's predictor (predictions, never
re-encoded ground truth).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .core import (
    ADAPTIVE_LFU,
    EVERY_K,
    FIRST_AND_LATEST,
    SOFTMAX_INDEX,
    FeatureGrid,
    FrameFeatures,
    StrategyConfig,
    validate_config,
)
from .errors import MissingObjectError
from .membank import MemoryBank, ReadResult

# predictor(frame, read, object_ids) -> values to write for the tracked objects
Predictor = Callable[[FrameFeatures, ReadResult, Sequence[int]], Mapping[int, FeatureGrid]]


@dataclass
class FrameStats:
    """One row per processed query frame."""

    frame: int
    bank_frames_equivalent: float  # live slots / (H*W), measured at read time
    read_seconds: float
    write_seconds: float
    evictions: int


@dataclass
class SequenceState:
    """Mutable state threaded through step(): the bank plus the run log."""

    bank: MemoryBank
    cfg: StrategyConfig
    first_annotated: dict[int, int]
    stats: list[FrameStats] = field(default_factory=list)
    write_count: int = 0
    initial_write_seconds: float = 0.0
    initial_evictions: int = 0
    last_frame: int = -1
    _prev_latest: int | None = None


def write_back_values(
    frame: FrameFeatures, read: ReadResult, object_ids: Sequence[int]
) -> dict[int, FeatureGrid]:
    """Default predictor: write the read grids back verbatim."""
    return {obj: read.values[obj] for obj in object_ids}


def make_state(
    cfg: StrategyConfig,
    grid_hw: tuple[int, int],
    first_annotated: Mapping[int, int],
) -> SequenceState:
    validate_config(cfg)
    h, w = grid_hw
    if cfg.strategy == EVERY_K:
        capacity = cfg.growth_limit_frames * h * w
    elif cfg.strategy == FIRST_AND_LATEST:
        capacity = 2 * h * w  # first + latest, by construction
    else:
        capacity = cfg.capacity_frames * h * w
    bank = MemoryBank(grid_hw, capacity)
    return SequenceState(bank=bank, cfg=cfg, first_annotated=dict(first_annotated))


def _write_due(cfg: StrategyConfig, frame_index: int) -> bool:
    if cfg.strategy == FIRST_AND_LATEST:
        return True
    return frame_index % cfg.write_interval == 0


def step(
    state: SequenceState,
    frame: FrameFeatures,
    predictor: Predictor | None = None,
    is_query_only: bool = False,
) -> ReadResult | None:
    """Process one frame: read, update counters, conditionally write.

    Returns the read, or None when nothing was readable (the first annotated
    frame). Usage is recorded after the read and before any write, so a
    frame's own slots never count toward their insertion read. is_query_only
    suppresses the write phase entirely.
    """
    cfg = state.cfg
    bank = state.bank
    t = frame.frame_index
    if t <= state.last_frame:
        raise ValueError(f"frame indices must strictly increase, got {t} after {state.last_frame}")
    state.last_frame = t
    bank.advance_to(t)

    newly = sorted(m for m, f0 in state.first_annotated.items() if f0 == t)
    for m in newly:
        if m not in frame.values:
            raise MissingObjectError(f"object {m} is annotated at frame {t} but carries no values")

    read: ReadResult | None = None
    read_seconds = 0.0
    frames_equiv = bank.frames_equivalent
    readable = bank.object_ids()
    if bank.live_slots and readable:
        t0 = time.perf_counter()
        read = bank.query(frame.keys, readable, cfg)
        if cfg.strategy == ADAPTIVE_LFU:
            bank.record_usage(read.selection)
        elif cfg.strategy == SOFTMAX_INDEX:
            bank.record_softmax_usage(read.selection, read.selection_weights)
        read_seconds = time.perf_counter() - t0

    write_seconds = 0.0
    evictions = 0
    if not is_query_only and (newly or _write_due(cfg, t)):
        t0 = time.perf_counter()
        values: dict[int, FeatureGrid] = {}
        if read is not None:
            fn = predictor or write_back_values
            values.update(fn(frame, read, readable))
        for m in newly:  # annotations override predictions
            values[m] = frame.values[m]
        if values:
            to_write = FrameFeatures(t, frame.keys, values)
            if cfg.strategy == FIRST_AND_LATEST:
                if state._prev_latest is not None and state._prev_latest != bank.first_source_frame:
                    bank.remove_source_frame(state._prev_latest)
                evicted = bank.write_frame(to_write)
                state._prev_latest = t
            elif cfg.strategy == EVERY_K:
                evicted = bank.write_frame(to_write, evict_to_fit=False)
            else:
                evicted = bank.write_frame(to_write, pin_first=cfg.pin_first_frame)
            evictions = len(evicted)
            state.write_count += 1
        write_seconds = time.perf_counter() - t0

    if read is not None:
        state.stats.append(
            FrameStats(
                frame=t,
                bank_frames_equivalent=frames_equiv,
                read_seconds=read_seconds,
                write_seconds=write_seconds,
                evictions=evictions,
            )
        )
    else:
        state.initial_write_seconds += write_seconds
        state.initial_evictions += evictions
    return read


def run_sequence(
    frames: Sequence[FrameFeatures],
    first_annotated: Mapping[int, int],
    cfg: StrategyConfig,
    predictor: Predictor | None = None,
) -> tuple[dict[int, ReadResult], SequenceState]:
    """Drive the configured policy over an ordered frame sequence.

    Each object's first frame is written from its annotation, never
    predicted; later frames are queried and conditionally written with
    predicted values. Returns the per-frame reads keyed by frame index plus
    the final state (stats log, bank, write count).
    """
    if len(frames) < 2:
        raise ValueError(f"need at least 2 frames, got {len(frames)}")
    if not first_annotated:
        raise ValueError("no annotated objects")
    indices = [f.frame_index for f in frames]
    for obj, f0 in first_annotated.items():
        if f0 not in indices:
            raise ValueError(
                f"object {obj} is annotated at frame {f0}, outside the sequence"
            )
    keys0 = frames[0].keys
    state = make_state(cfg, (keys0.height, keys0.width), first_annotated)
    reads: dict[int, ReadResult] = {}
    for frame in frames:
        read = step(state, frame, predictor=predictor)
        if read is not None:
            reads[frame.frame_index] = read
    return reads, state
