"""Shared domain types: feature grids, per-frame features, memory slots, and
the strategy configuration.

Grids and frames are immutable value objects once constructed (their arrays
are marked read-only), so they are safe to share across threads. MemorySlot is
the one mutable type: its usage counter is updated exclusively by the owning
bank.
"""

from __future__ import annotations

from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .errors import ConfigError, NonFiniteError, ShapeError

EVERY_K = "every-k"
FIRST_AND_LATEST = "first-and-latest"
ADAPTIVE_LFU = "adaptive-lfu"
SOFTMAX_INDEX = "softmax-index"

STRATEGIES = (EVERY_K, FIRST_AND_LATEST, ADAPTIVE_LFU, SOFTMAX_INDEX)


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FeatureGrid:
    """Dense grid of feature vectors at stride-16 resolution.

    data has shape (height * width, channels), row-major: grid position
    (r, c) lives at row r * width + c.
    """

    height: int
    width: int
    channels: int
    data: np.ndarray

    def __post_init__(self):
        for name in ("height", "width", "channels"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v <= 0:
                raise ShapeError(f"{name} must be a positive integer, got {v!r}")
        n = self.height * self.width
        data = np.asarray(self.data, dtype=np.float64)
        if data.size != n * self.channels:
            raise ShapeError(
                f"grid data has {data.size} entries, expected "
                f"{n} x {self.channels} = {n * self.channels}"
            )
        data = data.reshape(n, self.channels)
        if not np.all(np.isfinite(data)):
            raise NonFiniteError("grid data contains NaN or Inf")
        object.__setattr__(self, "data", _readonly(data))

    @classmethod
    def from_vectors(cls, height: int, width: int, vectors) -> "FeatureGrid":
        """Build a grid from one feature vector per position (row-major order)."""
        arr = np.asarray(vectors, dtype=np.float64)
        if arr.ndim != 2:
            raise ShapeError(f"expected a 2-D vector-of-vectors, got ndim={arr.ndim}")
        return cls(height, width, arr.shape[1], arr)

    def to_vectors(self) -> list[list[float]]:
        """Inverse of from_vectors: one list of channel values per position."""
        return self.data.tolist()

    def vector_at(self, row: int, col: int) -> np.ndarray:
        return self.data[row * self.width + col]

    @property
    def positions(self) -> int:
        return self.height * self.width


@dataclass(frozen=True)
class FrameFeatures:
    """One frame's key grid plus per-object value grids.

    Keys are object-agnostic; values are per-object and must share the key
    grid's spatial dimensions. The object map may be empty while the frame is
    in flight, but a frame written to memory must carry at least one object.
    """

    frame_index: int
    keys: FeatureGrid
    values: Mapping[int, FeatureGrid]

    def __post_init__(self):
        if not isinstance(self.frame_index, (int, np.integer)) or self.frame_index < 0:
            raise ShapeError(f"frame_index must be >= 0, got {self.frame_index!r}")
        vals = dict(self.values)
        channels = None
        for obj, grid in vals.items():
            if not isinstance(obj, (int, np.integer)) or obj < 0:
                raise ShapeError(f"object id must be a non-negative integer, got {obj!r}")
            if (grid.height, grid.width) != (self.keys.height, self.keys.width):
                raise ShapeError(
                    f"object {obj} value grid is {grid.height}x{grid.width}, "
                    f"key grid is {self.keys.height}x{self.keys.width}"
                )
            if channels is None:
                channels = grid.channels
            elif grid.channels != channels:
                raise ShapeError(
                    f"object {obj} has {grid.channels} value channels, "
                    f"other objects have {channels}"
                )
        object.__setattr__(self, "values", MappingProxyType({int(k): v for k, v in vals.items()}))

    @property
    def object_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self.values))

    @property
    def value_channels(self) -> int | None:
        for grid in self.values.values():
            return grid.channels
        return None


@dataclass
class MemorySlot:
    """One stored feature: a key vector plus per-object value vectors.

    usage_count never decreases while the slot is live. Hit counting adds
    integers; the softmax-mass counting mode accumulates real weight, hence
    the float type.
    """

    key: np.ndarray
    values: Mapping[int, np.ndarray]
    source_frame: int
    insertion_frame: int
    slot_id: int
    usage_count: float = 0.0


@dataclass(frozen=True)
class StrategyConfig:
    """Which write/evict policy runs and with what knobs.

    capacity_frames is expressed in frames worth of features: the bank holds
    at most capacity_frames * H * W slots. rng_seed feeds the stochastic
    affinity regularizers when they are enabled; the core read/write path is
    deterministic. growth_limit_frames is the safety ceiling for the
    unbounded every-k policy.
    """

    strategy: str = ADAPTIVE_LFU
    capacity_frames: int = 2
    write_interval: int = 5
    top_k: int = 50
    pin_first_frame: bool = False
    rng_seed: int = 0
    growth_limit_frames: int = 10_000


def validate_config(cfg: StrategyConfig) -> None:
    """Raise ConfigError naming the offending field if any invariant fails."""
    if cfg.strategy not in STRATEGIES:
        raise ConfigError(
            f"strategy must be one of {', '.join(STRATEGIES)}; got {cfg.strategy!r}"
        )
    for name, minimum in (
        ("capacity_frames", 1),
        ("write_interval", 1),
        ("top_k", 1),
        ("growth_limit_frames", 1),
    ):
        v = getattr(cfg, name)
        if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < minimum:
            raise ConfigError(f"{name} must be an integer >= {minimum}, got {v!r}")
    if not isinstance(cfg.rng_seed, (int, np.integer)) or isinstance(cfg.rng_seed, bool):
        raise ConfigError(f"rng_seed must be an integer, got {cfg.rng_seed!r}")
    if not isinstance(cfg.pin_first_frame, bool):
        raise ConfigError(f"pin_first_frame must be a bool, got {cfg.pin_first_frame!r}")
