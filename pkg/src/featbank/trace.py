"""Binary container for recorded feature streams (.mbt).

Layout, all little-endian:

    magic      4 bytes  b"MBTR"
    version    u16      currently 1
    T          u32      frame count
    H, W       u32 x2   grid dims
    C_key      u32      key channels
    C_value    u32      value channels
    M          u32      object count
    objects    M x (object_id u16, entry_frame u32)
    frames     T blocks of:
                   keys     H*W*C_key float32
                   values   M grids of H*W*C_value float32 (header order;
                            zero-filled except at the object's entry frame)
                   labels   H*W uint8 ground-truth map

The reader validates the total byte length against the header before touching
the payload, so corrupt headers fail fast with a typed error instead of an
allocation blow-up. Values are only meaningful at entry frames; the writer
rejects frames carrying values elsewhere so a read-write cycle is lossless.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .core import FeatureGrid, FrameFeatures
from .errors import (
    FeatBankError,
    TraceDataError,
    TraceMagicError,
    TraceTruncatedError,
    TraceVersionError,
)

MAGIC = b"MBTR"
VERSION = 1

_HEAD = struct.Struct("<4sHIIIIII")
_OBJ = struct.Struct("<HI")


@dataclass(frozen=True)
class TraceData:
    """A decoded stream: frames, truth label maps, and object entry frames."""

    frames: list[FrameFeatures]
    truths: list[np.ndarray]
    entry_frames: dict[int, int]

    @property
    def grid_hw(self) -> tuple[int, int]:
        k = self.frames[0].keys
        return (k.height, k.width)


def expected_size(t: int, h: int, w: int, c_key: int, c_value: int, m: int) -> int:
    per_frame = 4 * h * w * c_key + 4 * m * h * w * c_value + h * w
    return _HEAD.size + m * _OBJ.size + t * per_frame


def write_trace(
    path,
    frames: list[FrameFeatures],
    truths: list[np.ndarray],
    entry_frames: dict[int, int],
) -> None:
    """Serialize a stream; exact inverse of read_trace for float32 data."""
    if not frames:
        raise TraceDataError("cannot write an empty stream")
    if len(truths) != len(frames):
        raise TraceDataError(
            f"{len(frames)} frames but {len(truths)} truth maps"
        )
    keys0 = frames[0].keys
    h, w, c_key = keys0.height, keys0.width, keys0.channels
    objects = sorted(entry_frames)
    for obj in objects:
        if not 1 <= obj <= 255:
            raise TraceDataError(f"object id {obj} outside [1, 255] (labels are uint8)")
        if not 0 <= entry_frames[obj] < len(frames):
            raise TraceDataError(
                f"object {obj} entry frame {entry_frames[obj]} outside the stream"
            )
    c_value = 0
    for f in frames:
        ch = f.value_channels
        if ch is not None:
            c_value = ch
            break
    if c_value == 0:
        raise TraceDataError("no frame carries values; nothing marks the annotations")

    chunks = [
        _HEAD.pack(MAGIC, VERSION, len(frames), h, w, c_key, c_value, len(objects))
    ]
    chunks += [_OBJ.pack(obj, entry_frames[obj]) for obj in objects]
    zero_grid = np.zeros(h * w * c_value, dtype="<f4").tobytes()
    for t, (frame, labels) in enumerate(zip(frames, truths)):
        fk = frame.keys
        if (fk.height, fk.width, fk.channels) != (h, w, c_key):
            raise TraceDataError(f"frame {t} key grid does not match the header dims")
        labels = np.asarray(labels)
        if labels.size != h * w:
            raise TraceDataError(f"frame {t} label map does not cover the grid")
        for obj in frame.values:
            if entry_frames.get(obj) != t:
                raise TraceDataError(
                    f"frame {t} carries values for object {obj} away from its "
                    "entry frame; these would not survive a round-trip"
                )
        chunks.append(fk.data.astype("<f4").tobytes())
        for obj in objects:
            grid = frame.values.get(obj)
            if grid is None:
                chunks.append(zero_grid)
            else:
                if grid.channels != c_value:
                    raise TraceDataError(
                        f"frame {t} object {obj} has {grid.channels} value channels, "
                        f"header says {c_value}"
                    )
                chunks.append(grid.data.astype("<f4").tobytes())
        chunks.append(labels.astype(np.uint8).ravel().tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def read_trace(path) -> TraceData:
    """Decode an .mbt file; every failure mode raises a distinct TraceError."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise TraceMagicError(
            f"bad magic {blob[:4]!r}, expected {MAGIC!r}"
        )
    if len(blob) < _HEAD.size:
        raise TraceTruncatedError(
            f"header needs {_HEAD.size} bytes, file has {len(blob)}"
        )
    _, version, t, h, w, c_key, c_value, m = _HEAD.unpack_from(blob)
    if version != VERSION:
        raise TraceVersionError(f"unsupported trace version {version}, reader is {VERSION}")
    if min(t, h, w, c_key, c_value) < 1:
        raise TraceDataError(
            f"header dims must be positive, got T={t} H={h} W={w} "
            f"C_key={c_key} C_value={c_value}"
        )
    want = expected_size(t, h, w, c_key, c_value, m)
    if len(blob) != want:
        raise TraceTruncatedError(
            f"header implies {want} bytes, file has {len(blob)}"
        )

    offset = _HEAD.size
    entry_frames: dict[int, int] = {}
    order: list[int] = []
    for _ in range(m):
        obj, entry = _OBJ.unpack_from(blob, offset)
        offset += _OBJ.size
        if obj in entry_frames:
            raise TraceDataError(f"duplicate object id {obj} in header")
        if not 1 <= obj <= 255:
            raise TraceDataError(f"object id {obj} outside [1, 255]")
        if entry >= t:
            raise TraceDataError(f"object {obj} entry frame {entry} >= T={t}")
        entry_frames[obj] = entry
        order.append(obj)

    n = h * w
    key_bytes = 4 * n * c_key
    val_bytes = 4 * n * c_value
    frames: list[FrameFeatures] = []
    truths: list[np.ndarray] = []
    try:
        for ti in range(t):
            keys = np.frombuffer(blob, dtype="<f4", count=n * c_key, offset=offset)
            offset += key_bytes
            values: dict[int, FeatureGrid] = {}
            for obj in order:
                raw = np.frombuffer(blob, dtype="<f4", count=n * c_value, offset=offset)
                offset += val_bytes
                if entry_frames[obj] == ti:
                    values[obj] = FeatureGrid(h, w, c_value, raw.astype(np.float64))
            labels = np.frombuffer(blob, dtype=np.uint8, count=n, offset=offset)
            offset += n
            frames.append(
                FrameFeatures(ti, FeatureGrid(h, w, c_key, keys.astype(np.float64)), values)
            )
            truths.append(labels.reshape(h, w).copy())
    except FeatBankError as exc:
        raise TraceDataError(f"frame payload rejected: {exc}") from exc
    return TraceData(frames=frames, truths=truths, entry_frames=entry_frames)
