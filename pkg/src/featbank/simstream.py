"""Synthetic feature streams and the surrogate decode pipeline.

A scenario places rectangular objects on a stride-16 grid. Each object owns a
prototype key vector; per frame its keys are the prototype plus a cumulative
random-walk drift (appearance change) plus fresh Gaussian noise, while
background positions draw from the background prototype. Occlusion windows
empty an object's region. Values are two-channel log-probability embeddings,
so weighted reads, decoding, and the predict-then-write loop all stay
meaningful at desk scale.

Everything is seeded and deterministic; generated arrays are quantized to
float32 so a stream survives the binary trace codec bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core import FeatureGrid, FrameFeatures
from .errors import ScenarioError, ShapeError
from .membank import ReadResult

PROB_EPS = 1e-5  # probability clamp for the surrogate decoder and encoders


@dataclass(frozen=True)
class ObjectSpec:
    """One tracked object: where it is, what it looks like, how it changes.

    texture_scale spreads fixed per-position intensity factors on the
    prototype (drawn once per seed, carried with the region), so positions
    sit at heterogeneous margins from the background instead of one tight
    cluster: position p uses (1 + texture_scale * z_p) * prototype.
    """

    object_id: int
    prototype: np.ndarray  # (c_key,) appearance at entry
    entry_frame: int = 0
    region_hw: tuple[int, int] = (4, 4)
    start_rc: tuple[int, int] = (0, 0)
    velocity_rc: tuple[int, int] = (0, 0)
    drift_rate: float = 0.0  # per-frame prototype perturbation magnitude
    texture_scale: float = 0.0  # per-position intrinsic appearance spread
    morph_to: np.ndarray | None = None  # appearance to deform toward
    morph_rate: float = 0.0  # interpolation progress per frame, capped at 1
    occlusions: tuple[tuple[int, int], ...] = ()  # [start, end) windows

    def occluded_at(self, frame: int) -> bool:
        return any(a <= frame < b for a, b in self.occlusions)

    def appearance_at(self, frame: int) -> np.ndarray:
        """Prototype after morphing (drift walk and texture come on top)."""
        proto = np.asarray(self.prototype, dtype=np.float64)
        if self.morph_to is None or self.morph_rate <= 0.0:
            return proto
        lam = min(1.0, self.morph_rate * frame)
        return proto + lam * (np.asarray(self.morph_to, dtype=np.float64) - proto)


@dataclass(frozen=True)
class SyntheticScenario:
    name: str
    num_frames: int
    grid_hw: tuple[int, int]
    c_key: int
    objects: tuple[ObjectSpec, ...]
    background: np.ndarray  # (c_key,)
    noise_sigma: float = 0.0
    rng_seed: int = 0

    def with_seed(self, seed: int) -> "SyntheticScenario":
        return replace(self, rng_seed=seed)

    def entry_frames(self) -> dict[int, int]:
        return {o.object_id: o.entry_frame for o in self.objects}


def _bounce(start: int, velocity: int, t: int, limit: int) -> int:
    """Position after t steps of constant velocity reflecting off [0, limit]."""
    if limit <= 0:
        return 0
    x = (start + velocity * t) % (2 * limit)
    return 2 * limit - x if x > limit else x


def object_region(spec: ObjectSpec, frame: int, grid_hw: tuple[int, int]) -> np.ndarray:
    """Boolean (H, W) occupancy mask; empty before entry or while occluded."""
    h, w = grid_hw
    mask = np.zeros((h, w), dtype=bool)
    if frame < spec.entry_frame or spec.occluded_at(frame):
        return mask
    rh, rw = spec.region_hw
    r = _bounce(spec.start_rc[0], spec.velocity_rc[0], frame, h - rh)
    c = _bounce(spec.start_rc[1], spec.velocity_rc[1], frame, w - rw)
    mask[r : r + rh, c : c + rw] = True
    return mask


def _validate(scenario: SyntheticScenario) -> None:
    h, w = scenario.grid_hw
    if h < 1 or w < 1 or scenario.num_frames < 1 or scenario.c_key < 1:
        raise ScenarioError("grid dims, frame count, and c_key must be positive")
    if len(scenario.background) != scenario.c_key:
        raise ScenarioError("background prototype length does not match c_key")
    seen: set[int] = set()
    for spec in scenario.objects:
        if not 1 <= spec.object_id <= 255:
            raise ScenarioError(
                f"object id {spec.object_id} outside [1, 255] (labels are uint8)"
            )
        if spec.object_id in seen:
            raise ScenarioError(f"duplicate object id {spec.object_id}")
        seen.add(spec.object_id)
        if not 0 <= spec.entry_frame < scenario.num_frames:
            raise ScenarioError(
                f"object {spec.object_id} enters at frame {spec.entry_frame}, "
                f"outside 0..{scenario.num_frames - 1}"
            )
        if len(spec.prototype) != scenario.c_key:
            raise ScenarioError(
                f"object {spec.object_id} prototype length does not match c_key"
            )
        if spec.morph_to is not None and len(spec.morph_to) != scenario.c_key:
            raise ScenarioError(
                f"object {spec.object_id} morph target length does not match c_key"
            )
        rh, rw = spec.region_hw
        if rh < 1 or rw < 1 or rh > h or rw > w:
            raise ScenarioError(
                f"object {spec.object_id} region {rh}x{rw} does not fit the {h}x{w} grid"
            )


def _f32(arr: np.ndarray) -> np.ndarray:
    # quantize so the float32 trace codec round-trips bit-for-bit
    return arr.astype(np.float32).astype(np.float64)


def indicator_values(region: np.ndarray) -> np.ndarray:
    """(H*W, 2) log-probability embedding: (log p_fg, log p_bg) per position."""
    fg = np.where(region.ravel(), 1.0 - PROB_EPS, PROB_EPS)
    return _f32(np.stack([np.log(fg), np.log1p(-fg)], axis=1))


def generate(
    scenario: SyntheticScenario,
) -> tuple[list[FrameFeatures], list[np.ndarray]]:
    """Materialize a scenario into frames plus per-frame truth label maps.

    Values are attached only at each object's entry frame (its annotation);
    later frames carry keys only and get predicted values downstream.
    Deterministic given the seed: per-object drift walks are drawn first (in
    object order), then one noise field per frame.
    """
    _validate(scenario)
    h, w = scenario.grid_hw
    n = h * w
    rng = np.random.default_rng(scenario.rng_seed)

    drifts: dict[int, np.ndarray] = {}
    textures: dict[int, np.ndarray] = {}
    for spec in scenario.objects:
        steps = rng.standard_normal((scenario.num_frames, scenario.c_key))
        steps *= spec.drift_rate / math.sqrt(scenario.c_key)
        drifts[spec.object_id] = np.cumsum(steps, axis=0)
        rh, rw = spec.region_hw
        radial = spec.texture_scale * rng.standard_normal((rh * rw, 1))
        textures[spec.object_id] = radial * np.asarray(spec.prototype)[None, :]

    frames: list[FrameFeatures] = []
    truths: list[np.ndarray] = []
    for t in range(scenario.num_frames):
        keys = np.tile(np.asarray(scenario.background, dtype=np.float64), (n, 1))
        if scenario.noise_sigma > 0.0:
            keys += scenario.noise_sigma * rng.standard_normal((n, scenario.c_key))
        labels = np.zeros((h, w), dtype=np.uint8)
        values: dict[int, FeatureGrid] = {}
        occupied = np.zeros((h, w), dtype=bool)
        for spec in scenario.objects:
            region = object_region(spec, t, scenario.grid_hw)
            if not region.any():
                if spec.entry_frame == t:
                    raise ScenarioError(
                        f"object {spec.object_id} is occluded at its entry frame {t}"
                    )
                continue
            if (region & occupied).any():
                raise ScenarioError(
                    f"object regions overlap at frame {t} (object {spec.object_id})"
                )
            occupied |= region
            flat = region.ravel()
            appearance = spec.appearance_at(t) + drifts[spec.object_id][t]
            keys[flat] += (appearance - scenario.background) + textures[spec.object_id]
            labels[region] = spec.object_id
            if spec.entry_frame == t:
                values[spec.object_id] = FeatureGrid(h, w, 2, indicator_values(region))
        frames.append(FrameFeatures(t, FeatureGrid(h, w, scenario.c_key, _f32(keys)), values))
        truths.append(labels)
    return frames, truths


# ----------------------------------------------------------------------
# surrogate decode pipeline
# ----------------------------------------------------------------------


def surrogate_decode(read: FeatureGrid) -> np.ndarray:
    """Foreground probability per position from a 2-channel read.

    Softmax over the two channels (foreground first), clamped away from 0/1.
    """
    if read.channels != 2:
        raise ShapeError(f"surrogate decoder expects 2 channels, got {read.channels}")
    a = read.data
    m = a.max(axis=1, keepdims=True)
    e = np.exp(a - m)
    p = e[:, 0] / e.sum(axis=1)
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)


def soft_aggregate(probs: Sequence[np.ndarray]) -> np.ndarray:
    """Merge per-object foreground probabilities into an (M+1, Q) distribution.

    Odds normalization: object odds p/(1-p); background probability is the
    product of the complements. Row 0 is background; rows follow the input
    order. Every column sums to 1.
    """
    if len(probs) == 0:
        raise ValueError("no object probabilities to aggregate")
    stacked = np.stack([np.asarray(p, dtype=np.float64) for p in probs])
    if stacked.ndim != 2:
        raise ShapeError("object probability grids must share one flat shape")
    if np.any(stacked <= 0.0) or np.any(stacked >= 1.0):
        raise ValueError("aggregation needs probabilities strictly inside (0, 1)")
    bg = np.clip(np.prod(1.0 - stacked, axis=0), PROB_EPS, 1.0 - PROB_EPS)
    odds = np.concatenate([(bg / (1.0 - bg))[None, :], stacked / (1.0 - stacked)])
    return odds / odds.sum(axis=0)


def prob_to_values(
    aggregated: np.ndarray, object_ids: Sequence[int], grid_hw: tuple[int, int]
) -> dict[int, FeatureGrid]:
    """Re-encode aggregated probabilities as writable 2-channel value grids.

    Row m+1 of the distribution belongs to object_ids[m]. The encoding is
    (log p, log(1-p)), so the surrogate decoder recovers p exactly.
    """
    h, w = grid_hw
    if aggregated.shape != (len(object_ids) + 1, h * w):
        raise ShapeError(
            f"distribution shape {aggregated.shape} does not match "
            f"{len(object_ids)} objects over {h * w} positions"
        )
    out: dict[int, FeatureGrid] = {}
    for row, obj in enumerate(object_ids, start=1):
        p = np.clip(aggregated[row], PROB_EPS, 1.0 - PROB_EPS)
        data = _f32(np.stack([np.log(p), np.log1p(-p)], axis=1))
        out[int(obj)] = FeatureGrid(h, w, 2, data)
    return out


def labels_from_distribution(
    aggregated: np.ndarray, object_ids: Sequence[int]
) -> np.ndarray:
    """Argmax labels: 0 for background, else the winning object id."""
    winners = np.argmax(aggregated, axis=0)
    lut = np.array([0] + [int(o) for o in object_ids])
    return lut[winners]


def decode_read(
    read: ReadResult, object_ids: Sequence[int]
) -> tuple[np.ndarray, np.ndarray]:
    """Read grids -> (aggregated distribution, predicted labels)."""
    probs = [surrogate_decode(read.values[obj]) for obj in object_ids]
    dist = soft_aggregate(probs)
    return dist, labels_from_distribution(dist, object_ids)


def surrogate_predictor(
    frame: FrameFeatures, read: ReadResult, object_ids: Sequence[int]
) -> dict[int, FeatureGrid]:
    """Predictor closing the loop: decode, aggregate, re-encode for writing."""
    ids = list(object_ids)
    dist, _ = decode_read(read, ids)
    grid = next(iter(read.values.values()))
    return prob_to_values(dist, ids, (grid.height, grid.width))


def iou(pred_labels, truth_labels, object_id: int) -> float:
    """Intersection over union of one object's region; 1.0 when both empty."""
    pred = np.asarray(pred_labels).ravel()
    truth = np.asarray(truth_labels).ravel()
    if pred.shape != truth.shape:
        raise ShapeError(f"label shapes differ: {pred.shape} vs {truth.shape}")
    p = pred == object_id
    t = truth == object_id
    union = np.count_nonzero(p | t)
    if union == 0:
        return 1.0
    return np.count_nonzero(p & t) / union
