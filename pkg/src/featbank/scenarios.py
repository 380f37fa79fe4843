"""Scenario config files and the bundled presets.

The format is line-based key = value with one [object N] section per object:

    frames = 80
    grid = 24x24
    c_key = 64
    noise_sigma = 1.0
    prototype_scale = 6
    seed = 7

    [object 1]
    entry = 0
    region = 6x6
    start = 9,2
    velocity = 0,1
    drift = 0.0
    occlude = 25..40      # repeatable, [start, end)

Prototypes are derived, not listed: object id m gets prototype_scale on key
channel (m - 1) mod c_key, the background sits at the origin. Parse errors
carry the offending line number.
"""

from __future__ import annotations

from importlib import resources

import numpy as np

from .errors import ScenarioConfigError
from .simstream import ObjectSpec, SyntheticScenario

BUNDLED = ("static", "drift", "deform", "occlude", "late-object")

_SCENARIO_KEYS = {
    "name", "frames", "grid", "c_key", "noise_sigma", "prototype_scale", "seed",
}
_OBJECT_KEYS = {
    "entry", "region", "start", "velocity", "drift", "texture",
    "morph_to_object", "morph_rate", "occlude",
}


def _fail(lineno: int, message: str):
    raise ScenarioConfigError(f"line {lineno}: {message}")


def _parse_int(raw: str, lineno: int, key: str) -> int:
    try:
        return int(raw)
    except ValueError:
        _fail(lineno, f"{key} expects an integer, got {raw!r}")


def _parse_float(raw: str, lineno: int, key: str) -> float:
    try:
        return float(raw)
    except ValueError:
        _fail(lineno, f"{key} expects a number, got {raw!r}")


def _parse_pair(raw: str, sep: str, lineno: int, key: str) -> tuple[int, int]:
    parts = raw.split(sep)
    if len(parts) != 2:
        _fail(lineno, f"{key} expects two integers separated by {sep!r}, got {raw!r}")
    return (_parse_int(parts[0].strip(), lineno, key), _parse_int(parts[1].strip(), lineno, key))


def parse_scenario_config(text: str, default_name: str = "scenario") -> SyntheticScenario:
    fields: dict[str, object] = {}
    objects: list[dict] = []
    current: dict | None = None

    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                _fail(lineno, f"unterminated section header {line!r}")
            parts = line[1:-1].split()
            if len(parts) != 2 or parts[0] != "object":
                _fail(lineno, f"expected [object <id>], got {line!r}")
            current = {"object_id": _parse_int(parts[1], lineno, "object id"),
                       "occlusions": []}
            objects.append(current)
            continue
        if "=" not in line:
            _fail(lineno, f"expected key = value, got {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip()
        raw = raw.strip()
        if current is None:
            if key not in _SCENARIO_KEYS:
                _fail(lineno, f"unknown scenario field {key!r}")
            if key == "name":
                fields["name"] = raw
            elif key == "grid":
                fields["grid_hw"] = _parse_pair(raw, "x", lineno, key)
            elif key in ("frames", "c_key", "seed"):
                fields[key] = _parse_int(raw, lineno, key)
            else:
                fields[key] = _parse_float(raw, lineno, key)
        else:
            if key not in _OBJECT_KEYS:
                _fail(lineno, f"unknown object field {key!r}")
            if key == "entry":
                current["entry_frame"] = _parse_int(raw, lineno, key)
            elif key == "region":
                current["region_hw"] = _parse_pair(raw, "x", lineno, key)
            elif key == "start":
                current["start_rc"] = _parse_pair(raw, ",", lineno, key)
            elif key == "velocity":
                current["velocity_rc"] = _parse_pair(raw, ",", lineno, key)
            elif key == "drift":
                current["drift_rate"] = _parse_float(raw, lineno, key)
            elif key == "texture":
                current["texture_scale"] = _parse_float(raw, lineno, key)
            elif key == "morph_to_object":
                current["morph_to_object"] = _parse_int(raw, lineno, key)
            elif key == "morph_rate":
                current["morph_rate"] = _parse_float(raw, lineno, key)
            elif key == "occlude":
                a, b = _parse_pair(raw, "..", lineno, key)
                if b <= a:
                    _fail(lineno, f"occlusion window {raw!r} is empty")
                current["occlusions"].append((a, b))

    for required in ("frames", "grid_hw", "c_key"):
        if required not in fields:
            _fail(0, f"missing required scenario field {required.replace('_hw', '')!r}")
    if not objects:
        _fail(0, "scenario declares no objects")

    c_key = int(fields["c_key"])
    scale = float(fields.get("prototype_scale", 6.0))

    def proto_for(object_id: int) -> np.ndarray:
        p = np.zeros(c_key)
        p[(object_id - 1) % c_key] = scale
        return p

    specs = []
    for obj in objects:
        morph_to = None
        target = obj.get("morph_to_object")
        if target is not None:
            # target appearance is derived by id; it need not be a tracked object
            if not 1 <= target <= 255:
                _fail(0, f"object {obj['object_id']} morph target id {target} outside [1, 255]")
            morph_to = proto_for(target)
        specs.append(
            ObjectSpec(
                object_id=obj["object_id"],
                prototype=proto_for(obj["object_id"]),
                entry_frame=obj.get("entry_frame", 0),
                region_hw=obj.get("region_hw", (4, 4)),
                start_rc=obj.get("start_rc", (0, 0)),
                velocity_rc=obj.get("velocity_rc", (0, 0)),
                drift_rate=obj.get("drift_rate", 0.0),
                texture_scale=obj.get("texture_scale", 0.0),
                morph_to=morph_to,
                morph_rate=obj.get("morph_rate", 0.0),
                occlusions=tuple(obj["occlusions"]),
            )
        )
    return SyntheticScenario(
        name=str(fields.get("name", default_name)),
        num_frames=int(fields["frames"]),
        grid_hw=fields["grid_hw"],
        c_key=c_key,
        objects=tuple(specs),
        background=np.zeros(c_key),
        noise_sigma=float(fields.get("noise_sigma", 0.0)),
        rng_seed=int(fields.get("seed", 0)),
    )


def load_scenario_file(path) -> SyntheticScenario:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    stem = str(path).rsplit("/", 1)[-1].rsplit(".", 1)[0]
    return parse_scenario_config(text, default_name=stem)


def bundled_scenario(name: str, seed: int | None = None) -> SyntheticScenario:
    """Load one of the packaged presets, optionally overriding its seed."""
    if name not in BUNDLED:
        raise ScenarioConfigError(
            f"unknown bundled scenario {name!r}; available: {', '.join(BUNDLED)}"
        )
    text = (
        resources.files("featbank").joinpath(f"scenarios/{name}.cfg").read_text("utf-8")
    )
    scenario = parse_scenario_config(text, default_name=name)
    if seed is not None:
        scenario = scenario.with_seed(seed)
    return scenario
