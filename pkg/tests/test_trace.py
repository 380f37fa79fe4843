import numpy as np
import pytest

from featbank import generate, read_trace, write_trace
from featbank.errors import (
    FeatBankError,
    TraceDataError,
    TraceError,
    TraceMagicError,
    TraceTruncatedError,
    TraceVersionError,
)
from featbank.scenarios import bundled_scenario
from featbank.simstream import ObjectSpec, SyntheticScenario


@pytest.fixture()
def stream():
    c = 8
    p1 = np.zeros(c); p1[0] = 9.0
    p2 = np.zeros(c); p2[1] = 9.0
    sc = SyntheticScenario(
        name="trace-src", num_frames=4, grid_hw=(3, 4), c_key=c,
        objects=(
            ObjectSpec(object_id=1, prototype=p1, region_hw=(1, 2), start_rc=(0, 0)),
            ObjectSpec(object_id=2, prototype=p2, region_hw=(1, 2), start_rc=(2, 1),
                       entry_frame=1),
        ),
        background=np.zeros(c), noise_sigma=0.4, rng_seed=5,
    )
    frames, truths = generate(sc)
    return frames, truths, sc.entry_frames()


def test_file_round_trip_bit_identical(tmp_path, stream):
    frames, truths, entries = stream
    p1, p2 = tmp_path / "a.mbt", tmp_path / "b.mbt"
    write_trace(p1, frames, truths, entries)
    data = read_trace(p1)
    write_trace(p2, data.frames, data.truths, data.entry_frames)
    assert p1.read_bytes() == p2.read_bytes()


def test_in_memory_round_trip_exact(tmp_path, stream):
    frames, truths, entries = stream
    path = tmp_path / "t.mbt"
    write_trace(path, frames, truths, entries)
    data = read_trace(path)
    assert data.entry_frames == entries
    for orig, back in zip(frames, data.frames):
        assert np.array_equal(orig.keys.data, back.keys.data)
        assert sorted(orig.values) == sorted(back.values)
        for m in orig.values:
            assert np.array_equal(orig.values[m].data, back.values[m].data)
    for a, b in zip(truths, data.truths):
        assert np.array_equal(a, b)


def test_corrupt_magic(tmp_path, stream):
    frames, truths, entries = stream
    path = tmp_path / "t.mbt"
    write_trace(path, frames, truths, entries)
    blob = bytearray(path.read_bytes())
    blob[0] = ord("X")
    path.write_bytes(bytes(blob))
    with pytest.raises(TraceMagicError):
        read_trace(path)


def test_unsupported_version(tmp_path, stream):
    frames, truths, entries = stream
    path = tmp_path / "t.mbt"
    write_trace(path, frames, truths, entries)
    blob = bytearray(path.read_bytes())
    blob[4] = 99
    path.write_bytes(bytes(blob))
    with pytest.raises(TraceVersionError):
        read_trace(path)


def test_truncation_names_byte_counts(tmp_path, stream):
    frames, truths, entries = stream
    path = tmp_path / "t.mbt"
    write_trace(path, frames, truths, entries)
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) - 17])
    with pytest.raises(TraceTruncatedError, match=rf"{len(blob)}.*{len(blob) - 17}"):
        read_trace(path)


def test_nan_payload_is_typed_error(tmp_path, stream):
    frames, truths, entries = stream
    path = tmp_path / "t.mbt"
    write_trace(path, frames, truths, entries)
    blob = bytearray(path.read_bytes())
    nan = np.array([np.nan], dtype="<f4").tobytes()
    payload = 30 + 6 * len(entries)  # header + object table
    blob[payload + 8 : payload + 12] = nan  # third float of the first key grid
    path.write_bytes(bytes(blob))
    with pytest.raises(TraceDataError):
        read_trace(path)


def test_values_away_from_entry_rejected(tmp_path, stream):
    frames, truths, entries = stream
    bad_entries = dict(entries)
    bad_entries[1] = 2  # object 1 annotated at 0, claimed at 2
    with pytest.raises(TraceDataError):
        write_trace(tmp_path / "t.mbt", frames, truths, bad_entries)


def test_bad_object_id_rejected(tmp_path, stream):
    frames, truths, entries = stream
    with pytest.raises(TraceDataError):
        write_trace(tmp_path / "t.mbt", frames, truths, {**entries, 300: 0})


def test_mismatched_truth_count(tmp_path, stream):
    frames, truths, entries = stream
    with pytest.raises(TraceDataError):
        write_trace(tmp_path / "t.mbt", frames, truths[:-1], entries)


def test_fuzz_mutations_always_typed(tmp_path):
    sc = bundled_scenario("static")
    frames, truths = generate(sc)
    path = tmp_path / "base.mbt"
    write_trace(path, frames[:3], truths[:3], sc.entry_frames())
    base = path.read_bytes()
    rng = np.random.default_rng(0)
    target = tmp_path / "mut.mbt"
    for trial in range(500):
        blob = bytearray(base)
        kind = trial % 3
        if kind == 0:  # flip bytes
            for _ in range(int(rng.integers(1, 8))):
                blob[int(rng.integers(0, len(blob)))] = int(rng.integers(0, 256))
            blob = bytes(blob)
        elif kind == 1:  # truncate
            blob = bytes(blob[: int(rng.integers(0, len(blob)))])
        else:  # extend
            blob = bytes(blob) + bytes(rng.integers(0, 256, size=int(rng.integers(1, 64))).tolist())
        target.write_bytes(blob)
        try:
            read_trace(target)
        except TraceError:
            pass
        except FeatBankError as exc:  # any other package error is a bug
            pytest.fail(f"untyped failure {type(exc).__name__} on trial {trial}")
