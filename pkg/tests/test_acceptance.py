"""Acceptance suite: one test per criterion, one PASS line per criterion.

Run with `pytest tests/test_acceptance.py -v -s`. Directional scenario
criteria average over the fixed seed set 0..9; tolerances are pinned here.
"""

import time

import numpy as np
import pytest

import featbank as fb
from featbank import (
    AffinityMatrix,
    FeatureGrid,
    FrameFeatures,
    MemoryBank,
    MemorySlot,
    StrategyConfig,
    compute_affinity,
    full_read,
    select_topk,
    softmax_weights,
    weighted_read,
)
from featbank.bench import StreamInput, run_benchmark
from featbank.errors import FeatBankError, TraceError
from featbank.scenarios import bundled_scenario
from featbank.trace import read_trace, write_trace

from oracles import (
    affinity_oracle,
    evict_oracle,
    lfu_oracle,
    softmax_oracle,
    topk_oracle,
    weighted_read_oracle,
)

SEEDS = list(range(10))


def ok(line):
    print(f"\n[acceptance] {line}: PASS")


# ----------------------------------------------------------------------
# shared scenario runs (cached across criteria 6, 7, 8)
# ----------------------------------------------------------------------


@pytest.fixture(scope="module")
def runs():
    cache = {}

    def get(name, strategy, seed, capacity=2):
        key = (name, strategy, seed, capacity)
        if key not in cache:
            sc = bundled_scenario(name, seed=seed)
            frames, truths = fb.generate(sc)
            stream = StreamInput(frames, truths, sc.entry_frames(), name)
            cfg = StrategyConfig(strategy=strategy, capacity_frames=capacity)
            cache[key] = run_benchmark(stream, cfg)
        return cache[key]

    return get


def mean_iou_over_seeds(get, name, strategy, capacity=2):
    return float(np.mean([
        get(name, strategy, seed, capacity).summary.mean_iou for seed in SEEDS
    ]))


# ----------------------------------------------------------------------
# criterion 1: kernel oracles
# ----------------------------------------------------------------------


def test_c1_kernel_oracles():
    rng = np.random.default_rng(11)
    t0 = time.perf_counter()
    n = 1000

    for _ in range(n):  # compute_affinity
        s, q = int(rng.integers(1, 33)), int(rng.integers(1, 33))
        c = int(rng.integers(1, 65))
        sk, qk = rng.normal(size=(s, c)), rng.normal(size=(q, c))
        got = compute_affinity(sk, qk, c).data
        want = affinity_oracle(sk.tolist(), qk.tolist(), c)
        assert np.allclose(got, want, atol=1e-5)

    for i in range(n):  # select_topk, exact (integer op)
        s, q = int(rng.integers(1, 33)), int(rng.integers(1, 9))
        k = int(rng.integers(1, 40))
        if i % 3 == 0:  # force ties via quantized values
            data = -rng.integers(0, 4, size=(s, q)).astype(float)
        else:
            data = -rng.random(size=(s, q))
        sel = select_topk(AffinityMatrix(data), k)
        for j in range(q):
            assert sel.column(j) == topk_oracle(data[:, j].tolist(), k)

    for _ in range(n):  # softmax_weights
        a = rng.normal(size=int(rng.integers(1, 33))) * 10
        assert np.allclose(softmax_weights(a), softmax_oracle(a.tolist()), atol=1e-5)

    for _ in range(n):  # weighted_read
        s, q, c = int(rng.integers(1, 20)), int(rng.integers(1, 9)), int(rng.integers(1, 6))
        k = int(rng.integers(1, s + 1))
        aff = AffinityMatrix(-rng.random(size=(s, q)))
        sel = select_topk(aff, k)
        w = rng.random(size=sel.indices.shape)
        vals = rng.normal(size=(s, c))
        got = weighted_read(w, sel, vals, (1, q)).data
        want = weighted_read_oracle(w.T.tolist(), sel.indices.T.tolist(), vals.tolist())
        assert np.allclose(got, want, atol=1e-5)

    for _ in range(n):  # lfu_scores (exact ratios of small ints)
        n_slots = int(rng.integers(1, 33))
        bank = MemoryBank((1, 1), max(n_slots, 1))
        now = int(rng.integers(0, 50))
        bank.advance_to(now)
        usages = rng.integers(0, 100, size=n_slots)
        ages = rng.integers(1, now + 2, size=n_slots)
        for i in range(n_slots):
            bank.slots.append(MemorySlot(
                key=np.zeros(2), values={1: np.zeros(2)}, source_frame=0,
                insertion_frame=now - int(ages[i]) + 1, slot_id=i,
                usage_count=float(usages[i]),
            ))
        got = [s.score for s in bank.lfu_scores()]
        assert got == lfu_oracle(usages.tolist(), ages.tolist())
        bank.slots.clear()

    for _ in range(n):  # evict, exact set equality
        n_slots = int(rng.integers(1, 33))
        now = int(rng.integers(0, 30))
        bank = MemoryBank((1, 1), n_slots)
        bank.advance_to(now)
        usages = rng.integers(0, 8, size=n_slots)  # small ints force ties
        ages = rng.integers(1, now + 2, size=n_slots)
        for i in range(n_slots):
            bank.slots.append(MemorySlot(
                key=np.zeros(2), values={1: np.zeros(2)}, source_frame=1,
                insertion_frame=now - int(ages[i]) + 1, slot_id=i,
                usage_count=float(usages[i]),
            ))
        bank._invalidate()
        n_evict = int(rng.integers(0, n_slots + 1))
        want = evict_oracle(list(range(n_slots)), usages.tolist(), ages.tolist(), n_evict)
        assert set(bank.evict(n_evict)) == want

    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0, f"kernel oracle battery took {elapsed:.1f}s"
    ok(f"C1 kernel oracles (6 kernels x {n} instances in {elapsed:.1f}s)")


# ----------------------------------------------------------------------
# criterion 2: capacity invariant
# ----------------------------------------------------------------------


def test_c2_capacity_invariant():
    h, w, ck, cv = 2, 2, 3, 2
    n = h * w
    rng = np.random.default_rng(2024)

    frame_pool = []
    for i in range(32):
        keys = FeatureGrid(h, w, ck, rng.normal(size=(n, ck)))
        vals = {1: FeatureGrid(h, w, cv, rng.normal(size=(n, cv)))}
        frame_pool.append((keys, vals))

    sequences = 100_000
    checked_ops = 0
    for _ in range(sequences):
        cap_frames = int(rng.integers(1, 4))
        bank = MemoryBank((h, w), cap_frames * n)
        cfg = StrategyConfig(top_k=int(rng.integers(1, 6)))
        t = 0
        keys, vals = frame_pool[int(rng.integers(len(frame_pool)))]
        bank.write_frame(FrameFeatures(t, keys, vals))
        pending = None
        for op in rng.integers(0, 4, size=int(rng.integers(2, 6))):
            if op == 0:
                t += 1
                bank.advance_to(t)
            elif op == 1:
                keys, vals = frame_pool[int(rng.integers(len(frame_pool)))]
                bank.write_frame(FrameFeatures(t, keys, vals))
                pending = None
            elif op == 2:
                keys, _ = frame_pool[int(rng.integers(len(frame_pool)))]
                pending = bank.query(keys, [1], cfg)
            elif pending is not None:
                bank.record_usage(pending.selection)
                pending = None
            assert bank.live_slots <= bank.capacity_slots
            checked_ops += 1

    sc = bundled_scenario("drift", seed=0)
    frames, truths = fb.generate(sc)
    stream = StreamInput(frames, truths, sc.entry_frames(), "drift")
    rep = run_benchmark(stream, StrategyConfig(strategy=fb.ADAPTIVE_LFU, capacity_frames=2))
    assert all(r.bank_frames_equivalent <= 2.0 for r in rep.rows)

    ok(f"C2 capacity invariant ({sequences} op sequences, {checked_ops} op checks)")


# ----------------------------------------------------------------------
# criterion 3: memory utilization reproduction
# ----------------------------------------------------------------------


def _speed_stream(num_frames):
    c = 64
    proto = np.zeros(c)
    proto[0] = 14.0
    sc = fb.SyntheticScenario(
        name="speed", num_frames=num_frames, grid_hw=(24, 24), c_key=c,
        objects=(fb.ObjectSpec(object_id=1, prototype=proto, region_hw=(6, 6),
                               start_rc=(9, 2), velocity_rc=(0, 1),
                               drift_rate=0.2, texture_scale=0.1),),
        background=np.zeros(c), noise_sigma=0.8, rng_seed=7,
    )
    frames, truths = fb.generate(sc)
    return StreamInput(frames, truths, sc.entry_frames(), "speed")


def test_c3_memory_utilization():
    stream = _speed_stream(70)
    rep_e = run_benchmark(stream, StrategyConfig(strategy=fb.EVERY_K))
    mean_occ = rep_e.summary.mean_bank_frames_equivalent
    assert abs(mean_occ - 7.0) <= 1.0, f"every-5 occupancy {mean_occ}"

    rep_f = run_benchmark(stream, StrategyConfig(strategy=fb.FIRST_AND_LATEST))
    for row in rep_f.rows:
        want = 1.0 if row.frame == 1 else 2.0
        assert row.bank_frames_equivalent == want

    ok(f"C3 memory utilization (every-5 mean {mean_occ:.2f} frames, first-latest 2)")


# ----------------------------------------------------------------------
# criterion 4: throughput ordering and read-cost scaling
# ----------------------------------------------------------------------


def test_c4_throughput_ordering():
    stream = _speed_stream(200)
    warm = _speed_stream(20)
    for strategy in (fb.ADAPTIVE_LFU, fb.FIRST_AND_LATEST):
        run_benchmark(warm, StrategyConfig(strategy=strategy, capacity_frames=2))

    fps = {}
    reports = {}
    # machine noise swamps the few-percent structural margin between the two
    # fixed-size strategies, so time those best-of-3, alternating the order
    for strategy in (fb.ADAPTIVE_LFU, fb.FIRST_AND_LATEST) * 3:
        rep = run_benchmark(stream, StrategyConfig(strategy=strategy, capacity_frames=2))
        if rep.summary.frames_per_second > fps.get(strategy, 0.0):
            fps[strategy] = rep.summary.frames_per_second
            reports[strategy] = rep
    rep = run_benchmark(stream, StrategyConfig(strategy=fb.EVERY_K, capacity_frames=2))
    fps[fb.EVERY_K] = rep.summary.frames_per_second
    reports[fb.EVERY_K] = rep

    assert fps[fb.ADAPTIVE_LFU] > fps[fb.FIRST_AND_LATEST] > fps[fb.EVERY_K], fps
    speedup = fps[fb.ADAPTIVE_LFU] / fps[fb.EVERY_K]
    assert speedup >= 1.5, f"adaptive/every-5 speedup {speedup:.2f}"

    rows = reports[fb.EVERY_K].rows
    x = np.array([r.bank_frames_equivalent for r in rows]) * 576
    y = np.array([r.read_seconds for r in rows])
    slope, intercept = np.polyfit(x, y, 1)
    fit = slope * x + intercept
    r2 = 1.0 - np.sum((y - fit) ** 2) / np.sum((y - y.mean()) ** 2)
    assert r2 > 0.9, f"read-time scaling fit R^2 {r2:.3f}"

    ok(
        "C4 throughput ordering "
        f"(fps adaptive {fps[fb.ADAPTIVE_LFU]:.1f} > first-latest "
        f"{fps[fb.FIRST_AND_LATEST]:.1f} > every-5 {fps[fb.EVERY_K]:.1f}, "
        f"speedup {speedup:.2f}x, R^2 {r2:.3f})"
    )


# ----------------------------------------------------------------------
# criterion 5: top-k / full-read consistency
# ----------------------------------------------------------------------


def test_c5_topk_full_read_consistency():
    rng = np.random.default_rng(55)
    for trial in range(100):
        s = int(rng.integers(2, 40))
        q = int(rng.integers(1, 17))
        c, cv = int(rng.integers(2, 17)), int(rng.integers(1, 5))
        holders = rng.random(s) < 0.8
        if not holders.any():
            holders[0] = True
        slots = []
        for i in range(s):
            vals = {1: rng.normal(size=cv)} if holders[i] else {}
            slots.append(MemorySlot(key=rng.normal(size=c), values=vals,
                                    source_frame=0, insertion_frame=0, slot_id=i))
        queries = FeatureGrid(1, q, c, rng.normal(size=(q, c)))

        dense = full_read(slots, queries, 1)

        keys = np.stack([sl.key for sl in slots])
        aff = compute_affinity(keys, queries.data, c)
        sel = select_topk(aff, s)  # k = S: selection is total
        gathered = np.take_along_axis(aff.data, sel.indices, axis=0)
        valid = holders[sel.indices]
        shifted = np.where(valid, gathered, -np.inf)
        w = np.exp(shifted - shifted.max(axis=0))
        w = np.where(valid, w, 0.0)
        w /= w.sum(axis=0)
        table = np.zeros((s, cv))
        table[holders] = np.stack([sl.values[1] for i, sl in enumerate(slots) if holders[i]])
        sparse = weighted_read(w, sel, table, (1, q), holders)

        assert np.allclose(dense.data, sparse.data, atol=1e-5), trial
    ok("C5 top-k vs full-read consistency (100 random banks, 1e-5)")


# ----------------------------------------------------------------------
# criteria 6-8: scenario directions (seeds 0..9)
# ----------------------------------------------------------------------


def test_c6_scenario_behaviors(runs):
    for strategy in fb.STRATEGIES:
        for seed in (0, 1, 2):
            rep = runs("static", strategy, seed)
            for row in rep.rows:
                assert row.iou[1] == 1.0, (strategy, seed, row.frame)

    occl = bundled_scenario("occlude")
    reappear = max(b for o in occl.objects for (_, b) in o.occlusions)

    def post_reappearance(strategy):
        vals = []
        for seed in SEEDS:
            rep = runs("occlude", strategy, seed)
            per = [r.iou[1] for r in rep.rows if r.frame > reappear and 1 in r.iou]
            vals.append(np.mean(per))
        return float(np.mean(vals))

    occ_a = post_reappearance(fb.ADAPTIVE_LFU)
    occ_f = post_reappearance(fb.FIRST_AND_LATEST)
    assert occ_a < occ_f, f"occlude post-reappearance {occ_a:.3f} vs {occ_f:.3f}"

    def_a = mean_iou_over_seeds(runs, "deform", fb.ADAPTIVE_LFU)
    def_f = mean_iou_over_seeds(runs, "deform", fb.FIRST_AND_LATEST)
    assert def_a > def_f, f"deform {def_a:.4f} vs {def_f:.4f}"

    ok(
        "C6 scenario behaviors (static 1.0; occlude post-reappearance "
        f"{occ_a:.3f} < {occ_f:.3f}; deform {def_a:.3f} > {def_f:.3f})"
    )


def test_c7_ablation_direction(runs):
    a = mean_iou_over_seeds(runs, "deform", fb.ADAPTIVE_LFU)
    s = mean_iou_over_seeds(runs, "deform", fb.SOFTMAX_INDEX)
    assert a >= s, f"adaptive {a:.5f} < softmax-index {s:.5f}"
    ok(f"C7 ablation direction (deform: adaptive {a:.4f} >= softmax-index {s:.4f})")


def test_c8_capacity_sweep_direction(runs):
    c2 = mean_iou_over_seeds(runs, "drift", fb.ADAPTIVE_LFU, capacity=2)
    c4 = mean_iou_over_seeds(runs, "drift", fb.ADAPTIVE_LFU, capacity=4)
    assert c4 > c2, f"drift capacity sweep {c4:.4f} vs {c2:.4f}"
    ok(f"C8 capacity sweep direction (drift: cap4 {c4:.4f} > cap2 {c2:.4f})")


# ----------------------------------------------------------------------
# criterion 9: trace format
# ----------------------------------------------------------------------


def test_c9_trace_round_trip_and_fuzz(tmp_path):
    sc = bundled_scenario("late-object")
    frames, truths = fb.generate(sc)
    p1, p2 = tmp_path / "a.mbt", tmp_path / "b.mbt"
    write_trace(p1, frames, truths, sc.entry_frames())
    data = read_trace(p1)
    write_trace(p2, data.frames, data.truths, data.entry_frames)
    assert p1.read_bytes() == p2.read_bytes()

    small = bundled_scenario("static")
    frames, truths = fb.generate(small)
    base_path = tmp_path / "base.mbt"
    write_trace(base_path, frames[:3], truths[:3], small.entry_frames())
    base = base_path.read_bytes()

    rng = np.random.default_rng(99)
    target = tmp_path / "mut.mbt"
    outcomes = {"ok": 0, "typed": 0}
    for trial in range(10_000):
        kind = trial % 3
        if kind == 0:
            blob = bytearray(base)
            for _ in range(int(rng.integers(1, 9))):
                blob[int(rng.integers(0, len(blob)))] = int(rng.integers(0, 256))
            blob = bytes(blob)
        elif kind == 1:
            blob = base[: int(rng.integers(0, len(base)))]
        else:
            extra = rng.integers(0, 256, size=int(rng.integers(1, 128)))
            blob = base + bytes(extra.tolist())
        target.write_bytes(blob)
        try:
            read_trace(target)
            outcomes["ok"] += 1
        except TraceError:
            outcomes["typed"] += 1
        except FeatBankError as exc:
            pytest.fail(f"non-trace error {type(exc).__name__} on trial {trial}")
        # any other exception type crashes the test by itself

    assert outcomes["typed"] > 0
    ok(f"C9 trace round-trip + fuzz (10000 mutations: {outcomes})")
