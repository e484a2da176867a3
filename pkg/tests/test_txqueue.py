import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from leorate.txqueue import (FrameRecord, TransmitQueue, compute_sizing,
                             drain_budget_from_qdi, qdi_for, stability_check,
                             symbols_per_image)

from oracles import SymbolListQueue, lindley

NMAX = 147_456


def frames(n, symbols, step=0, start=0):
    return [FrameRecord(start + i, symbols, 0, step, 0.0) for i in range(n)]


class TestSymbols:
    def test_max_channel(self):
        assert symbols_per_image(192, 768, 512, 4) == NMAX

    def test_min_channel(self):
        assert symbols_per_image(32) == 24_576 == NMAX // 6

    def test_zero(self):
        assert symbols_per_image(0) == 0

    def test_per_channel_constant(self):
        assert symbols_per_image(1) == 768

    def test_bad_dimensions(self):
        with pytest.raises(ValueError):
            symbols_per_image(96, 770, 512, 4)


class TestSizing:
    def test_reference_sizing(self):
        s = compute_sizing(3, 15, NMAX, drain_budget_from_qdi(6_635_520, 6))
        assert s.q_max == 6_635_520
        assert s.drain_budget == 1_105_920
        assert s.qdi == 6

    def test_unit(self):
        s = compute_sizing(1, 1, 1, 1)
        assert (s.q_max, s.qdi) == (1, 1)

    def test_qdi_is_ceiling(self):
        assert qdi_for(5_308_416, 1_105_920) == math.ceil(5_308_416 / 1_105_920) == 5

    def test_rejects_non_positive(self):
        with pytest.raises(ValueError):
            compute_sizing(0, 12, NMAX, 1)


class TestEnqueue:
    def test_fits(self):
        q = TransmitQueue(6_635_520, 1_105_920)
        assert q.enqueue_batch(frames(15, NMAX)) == (15, 0)

    def test_full_queue_drops_all(self):
        q = TransmitQueue(NMAX * 2, 1)
        q.enqueue_batch(frames(2, NMAX))
        assert q.q_len == q.q_max
        assert q.enqueue_batch(frames(12, 10, start=2)) == (0, 12)

    def test_partial_batch(self):
        q = TransmitQueue(5_308_416, 1_105_920)
        q.enqueue_batch(frames(27, NMAX))
        assert q.q_len == 3_981_312
        assert q.enqueue_batch(frames(12, NMAX, start=27)) == (9, 3)
        assert q.q_len == q.q_max

    def test_sequential_stop(self):
        # a smaller frame after the first misfit must not sneak in
        q = TransmitQueue(100, 1)
        batch = [FrameRecord(0, 60, 0, 0, 0), FrameRecord(1, 60, 0, 0, 0),
                 FrameRecord(2, 10, 0, 0, 0)]
        assert q.enqueue_batch(batch) == (1, 2)


class TestDrain:
    def test_idle(self):
        q = TransmitQueue(10, 5)
        assert q.drain() == [] and q.q_len == 0

    def test_single_frame(self):
        q = TransmitQueue(6_635_520, 1_105_920)
        q.enqueue_batch(frames(1, NMAX))
        assert [f.frame_id for f in q.drain()] == [0]
        assert q.q_len == 0

    def test_partial_head(self):
        q = TransmitQueue(6_635_520, 1_105_920)
        q.enqueue_batch(frames(12, NMAX))
        assert q.q_len == 1_769_472
        out = q.drain()
        assert len(out) == 7
        assert q.frames[0].symbols_remaining == 73_728
        assert q.q_len == 663_552


class TestStability:
    def test_trained_mean_channel(self):
        assert stability_check(12 * 768 * 115.84, 1_105_920)

    def test_max_rate(self):
        assert not stability_check(12 * NMAX, 1_105_920)

    def test_boundary_is_unstable(self):
        assert not stability_check(1_105_920, 1_105_920)


def run_random_episode(rng, q_max=None):
    m = int(rng.integers(1, 6))
    sizes = rng.integers(1, 101, size=int(rng.integers(1, 6)))
    budget = int(rng.integers(1, 300))
    q_max = int(rng.integers(int(sizes.max()), 600)) if q_max is None else q_max
    steps = int(rng.integers(1, 12))
    q = TransmitQueue(q_max, budget)
    ref = SymbolListQueue(q_max, budget)
    fid = 0
    for t in range(steps):
        n = int(rng.choice(sizes))
        batch = frames(m, n, step=t, start=fid)
        fid += m
        pre = q.q_len
        acc, drop = q.enqueue_batch(batch)
        post_enq = q.q_len
        out = q.drain()
        r = ref.step([(f.frame_id, f.symbols_total) for f in batch])
        assert (pre, post_enq, q.q_len) == (r["pre"], r["post_enqueue"], r["post_drain"])
        assert (acc, drop) == (r["admitted"], r["dropped"])
        assert [f.frame_id for f in out] == r["forwarded"]
        assert q.q_len == sum(f.symbols_remaining for f in q.frames)
        assert 0 <= q.q_len <= q.q_max


def test_matches_symbol_list_oracle():
    rng = np.random.default_rng(1234)
    for _ in range(2000):
        run_random_episode(rng)


def test_infinite_capacity_matches_lindley_recursion():
    rng = np.random.default_rng(99)
    for _ in range(2000):
        budget = int(rng.integers(1, 400))
        m = int(rng.integers(1, 6))
        sizes = rng.integers(0, 101, size=int(rng.integers(2, 20)))
        q = TransmitQueue(10**12, budget)
        got = []
        for t, n in enumerate(sizes):
            q.enqueue_batch(frames(m, int(n), step=t, start=t * m))
            q.drain()
            got.append(q.q_len)
        assert got == lindley(0, [m * int(n) for n in sizes], budget)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(1, 60), min_size=1, max_size=15), st.integers(1, 5),
       st.integers(1, 120), st.integers(60, 400))
def test_conservation_fifo_and_stop(sizes, m, budget, q_max):
    q = TransmitQueue(q_max, budget)
    admitted_order, forwarded_order = [], []
    fid = 0
    for t, n in enumerate(sizes):
        batch = frames(m, n, step=t, start=fid)
        fid += m
        before = q.q_len
        acc, drop = q.enqueue_batch(batch)
        assert acc + drop == m
        admitted_order += [f.frame_id for f in batch[:acc]]
        # everything after the first drop in the batch is dropped
        assert all(f not in q.frames for f in batch[acc:])
        mid = q.q_len
        out = q.drain()
        forwarded_order += [f.frame_id for f in out]
        assert q.q_len == before + acc * n - (mid - q.q_len) and mid == before + acc * n
        assert 0 <= q.q_len <= q_max
    assert forwarded_order == admitted_order[:len(forwarded_order)]
    assert q.forwarded_frames + len(q) + q.dropped_frames == q.offered_frames


def test_queue_empties_every_interval_below_budget():
    q = TransmitQueue(10**9, 1_105_920)
    for t in range(49):
        q.enqueue_batch(frames(12, 768 * 96, step=t, start=12 * t))
        q.drain()
        assert q.q_len == 0
