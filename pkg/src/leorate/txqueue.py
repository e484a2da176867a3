"""On-board symbol-level transmit queue.

Encoded images arrive in batches of M once per decision interval, are admitted
one at a time until the first one that does not fit (the rest of the batch is
discarded), and the physical layer drains a fixed symbol budget per interval
in FIFO order.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field


@dataclass
class FrameRecord:
    frame_id: int
    symbols_total: int
    channel_count: int
    encode_step: int
    snr_at_encode: float
    symbols_remaining: int = -1

    def __post_init__(self) -> None:
        if self.symbols_remaining < 0:
            self.symbols_remaining = self.symbols_total


@dataclass(frozen=True)
class QueueSizing:
    qci: int
    qdi: int
    batch_size: int
    max_symbols_per_image: int
    q_max: int
    drain_budget: int


def symbols_per_image(channel_count: int, height: int = 768, width: int = 512,
                      stages: int = 4) -> int:
    """Complex symbols per encoded image: (1/2) * (H/2^i) * (W/2^i) * C."""
    scale = 2 ** stages
    if height % scale or width % scale:
        raise ValueError(f"{height}x{width} is not divisible by 2^{stages}")
    pixels = (height // scale) * (width // scale)
    if pixels % 2:
        raise ValueError(f"{height}x{width} at {stages} stages gives an odd patch count")
    return pixels // 2 * channel_count


def qdi_for(q_max: int, drain_budget: int) -> int:
    return math.ceil(q_max / drain_budget)


def drain_budget_from_qdi(q_max: int, qdi: int) -> int:
    """Smallest per-interval budget that empties a full queue in ``qdi`` intervals."""
    if qdi <= 0:
        raise ValueError("qdi must be positive")
    return -(-q_max // qdi)


def compute_sizing(qci: int, batch_size: int, max_symbols: int,
                   drain_budget: int) -> QueueSizing:
    for name, v in (("qci", qci), ("batch_size", batch_size),
                    ("max_symbols", max_symbols), ("drain_budget", drain_budget)):
        if v <= 0:
            raise ValueError(f"{name} must be positive, got {v}")
    q_max = qci * batch_size * max_symbols
    return QueueSizing(qci=qci, qdi=qdi_for(q_max, drain_budget), batch_size=batch_size,
                       max_symbols_per_image=max_symbols, q_max=q_max,
                       drain_budget=drain_budget)


def stability_check(mean_arrival_symbols: float, drain_budget: float) -> bool:
    """True iff mean per-interval arrivals are strictly below the drain budget."""
    return mean_arrival_symbols < drain_budget


@dataclass
class TransmitQueue:
    q_max: int
    drain_budget: int
    frames: deque = field(default_factory=deque)
    q_len: int = 0
    offered_frames: int = 0
    enqueued_frames: int = 0
    dropped_frames: int = 0
    forwarded_frames: int = 0

    def __post_init__(self) -> None:
        if self.q_max <= 0 or self.drain_budget <= 0:
            raise ValueError("q_max and drain_budget must be positive")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def occupancy(self) -> float:
        return self.q_len / self.q_max

    def enqueue_batch(self, frames: list[FrameRecord]) -> tuple[int, int]:
        """Admit a batch sequentially; the first misfit and everything after it is dropped.

        Returns ``(accepted, dropped)``.
        """
        accepted = 0
        for frame in frames:
            if self.q_len + frame.symbols_total > self.q_max:
                break
            self.frames.append(frame)
            self.q_len += frame.symbols_total
            accepted += 1
        dropped = len(frames) - accepted
        self.offered_frames += len(frames)
        self.enqueued_frames += accepted
        self.dropped_frames += dropped
        return accepted, dropped

    def drain(self, budget: int | None = None) -> list[FrameRecord]:
        """Transmit up to one interval's worth of symbols; return frames that finished."""
        budget = self.drain_budget if budget is None else budget
        forwarded = []
        while budget > 0 and self.frames:
            head = self.frames[0]
            take = min(budget, head.symbols_remaining)
            head.symbols_remaining -= take
            self.q_len -= take
            budget -= take
            if head.symbols_remaining == 0:
                forwarded.append(self.frames.popleft())
        self.forwarded_frames += len(forwarded)
        return forwarded
