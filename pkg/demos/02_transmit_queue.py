"""
Transmit queue arithmetic
=========================

Images are encoded in batches, queued on board and drained by a fixed symbol
budget every decision interval. Batches that do not fit are dropped from the
first misfit onwards, and a frame only counts as forwarded once its last
symbol has left.
"""

from leorate import FrameRecord, TransmitQueue, compute_sizing, symbols_per_image

# One image at C channels costs 768 * C symbols (768 x 512 px, four 2x stages).
for c in (32, 64, 96, 128, 192):
    print(f"C={c:3d}: {symbols_per_image(c):7d} symbols per image")

# Queue depth is three worst-case batches; the drain budget is fixed.
sizing = compute_sizing(qci=3, batch_size=12, max_symbols=symbols_per_image(192),
                        drain_budget=1_105_920)
print(sizing)

# Push twelve C=192 frames per step and watch the backlog build up.
q = TransmitQueue(sizing.q_max, sizing.drain_budget)
fid = 0
for t in range(10):
    batch = [FrameRecord(fid + i, symbols_per_image(192), 192, t, 0.0) for i in range(12)]
    fid += 12
    accepted, dropped = q.enqueue_batch(batch)
    peak = q.occupancy
    sent = q.drain()
    print(f"step {t}: admitted {accepted:2d} dropped {dropped:2d} forwarded {len(sent):2d} "
          f"peak occupancy {peak:.3f} after drain {q.occupancy:.3f}")

# The same load at C=96 always fits inside one drain.
q = TransmitQueue(sizing.q_max, sizing.drain_budget)
q.enqueue_batch([FrameRecord(i, symbols_per_image(96), 96, 0, 0.0) for i in range(12)])
print("C=96 batch forwarded in one step:", len(q.drain()), "frames, queue left", q.q_len)
