"""Finite-horizon rate-control MDP over one overpass.

State is (SNR estimate, elevation, queue length, previous rate level). Each
step encodes a batch at the chosen channel count, pushes it through the
transmit queue, scores the frames that finished transmission with the quality
surrogate and returns the queue-penalised reward.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linkbudget import OverpassProfile, predict_snr
from .quality import QualityTable, content_jitter, quality_of
from .txqueue import FrameRecord, TransmitQueue, symbols_per_image

DEFAULT_CHANNELS = (32, 64, 96, 128, 192)
SNR_MODES = ("instantaneous", "predicted")


@dataclass(frozen=True)
class RateLevel:
    index: int
    channel_count: int
    ratio: float


def rate_levels(channels=DEFAULT_CHANNELS, stages: int = 4,
                in_channels: int = 3) -> tuple[RateLevel, ...]:
    """Index-aligned action set; ratio is symbols per input pixel value."""
    if not channels:
        raise ValueError("action set must not be empty")
    if list(channels) != sorted(set(channels)):
        raise ValueError(f"channel counts must be strictly ascending, got {channels}")
    denom = 2 * (2 ** stages) ** 2 * in_channels
    return tuple(RateLevel(k, int(c), c / denom) for k, c in enumerate(channels))


@dataclass(frozen=True)
class EnvState:
    snr: float
    elevation: float
    queue_len: int
    prev_rate: int


@dataclass(frozen=True)
class RewardParams:
    psnr_threshold: float = 32.0
    msssim_threshold: float = 0.94
    lambda_over: float = 1.0
    lambda_under: float = 0.1
    lambda_drop: float = 1.0
    q_th: float = 0.0
    q_low: float = 0.0

    @classmethod
    def relative(cls, q_max: int, q_th_frac: float = 0.8, q_low_frac: float = 0.05,
                 **kw) -> "RewardParams":
        return cls(q_th=q_th_frac * q_max, q_low=q_low_frac * q_max, **kw)

    def validate(self, q_max: int) -> None:
        if not 0 <= self.q_low < self.q_th < q_max:
            raise ValueError(f"need 0 <= q_low < q_th < q_max, got "
                             f"{self.q_low}, {self.q_th}, {q_max}")
        if self.psnr_threshold <= 0 or not 0 < self.msssim_threshold <= 1:
            raise ValueError("quality thresholds out of range")
        if min(self.lambda_over, self.lambda_under, self.lambda_drop) < 0:
            raise ValueError("penalty coefficients must be non-negative")


def frame_reward(psnr: float, msssim: float, params: RewardParams) -> int:
    return int(psnr >= params.psnr_threshold and msssim >= params.msssim_threshold)


def queue_penalties(queue_len: float, dropped: int, params: RewardParams,
                    q_max: float) -> tuple[float, float, float]:
    """Return ``(p_over, p_under, p_drop)``."""
    p_over = params.lambda_over * max(0.0, (queue_len - params.q_th) / (q_max - params.q_th))
    p_under = params.lambda_under * float(queue_len <= params.q_low)
    p_drop = params.lambda_drop * dropped
    return p_over, p_under, p_drop


@dataclass(frozen=True)
class EnvConfig:
    batch_size: int = 12
    q_max: int = 5_308_416
    drain_budget: int = 1_105_920
    channels: tuple[int, ...] = DEFAULT_CHANNELS
    image_height: int = 768
    image_width: int = 512
    stages: int = 4
    reward: RewardParams = field(default_factory=lambda: RewardParams.relative(5_308_416))
    initial_rate: int = 2
    predictor_enabled: bool = True
    snr_to_encoder: str = "instantaneous"
    quality_snr: str = "forward"  # or "encode"
    penalty_sample: str = "post_drain"  # or "post_enqueue"
    content_jitter: bool = False

    def __post_init__(self) -> None:
        if self.batch_size <= 0:
            raise ValueError("batch_size must be positive")
        if self.snr_to_encoder not in SNR_MODES:
            raise ValueError(f"snr_to_encoder must be one of {SNR_MODES}")
        if self.quality_snr not in ("forward", "encode"):
            raise ValueError("quality_snr must be 'forward' or 'encode'")
        if self.penalty_sample not in ("post_drain", "post_enqueue"):
            raise ValueError("penalty_sample must be 'post_drain' or 'post_enqueue'")
        if not 0 <= self.initial_rate < len(self.channels):
            raise ValueError("initial_rate is not a valid action index")
        self.reward.validate(self.q_max)


@dataclass(frozen=True)
class StepRecord:
    """Everything that happened in one decision interval."""

    step: int
    elevation: float
    snr: float
    snr_pred: float
    action: int
    channel_count: int
    commanded_snr: float
    q_len_pre: int
    q_len_post_enqueue: int
    q_len_post_drain: int
    admitted: int
    dropped: int
    forwarded: int
    qualified: int
    p_over: float
    p_under: float
    p_drop: float
    reward: float


@dataclass(frozen=True)
class FrameQuality:
    frame_id: int
    channel_count: int
    encode_step: int
    forward_step: int
    snr: float
    psnr: float
    msssim: float
    qualified: int


@dataclass(frozen=True)
class StepOutcome:
    reward: float
    qualified: int
    forwarded: int
    dropped: int
    next_state: EnvState
    done: bool
    record: StepRecord


class RateControlEnv:
    """One overpass as a steppable episode."""

    def __init__(self, profile: OverpassProfile, table: QualityTable,
                 config: EnvConfig | None = None,
                 jitter_rng: np.random.Generator | None = None):
        self.profile = profile
        self.table = table
        self.config = config or EnvConfig()
        self.levels = rate_levels(self.config.channels, self.config.stages)
        for lv in self.levels:
            table.column(lv.channel_count)
        self.symbols = [symbols_per_image(lv.channel_count, self.config.image_height,
                                          self.config.image_width, self.config.stages)
                        for lv in self.levels]
        if self.config.content_jitter and jitter_rng is None:
            raise ValueError("content_jitter requires a jitter_rng")
        self._jitter_rng = jitter_rng
        self.reset()

    @property
    def num_actions(self) -> int:
        return len(self.levels)

    @property
    def horizon(self) -> int:
        return self.profile.num_steps

    def reset(self) -> EnvState:
        self.t = 0
        self.prev_rate = self.config.initial_rate
        self.queue = TransmitQueue(self.config.q_max, self.config.drain_budget)
        self.records: list[StepRecord] = []
        self.frames: list[FrameQuality] = []
        self._next_frame_id = 0
        self.done = False
        return self.observe()

    def true_snr(self, t: int) -> float:
        return self.profile.samples[min(t, self.horizon - 1)].snr

    def predicted_snr(self, t: int) -> float:
        return predict_snr(self.profile, min(t, self.horizon - 1))

    def observe(self) -> EnvState:
        t = min(self.t, self.horizon - 1)
        snr = self.predicted_snr(t) if self.config.predictor_enabled else self.true_snr(t)
        return EnvState(snr, self.profile.samples[t].elevation, self.queue.q_len, self.prev_rate)

    def commanded_snr(self) -> float:
        if self.config.snr_to_encoder == "predicted":
            return self.predicted_snr(self.t)
        return self.true_snr(self.t)

    def step(self, action: int, commanded_snr: float | None = None) -> StepOutcome:
        if self.done:
            raise RuntimeError("episode is finished; call reset()")
        if not 0 <= action < self.num_actions:
            raise ValueError(f"invalid action {action}")
        cfg = self.config
        t = self.t
        level = self.levels[action]
        cmd_snr = self.commanded_snr() if commanded_snr is None else float(commanded_snr)

        q_pre = self.queue.q_len
        batch = []
        for _ in range(cfg.batch_size):
            batch.append(FrameRecord(self._next_frame_id, self.symbols[action],
                                     level.channel_count, t, cmd_snr))
            self._next_frame_id += 1
        admitted, dropped = self.queue.enqueue_batch(batch)
        q_enq = self.queue.q_len
        sent = self.queue.drain()
        q_post = self.queue.q_len

        snr_now = self.true_snr(t)
        qualified = 0
        for fr in sent:
            snr = snr_now if cfg.quality_snr == "forward" else fr.snr_at_encode
            psnr, msssim = quality_of(self.table, snr, fr.channel_count)
            if cfg.content_jitter:
                dp, dm = content_jitter(self._jitter_rng)
                psnr += dp
                msssim = min(1.0, max(1e-6, msssim + dm))
            ok = frame_reward(psnr, msssim, cfg.reward)
            qualified += ok
            self.frames.append(FrameQuality(fr.frame_id, fr.channel_count, fr.encode_step,
                                            t, snr, psnr, msssim, ok))

        q_pen = q_post if cfg.penalty_sample == "post_drain" else q_enq
        p_over, p_under, p_drop = queue_penalties(q_pen, dropped, cfg.reward, cfg.q_max)
        reward = qualified - p_over - p_under - p_drop

        rec = StepRecord(t, self.profile.samples[t].elevation, snr_now, self.predicted_snr(t),
                         action, level.channel_count, cmd_snr, q_pre, q_enq, q_post,
                         admitted, dropped, len(sent), qualified, p_over, p_under, p_drop,
                         reward)
        self.records.append(rec)
        self.prev_rate = action
        self.t += 1
        self.done = self.t >= self.horizon
        return StepOutcome(reward, qualified, len(sent), dropped, self.observe(), self.done, rec)

    @property
    def residual_frames(self) -> int:
        return len(self.queue)


def episode_return(trajectory) -> float:
    """Sum of per-step rewards over a finished episode.

    ``trajectory`` is a sequence of StepOutcome or StepRecord objects.
    """
    items = list(trajectory)
    if items and isinstance(items[-1], StepOutcome) and not items[-1].done:
        raise ValueError("trajectory is not complete")
    return float(sum(it.reward for it in items))


def run_policy(env: RateControlEnv, policy) -> list[StepOutcome]:
    """Drive ``env`` from reset to done with ``policy(state) -> action index``."""
    state = env.reset()
    out = []
    while not env.done:
        o = env.step(policy(state))
        out.append(o)
        state = o.next_state
    return out
