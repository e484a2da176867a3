"""Ground-gateway predict-decide-execute loop.

Each decision step the gateway ingests a queue telemetry frame, estimates the
current SNR, optionally forecasts the next-step SNR from the link budget,
asks the policy for a rate and uplinks (rate, SNR) to the satellite. Loop
latency is tracked and asserted against the decision interval; it does not
shift the dynamics.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .env import EnvState, RateControlEnv, RateLevel
from .linkbudget import SPEED_OF_LIGHT_KM_S, LinkParams, slant_range


class LoopLatencyError(RuntimeError):
    """Round-trip control latency does not fit inside the decision interval."""


@dataclass(frozen=True)
class TelemetryFrame:
    sample_time: float
    queue_len: int
    sequence_number: int


@dataclass(frozen=True)
class UplinkCommand:
    issue_time: float
    rate: RateLevel
    commanded_snr: float
    apply_step: int


@dataclass(frozen=True)
class LoopTiming:
    downlink_delay: float
    uplink_delay: float
    processing_delay: float

    @property
    def total_latency(self) -> float:
        return self.downlink_delay + self.uplink_delay + self.processing_delay


def loop_latency(theta: float, params: LinkParams, processing_delay: float = 0.0) -> LoopTiming:
    """Telemetry-down plus command-up propagation at elevation ``theta``, in seconds."""
    leg = slant_range(theta, params) / SPEED_OF_LIGHT_KM_S
    return LoopTiming(leg, leg, processing_delay)


@dataclass(frozen=True)
class LoopFlags:
    predictor_enabled: bool = True
    snr_to_encoder: str = "instantaneous"
    estimation_noise_db: float = 0.0
    processing_delay: float = 0.0


@dataclass(frozen=True)
class LoopStep:
    telemetry: TelemetryFrame
    snr_estimate: float
    snr_forecast: float | None
    state: EnvState
    command: UplinkCommand
    timing: LoopTiming

    def to_json(self) -> str:
        cmd = self.command
        rec = {
            "step": cmd.apply_step,
            "telemetry": asdict(self.telemetry),
            "snr_estimate": self.snr_estimate,
            "snr_forecast": self.snr_forecast,
            "state": asdict(self.state),
            "command": {"issue_time": cmd.issue_time, "rate_index": cmd.rate.index,
                        "channel_count": cmd.rate.channel_count,
                        "commanded_snr": cmd.commanded_snr, "apply_step": cmd.apply_step},
            "timing": {**asdict(self.timing), "total_latency": self.timing.total_latency},
        }
        return json.dumps(rec, sort_keys=True)


class Gateway:
    """Runs one overpass through the ground-side control loop."""

    def __init__(self, env: RateControlEnv, link: LinkParams, flags: LoopFlags | None = None,
                 noise_rng: np.random.Generator | None = None):
        self.env = env
        self.link = link
        self.flags = flags or LoopFlags()
        if self.flags.estimation_noise_db > 0 and noise_rng is None:
            raise ValueError("estimation noise requires a noise_rng")
        self.noise_rng = noise_rng
        self.log: list[LoopStep] = []
        self._seq = 0

    def _telemetry(self, t: int) -> TelemetryFrame:
        frame = TelemetryFrame(t * self.env.profile.decision_interval,
                               self.env.queue.q_len, self._seq)
        self._seq += 1
        return frame

    def _estimate(self, t: int) -> float:
        snr = self.env.true_snr(t)
        if self.flags.estimation_noise_db > 0:
            snr += float(self.noise_rng.normal(0.0, self.flags.estimation_noise_db))
        return snr

    def decide(self, policy) -> LoopStep:
        env, flags = self.env, self.flags
        t = env.t
        sample = env.profile.samples[t]
        timing = loop_latency(sample.elevation, self.link, flags.processing_delay)
        if timing.total_latency >= env.profile.decision_interval:
            raise LoopLatencyError(
                f"step {t}: loop latency {timing.total_latency:.4f} s >= decision interval "
                f"{env.profile.decision_interval} s")
        tm = self._telemetry(t)
        est = self._estimate(t)
        forecast = env.predicted_snr(t) if flags.predictor_enabled else None
        state = EnvState(forecast if flags.predictor_enabled else est,
                         sample.elevation, tm.queue_len, env.prev_rate)
        action = int(policy(state))
        if flags.snr_to_encoder == "predicted":
            cmd_snr = env.predicted_snr(t)
        else:
            cmd_snr = est
        cmd = UplinkCommand(tm.sample_time + timing.downlink_delay + timing.processing_delay,
                            env.levels[action], cmd_snr, t)
        step = LoopStep(tm, est, forecast, state, cmd, timing)
        self.log.append(step)
        return step

    def run(self, policy) -> list:
        """Drive the environment to the end of the pass; returns the StepOutcomes."""
        env = self.env
        env.reset()
        self.log.clear()
        self._seq = 0
        outcomes = []
        while not env.done:
            step = self.decide(policy)
            expected = (env.predicted_snr(env.t) if self.flags.snr_to_encoder == "predicted"
                        else step.snr_estimate)
            assert step.command.commanded_snr == expected
            outcomes.append(env.step(step.command.rate.index, step.command.commanded_snr))
        return outcomes

    def write_log(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for step in self.log:
                fh.write(step.to_json() + "\n")


def run_closed_loop(env: RateControlEnv, link: LinkParams, policy,
                    flags: LoopFlags | None = None,
                    noise_rng: np.random.Generator | None = None):
    """Run one pass through the gateway loop; returns ``(report, gateway)``."""
    from .metrics import summarize

    gw = Gateway(env, link, flags, noise_rng)
    gw.run(policy)
    return summarize(env.records, env.config, env.frames, env.residual_frames), gw
