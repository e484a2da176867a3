import json

import numpy as np
import pytest

from leorate.agent import fixed_policy
from leorate.env import EnvConfig, RateControlEnv, run_policy
from leorate.gateway import Gateway, LoopFlags, LoopLatencyError, loop_latency, run_closed_loop
from leorate.linkbudget import LinkParams, build_overpass
from leorate.metrics import summarize
from leorate.quality import default_table

LINK = LinkParams()
C_KM_S = 299_792.458
TABLE = default_table()


def make_env(steps=49, **kw):
    return RateControlEnv(build_overpass(LINK, steps), TABLE, EnvConfig(**kw))


def cycling(state):
    # depends on the observed state so that any state mismatch shows up
    return (int(state.snr) + state.prev_rate + (state.queue_len > 0)) % 5


class TestLatency:
    def test_zenith(self):
        assert loop_latency(90.0, LINK).total_latency == pytest.approx(2 * 900 / C_KM_S)
        assert loop_latency(90.0, LINK).total_latency == pytest.approx(6.0e-3, abs=1e-5)

    def test_horizon(self):
        d = np.sqrt(900 * (2 * 6371 + 900))
        assert loop_latency(0.0, LINK).total_latency == pytest.approx(2 * d / C_KM_S)
        assert loop_latency(0.0, LINK).total_latency == pytest.approx(23.4e-3, abs=1e-4)

    def test_processing_adds(self):
        base = loop_latency(30.0, LINK).total_latency
        assert loop_latency(30.0, LINK, 5e-3).total_latency == pytest.approx(base + 5e-3)

    def test_budget_exceeded(self):
        env = make_env()
        gw = Gateway(env, LINK, LoopFlags(processing_delay=5.0))
        with pytest.raises(LoopLatencyError):
            gw.run(fixed_policy(2))


class TestEquivalence:
    @pytest.mark.parametrize("predictor", [True, False])
    def test_matches_direct_drive(self, predictor):
        direct = make_env(predictor_enabled=predictor)
        run_policy(direct, cycling)
        looped = make_env(predictor_enabled=predictor)
        report, gw = run_closed_loop(looped, LINK, cycling, LoopFlags(predictor_enabled=predictor))
        assert looped.records == direct.records
        assert report == summarize(direct.records, direct.config, direct.frames,
                                   direct.residual_frames)

    def test_predicted_command_mode(self):
        env = make_env(snr_to_encoder="predicted")
        _, gw = run_closed_loop(env, LINK, fixed_policy(1),
                                LoopFlags(snr_to_encoder="predicted"))
        for step, rec in zip(gw.log, env.records):
            assert step.command.commanded_snr == env.predicted_snr(rec.step)
            assert rec.commanded_snr == step.command.commanded_snr

    def test_instantaneous_command_mode(self):
        env = make_env()
        _, gw = run_closed_loop(env, LINK, fixed_policy(1))
        assert [s.command.commanded_snr for s in gw.log] == list(env.profile.snrs)

    def test_noise_perturbs_estimate_only(self):
        env = make_env()
        _, gw = run_closed_loop(env, LINK, fixed_policy(2),
                                LoopFlags(estimation_noise_db=0.5), np.random.default_rng(0))
        err = np.array([s.snr_estimate for s in gw.log]) - env.profile.snrs
        assert np.all(err != 0) and np.std(err) == pytest.approx(0.5, rel=0.4)
        assert [r.snr for r in env.records] == list(env.profile.snrs)

    def test_noise_needs_rng(self):
        with pytest.raises(ValueError):
            Gateway(make_env(), LINK, LoopFlags(estimation_noise_db=1.0))


def test_three_step_trace_by_hand():
    env = make_env(steps=3)
    _, gw = run_closed_loop(env, LINK, fixed_policy(4))
    assert [s.telemetry.sequence_number for s in gw.log] == [0, 1, 2]
    assert [s.telemetry.sample_time for s in gw.log] == [0.0, 5.0, 10.0]
    # step 0 starts empty; 12 x 147456 symbols leave 663552 after one drain
    assert [s.telemetry.queue_len for s in gw.log] == [0, 663_552, 1_327_104]
    assert [s.command.apply_step for s in gw.log] == [0, 1, 2]
    horizon = np.sqrt(900 * (2 * 6371 + 900)) / C_KM_S
    assert gw.log[0].command.issue_time == pytest.approx(horizon)
    assert gw.log[1].command.issue_time == pytest.approx(5.0 + 900 / C_KM_S)
    assert all(s.command.rate.channel_count == 192 for s in gw.log)
    assert gw.log[0].snr_forecast == env.profile.samples[1].snr
    assert gw.log[2].snr_forecast == env.profile.samples[2].snr


def test_sequence_has_no_gaps_and_log_is_json(tmp_path):
    env = make_env()
    _, gw = run_closed_loop(env, LINK, cycling)
    gw.write_log(tmp_path / "c.jsonl")
    rows = [json.loads(l) for l in (tmp_path / "c.jsonl").read_text().splitlines()]
    assert [r["telemetry"]["sequence_number"] for r in rows] == list(range(49))
    assert all(r["timing"]["total_latency"] < 5.0 for r in rows)
    assert [r["command"]["rate_index"] for r in rows] == [rec.action for rec in env.records]


def test_rerun_resets_sequence():
    env = make_env(steps=5)
    gw = Gateway(env, LINK)
    gw.run(fixed_policy(0))
    gw.run(fixed_policy(0))
    assert [s.telemetry.sequence_number for s in gw.log] == list(range(5))
