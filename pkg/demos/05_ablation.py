"""
Does SNR prediction help?
=========================

Trains one agent per ablation arm with the same seed. Without the forecast
the policy sees only the current SNR; the two forecast arms differ only in
which SNR value is sent to the encoder, which does not change what the
quality surrogate sees, so their decisions coincide.
"""

from leorate import harness
from leorate.agent import GreedyPolicy, StateBounds, train
from leorate.gateway import run_closed_loop
from leorate.metrics import compare_ablation

base = harness.load_config()
reports = {}
for arm, overrides in harness.ABLATION_ARMS.items():
    cfg = base.with_overrides(**{f"ablation.{k}": v for k, v in overrides.items()})
    make_env = harness.make_env_factory(cfg)
    net, _ = train(make_env, harness.agent_config(cfg))
    env = make_env()
    reports[arm], _ = run_closed_loop(env, cfg.link, GreedyPolicy(net, StateBounds.for_env(env)),
                                      harness.loop_flags(cfg))

text, _ = compare_ablation(reports)
print(text)
print("forecast arms take identical decisions:",
      reports["snr_pred_pl_only"].channel_trace == reports["snr_pred_encoder"].channel_trace)
