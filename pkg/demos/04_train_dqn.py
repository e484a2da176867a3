"""
Training the DQN rate controller
================================

Trains the default agent (400 overpasses) and evaluates it greedily through
the gateway loop next to the mid-rate baseline. Takes roughly a quarter of a
minute on one core.
"""

import numpy as np

from leorate import harness
from leorate.agent import GreedyPolicy, StateBounds, baseline_policy, train
from leorate.gateway import run_closed_loop

cfg = harness.load_config().with_overrides(seed=0)
make_env = harness.make_env_factory(cfg)
net, curve = train(make_env, harness.agent_config(cfg))

# Smoothed learning curve, one value per 50 episodes.
rets = np.array([p.ret for p in curve])
print("mean return per 50 episodes:", np.round(rets.reshape(-1, 50).mean(axis=1), 1))

env = make_env()
dqn_report, gw = run_closed_loop(env, cfg.link, GreedyPolicy(net, StateBounds.for_env(env)),
                                 harness.loop_flags(cfg))
mid_env = make_env()
mid_report, _ = run_closed_loop(mid_env, cfg.link, baseline_policy("mid_rate", mid_env.levels),
                                harness.loop_flags(cfg))

print(f"DQN: qualified {dqn_report.qualified}, dropped {dqn_report.dropped}, "
      f"mean C {dqn_report.mean_channel:.1f}")
print(f"mid: qualified {mid_report.qualified}, dropped {mid_report.dropped}")
print("DQN channel choice per step:", dqn_report.channel_trace)

# The first uplink command, as logged by the gateway.
print(gw.log[0].to_json())
