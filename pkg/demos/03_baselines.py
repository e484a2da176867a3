"""
Fixed-rate baselines
====================

Runs the three constant-rate policies through the environment and compares
how many frames arrive with acceptable quality.
"""

from leorate import harness
from leorate.agent import baseline_policy
from leorate.env import run_policy
from leorate.metrics import compare, summarize

cfg = harness.load_config()
make_env = harness.make_env_factory(cfg)

reports = {}
for name in ("min_rate", "mid_rate", "max_rate"):
    env = make_env()
    run_policy(env, baseline_policy(name, env.levels))
    reports[name] = summarize(env.records, env.config, env.frames, env.residual_frames)

text, _ = compare(reports)
print(text)

# max_rate saturates the buffer within a few steps and then sheds whole batches.
occ = reports["max_rate"].peak_occupancy_trace
print("max_rate post-enqueue occupancy, first 10 steps:", [round(x, 2) for x in occ[:10]])

# min_rate never stresses the queue but most frames miss the PSNR threshold
# while the satellite is low.
print("min_rate qualified per step:", reports["min_rate"].per_step_qualified)
