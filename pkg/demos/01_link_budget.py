"""
Link budget over one overpass
=============================

How the feeder-link SNR follows the elevation angle as the satellite rises,
peaks overhead and sets again, and what the one-step-ahead forecast adds.
"""

import numpy as np

from leorate import LinkParams, build_overpass, predict_snr, slant_range, snr_at

# The default link is a 900 km orbit on a 20 GHz carrier.
link = LinkParams()
print(link)

# Slant range shrinks from about 3504 km at the horizon to the altitude overhead.
for theta in (0.0, 10.0, 30.0, 60.0, 90.0):
    print(f"elevation {theta:5.1f} deg  range {slant_range(theta, link):8.1f} km  "
          f"SNR {snr_at(theta, link):6.2f} dB")

# A pass is 49 decision steps of 5 s, sweeping 0 -> 90 -> 0 degrees.
profile = build_overpass(link)
print("window:", profile.window, "s, peak at step", int(np.argmax(profile.elevations)))
print("SNR range: %.2f .. %.2f dB" % (profile.snrs.min(), profile.snrs.max()))

# The predictor simply evaluates the link budget at the next step's elevation.
# On the rising half it is always optimistic relative to "now".
gap = [predict_snr(profile, t) - profile.samples[t].snr for t in range(profile.num_steps)]
print("forecast minus current, first 5 steps:", np.round(gap[:5], 3))
print("forecast minus current, last 5 steps: ", np.round(gap[-5:], 3))

# Round-trip telemetry/command latency stays far below the 5 s decision interval.
from leorate.gateway import loop_latency

for theta in (0.0, 90.0):
    print(f"loop latency at {theta:4.1f} deg: {1e3 * loop_latency(theta, link).total_latency:.2f} ms")
