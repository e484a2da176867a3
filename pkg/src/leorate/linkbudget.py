"""Feeder-link geometry and link budget.

Everything here works in the dB domain: slant range from elevation, free-space
path loss, C/N0 and SNR, plus the overpass sweep and the next-step SNR
predictor the gateway uses.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

BOLTZMANN_TERM_DB = 228.6  # -10*log10(k), dBW/K/Hz
SPEED_OF_LIGHT_KM_S = 299_792.458


@dataclass(frozen=True)
class LinkParams:
    """Link-budget constants for the satellite-to-gateway feeder link.

    Defaults are the clear-sky Ka-band feeder link: 20 GHz, 900 km orbit,
    35 dBW EIRP, 25 dB/K G/T, 100 MHz noise bandwidth, 2.5 dB extra loss.
    """

    carrier_freq: float = 20.0  # GHz
    orbit_altitude: float = 900.0  # km
    earth_radius: float = 6371.0  # km
    eirp: float = 35.0  # dBW
    g_over_t: float = 25.0  # dB/K
    noise_bandwidth: float = 100e6  # Hz
    extra_loss: float = 2.5  # dB
    signal_bandwidth: float = 200e6  # Hz, metadata only
    rolloff: float = 0.0
    boltzmann_term: float = BOLTZMANN_TERM_DB

    def __post_init__(self) -> None:
        for name in ("carrier_freq", "orbit_altitude", "earth_radius",
                     "noise_bandwidth", "signal_bandwidth"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.extra_loss < 0:
            raise ValueError(f"extra_loss must be >= 0, got {self.extra_loss!r}")
        if not 0.0 <= self.rolloff <= 1.0:
            raise ValueError(f"rolloff must be in [0, 1], got {self.rolloff!r}")


@dataclass(frozen=True)
class OverpassSample:
    step: int
    elevation: float  # deg
    slant_range: float  # km
    snr: float  # dB


@dataclass(frozen=True)
class OverpassProfile:
    """Sampled elevation / slant-range / SNR trajectory over one pass."""

    decision_interval: float
    samples: tuple[OverpassSample, ...]
    min_elevation: float = 0.0

    @property
    def num_steps(self) -> int:
        return len(self.samples)

    @property
    def window(self) -> float:
        """Visibility window length in seconds."""
        return self.num_steps * self.decision_interval

    @property
    def elevations(self) -> np.ndarray:
        return np.array([s.elevation for s in self.samples])

    @property
    def snrs(self) -> np.ndarray:
        return np.array([s.snr for s in self.samples])

    @property
    def slant_ranges(self) -> np.ndarray:
        return np.array([s.slant_range for s in self.samples])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["step", "elevation_deg", "slant_range_km", "snr_db"])
            for s in self.samples:
                writer.writerow([s.step, repr(s.elevation), repr(s.slant_range), repr(s.snr)])


def _check_elevation(theta: float) -> None:
    if not (0.0 <= theta <= 90.0):
        raise ValueError(f"elevation must lie in [0, 90] degrees, got {theta!r}")


def slant_range(theta: float, params: LinkParams) -> float:
    """Distance from ground station to satellite at elevation ``theta`` (deg), in km."""
    _check_elevation(theta)
    re = params.earth_radius
    r = re + params.orbit_altitude
    th = math.radians(theta)
    # sin(90 deg) is not exactly 1.0 in floating point; pin the zenith case
    if theta == 90.0:
        return float(params.orbit_altitude)
    return math.sqrt(r * r - (re * math.cos(th)) ** 2) - re * math.sin(th)


def fspl(distance: float, freq: float) -> float:
    """Free-space path loss in dB for ``distance`` in km and ``freq`` in GHz."""
    if distance <= 0 or freq <= 0:
        raise ValueError(f"distance and freq must be positive, got {distance!r}, {freq!r}")
    return 92.45 + 20.0 * math.log10(freq) + 20.0 * math.log10(distance)


def cn0(params: LinkParams, total_loss: float) -> float:
    """Carrier-to-noise-density ratio in dBHz given the total path loss in dB."""
    return params.eirp - total_loss + params.g_over_t + params.boltzmann_term


def snr_at(theta: float, params: LinkParams) -> float:
    """SNR in dB at elevation ``theta`` (deg)."""
    d = slant_range(theta, params)
    loss = fspl(d, params.carrier_freq) + params.extra_loss
    return cn0(params, loss) - 10.0 * math.log10(params.noise_bandwidth)


def sweep_elevations(num_steps: int, min_elevation: float = 0.0) -> np.ndarray:
    """Piecewise-linear min -> 90 -> min elevation sweep over ``num_steps`` samples."""
    if num_steps < 3:
        raise ValueError(f"num_steps must be >= 3, got {num_steps}")
    _check_elevation(min_elevation)
    mid = (num_steps - 1) / 2.0
    k = np.arange(num_steps, dtype=float)
    elev = min_elevation + (90.0 - min_elevation) * (mid - np.abs(k - mid)) / mid
    # odd step counts hit the peak exactly; clamp rounding at the ends
    return np.clip(elev, min_elevation, 90.0)


def build_overpass(params: LinkParams, num_steps: int = 49,
                   decision_interval: float = 5.0,
                   min_elevation: float = 0.0) -> OverpassProfile:
    if decision_interval <= 0:
        raise ValueError("decision_interval must be positive")
    elev = sweep_elevations(num_steps, min_elevation)
    samples = []
    for t, th in enumerate(elev):
        th = float(th)
        samples.append(OverpassSample(t, th, slant_range(th, params), snr_at(th, params)))
    return OverpassProfile(decision_interval, tuple(samples), min_elevation)


def predict_snr(profile: OverpassProfile, current_step: int) -> float:
    """Link-budget SNR forecast for the next decision step.

    The elevation at ``t + 1`` is known from the orbit, so the forecast is the
    link budget evaluated there. At the last step the final sample is returned.
    """
    nxt = min(current_step + 1, profile.num_steps - 1)
    return profile.samples[nxt].snr
