"""Named sub-seed derivation.

A single experiment seed fans out into independent streams keyed by name:
``SeedSequence(entropy=seed, spawn_key=(crc32(name),))``. Because each stream
depends only on (seed, name), switching one noise source on or off never
shifts the draws of another.
"""
from __future__ import annotations

import zlib

import numpy as np

STREAMS = ("env", "exploration", "init", "replay", "jitter", "estimation")


def sub_seed(seed: int, name: str) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(seed), spawn_key=(zlib.crc32(name.encode()),))


def rng_for(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(sub_seed(seed, name))
