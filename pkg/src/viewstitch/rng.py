"""Deterministic, order-independent random streams.

Every draw in this package comes from a generator keyed by
``(seed, purpose, *indices)`` via numpy's SeedSequence spawn keys. A stream
depends only on its key, never on evaluation order, which is what makes
parallel and sequential window execution bit-identical and lets a run be
reproduced from its seed alone.
"""

from __future__ import annotations

import numpy as np

# Purpose tags. These values are part of the determinism contract: changing
# them changes every sampled sequence.
INIT = 0            # initial pure-noise sequence
STEP_NOISE = 1      # per-step stochasticity noise for the whole sequence
PADDING = 2         # pure-noise values for virtual padding slots
PADDING_STEP = 3    # stochasticity noise for padding slots
GUIDANCE = 4        # fresh noise for the noise-replaced guidance branch
SCENE = 5           # scene sampling in the analytic world
STABILIZE = 6       # history re-noising in the autoregressive sampler
RENOISE = 7         # outer-loop renoising in the synchronization sampler
TARGET_INIT = 8     # per-step target initialisation in sliding-window samplers


def stream(seed: int, purpose: int, *key: int) -> np.random.Generator:
    """Generator keyed by (seed, purpose, *key)."""
    entropy = int(seed) % (1 << 63)
    spawn = tuple(int(k) % (1 << 31) for k in (purpose, *key))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy, spawn_key=spawn)))


def normal(shape, seed: int, purpose: int, *key: int) -> np.ndarray:
    """Standard-normal draw from the keyed stream."""
    return stream(seed, purpose, *key).standard_normal(shape)
