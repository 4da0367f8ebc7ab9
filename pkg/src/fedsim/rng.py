"""Deterministic RNG streams derived from one global run seed.

Every stochastic component draws from its own stream, keyed by purpose and
(usually) client index and protocol iteration.  This keeps model content
independent of message timing: re-running with the same seed reproduces all
samples, noise, secrets, latencies and jitter regardless of host speed.
"""

import numpy as np

# Stream identifiers.  Values are arbitrary but frozen: changing them changes
# every seeded run.
SPLIT = 1
SAMPLE = 2
NOISE = 3
DH_SECRET = 4
LATENCY = 5
JITTER = 6
SYNTH = 7


def stream(seed: int, *key: int) -> np.random.Generator:
    """Return an independent generator for (seed, *key)."""
    return np.random.default_rng([int(seed), *[int(k) for k in key]])
