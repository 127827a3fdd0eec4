"""Deterministic named random streams derived from one master seed.

Every source of randomness in a run (parameter init, data generation,
style jitter, fusion noise) pulls from its own stream so that adding
draws to one stage never shifts another stage's sequence. Stream seeds
are derived by hashing, not by Python's salted ``hash``, so reruns are
reproducible across processes.
"""

import hashlib

import numpy as np


def stream_seed(master_seed: int, name: str) -> int:
    """Derive a 64-bit seed for the named stream from the master seed."""
    digest = hashlib.sha256(f"{master_seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def stream_rng(master_seed: int, name: str) -> np.random.Generator:
    """A fresh generator for the named stream."""
    return np.random.default_rng(stream_seed(master_seed, name))
