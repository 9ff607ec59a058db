"""Sub-seed derivation so every stochastic call is reproducible in isolation."""

import hashlib

import numpy as np


def derive_seed(master: int, stage: str, index: int = 0) -> int:
    """64-bit seed from ``(master, stage, index)``; stable across platforms."""
    digest = hashlib.sha256(f"{int(master)}:{stage}:{int(index)}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(master: int, stage: str, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, stage, index))
