"""Deterministic fan-out of one master seed into named substreams.

Every source of randomness in a run is seeded from the master seed through
a named substream, so components can be tested in isolation and whole runs
replay byte-identically.
"""
from __future__ import annotations

import hashlib

import numpy as np

U64_MASK = (1 << 64) - 1


def derive_seed(master_seed: int, name: str) -> int:
    """64-bit seed for the substream ``name`` of ``master_seed``."""
    payload = f"{master_seed & U64_MASK}:{name}".encode("utf-8")
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "big")


def substream(master_seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, name))


def rng_from(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed & U64_MASK)


def stable_hash(*parts: object) -> int:
    """Order-sensitive 64-bit hash of string-convertible parts.

    Used where a pure function of several inputs must pick deterministically
    (e.g. the scripted mock's response-pool draw). Unlike ``hash()``, stable
    across processes.
    """
    joined = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(joined, digest_size=8).digest(), "big")
