"""Deterministic seed derivation.

All randomness in a run flows from one global seed. Each consumer derives
its own sub-seed from (seed, name), so adding a consumer never perturbs the
streams of existing ones.
"""

import hashlib

import numpy as np


def derive_seed(seed: int, name: str) -> int:
    """Return a 63-bit sub-seed for the named consumer."""
    digest = hashlib.sha256(f"{seed}\x1f{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


def rng_for(seed: int, name: str) -> np.random.Generator:
    """PCG64 generator keyed on the derived sub-seed."""
    return np.random.default_rng(derive_seed(seed, name))


def counter_rng_for(seed: int, name: str) -> np.random.Generator:
    """Counter-based (Philox) generator keyed on the derived sub-seed."""
    return np.random.Generator(np.random.Philox(key=derive_seed(seed, name)))
