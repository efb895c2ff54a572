"""Deterministic random streams.

Every run owns a single ``numpy.random.Generator`` seeded from a 64-bit
integer; equal seeds replay bit-identical trajectories. Per-(model, run)
seeds are derived by hashing so streams are independent without any global
RNG state.
"""

import hashlib

import numpy as np

GpRng = np.random.Generator

_MASK64 = (1 << 64) - 1


def make_rng(seed: int) -> GpRng:
    """Create the PCG64 stream for one run."""
    return np.random.Generator(np.random.PCG64(seed & _MASK64))


def derive_seed(base_seed: int, model_name: str, run_index: int) -> int:
    """Stable per-(model, run) seed: base_seed XOR sha256(model, run)."""
    digest = hashlib.sha256(f"{model_name}\x1f{run_index}".encode()).digest()
    return (base_seed ^ int.from_bytes(digest[:8], "little")) & _MASK64
