"""Seedable, role-separated random streams.

Every stochastic component of a run draws from its own counter-based
Philox stream keyed by (seed, role, index).  Splitting by role lets the
data-allocation randomness be replayed into the single-machine oracle
without touching any other stream, which is what makes the equivalence
harnesses exact.
"""

from __future__ import annotations

import numpy as np

ROLES = {
    "partition": 1,  # random even partition of the index set
    "sequence": 2,   # branch draws turning the permutation into r_1..r_Q
    "svrg": 3,       # uniform index sampling in the single-machine oracle
    "data": 4,       # synthetic dataset generation
    "features": 5,   # random Fourier frequencies
    "init": 6,       # initial iterates and miscellaneous draws
}


def stream(seed: int, role: str, index: int = 0) -> np.random.Generator:
    """Generator for (seed, role, index); same triple, same stream."""
    if role not in ROLES:
        raise ValueError(f"unknown stream role {role!r}; known: {sorted(ROLES)}")
    if seed < 0 or index < 0:
        raise ValueError("seed and index must be nonnegative")
    key = np.array(
        [np.uint64(seed), (np.uint64(ROLES[role]) << np.uint64(32)) | np.uint64(index)],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))
