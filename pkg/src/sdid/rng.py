"""Counter-based random streams.

Every stochastic unit of work (a bootstrap replicate, a Monte Carlo rep)
gets its own Philox generator keyed by a hash of ``(seed, domain, index)``.
Streams never depend on how work is scheduled, so results are identical for
any worker count or execution order.
"""

from __future__ import annotations

import os

import numpy as np

# Domain tags keep bootstrap and simulation streams from colliding.
BOOTSTRAP = 1
SIMULATION = 2
SIM_BOOTSTRAP = 3

_MASK64 = (1 << 64) - 1


def _entropy(seed: int) -> int:
    # SeedSequence rejects negative entropy
    return int(seed) & _MASK64


def stream(seed: int, domain: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(_entropy(seed), spawn_key=(domain, index))
    key = ss.generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(seed: int, domain: int, index: int) -> int:
    """A 63-bit child seed, for handing to functions that take an integer seed."""
    ss = np.random.SeedSequence(_entropy(seed), spawn_key=(domain, index))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def resolve_workers(workers: int | None = None) -> int:
    """Explicit argument, else ``SDID_THREADS``, else 1."""
    if workers is None:
        env = os.environ.get("SDID_THREADS", "").strip()
        workers = int(env) if env else 1
    return max(1, int(workers))
