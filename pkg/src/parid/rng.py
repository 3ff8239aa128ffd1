"""Per-replication random streams.

Every replication ``r`` of an experiment with master seed ``s`` owns the
stream family ``(s, r)``.  Inside a family, independent substreams are
used for the weight draws, the endpoint draws and the fitness draws, so a
coupled run can share the weight stream between its two graphs.

Streams are Philox (counter-based) bit generators keyed through
:class:`numpy.random.SeedSequence` with ``spawn_key=(rep, substream)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

WEIGHTS = 0
ENDPOINTS = 1
FITNESS = 2

_SUBSTREAM_NAMES = {WEIGHTS: "weights", ENDPOINTS: "endpoints", FITNESS: "fitness"}

MAX_SEED = 2**64 - 1


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def stream(seed: int, rep: int = 0, substream: int = ENDPOINTS) -> np.random.Generator:
    """Return the generator for ``(seed, rep, substream)``."""
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=(int(rep), int(substream)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class Streams:
    seed: int
    rep: int
    weights: np.random.Generator
    endpoints: np.random.Generator
    fitness: np.random.Generator


def streams(seed: int, rep: int = 0) -> Streams:
    return Streams(
        seed=check_seed(seed),
        rep=int(rep),
        weights=stream(seed, rep, WEIGHTS),
        endpoints=stream(seed, rep, ENDPOINTS),
        fitness=stream(seed, rep, FITNESS),
    )


def seed_material(seed: int, rep: int) -> dict:
    """Everything needed to replay replication ``rep`` on its own."""
    return {
        "entropy": check_seed(seed),
        "rep": int(rep),
        "bit_generator": "Philox",
        "spawn_keys": {name: [int(rep), sub] for sub, name in _SUBSTREAM_NAMES.items()},
    }
