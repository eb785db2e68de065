"""Reproducible random-number streams.

Each run derives independent counter-based Philox streams from a single
integer seed, one per component, so that byte-identical outputs only
depend on (config, seed) and never on execution order:

    problem  - training-data generation,
    stream   - latent gradient-process simulation,
    batch    - mini-batch index draws.
"""

from __future__ import annotations

import numpy as np

COMPONENT_IDS = {"problem": 0, "stream": 1, "batch": 2}

__all__ = ["COMPONENT_IDS", "component_rng"]


def component_rng(seed: int, component: str) -> np.random.Generator:
    """A Philox generator for one named component of a seeded run."""
    try:
        key = COMPONENT_IDS[component]
    except KeyError:
        raise ValueError(f"unknown RNG component {component!r}") from None
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(key,))
    return np.random.Generator(np.random.Philox(ss))
