"""Seeded random streams"""

from typing import Sequence, Union

import numpy as np

SeedLike = Union[int, Sequence[int]]


def make_rng(seed: SeedLike) -> np.random.Generator:
    """Counter-based generator; identical streams on every platform for a seed"""
    return np.random.Generator(np.random.Philox(seed))


def child_seed(seed: int, *keys: int) -> list:
    """Seed for an independent sub-stream (per object, per restart, per scene)"""
    return [int(seed), *[int(k) for k in keys]]
