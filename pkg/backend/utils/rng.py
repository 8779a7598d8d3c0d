"""
Random substream derivation.

Every stream is a PCG64 generator seeded from
``SeedSequence(entropy=seed, spawn_key=path)`` where ``path`` is

    (n, rate_permille, replicate, STAGE_POPULATION)
    (n, rate_permille, replicate, STAGE_RESPONSE)
    (n, rate_permille, replicate, STAGE_IMPUTATION, method_tag)

Population and response paths carry no method tag, so every imputation method
in a cell sees the same samples. Inside ``multiple_impute`` the imputation
generator is split with ``Generator.spawn`` into one child per imputation k.
Streams depend only on the path, never on which worker evaluates it.
"""

from typing import Tuple

import numpy as np

STAGE_POPULATION = 0
STAGE_RESPONSE = 1
STAGE_IMPUTATION = 2


def rate_permille(rate: float) -> int:
    return int(round(rate * 1000))


def seed_path(n: int, rate: float, replicate: int, stage: int, *extra: int) -> Tuple[int, ...]:
    return (int(n), rate_permille(rate), int(replicate), int(stage)) + tuple(int(e) for e in extra)


def stream(seed: int, path: Tuple[int, ...]) -> np.random.Generator:
    """Independent generator for a substream path"""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=int(seed), spawn_key=path)))
