"""Deterministic random-stream derivation for parallelizable tasks.

Each (block, hour) or (lot, day, hour) task gets its own generator derived
from the run seed plus stable task labels, so results do not depend on task
scheduling or execution order.
"""

from __future__ import annotations

import zlib

import numpy as np


def derived_stream(seed: int, *labels: str | int) -> np.random.Generator:
    """Build an independent generator from a base seed and task labels.

    String labels are folded in via CRC32 so the stream is reproducible
    across runs and platforms.
    """
    entropy: list[int] = [int(seed)]
    for label in labels:
        if isinstance(label, str):
            entropy.append(zlib.crc32(label.encode("utf-8")))
        else:
            entropy.append(int(label))
    return np.random.default_rng(entropy)
