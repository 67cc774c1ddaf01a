"""Reproducible random streams derived from a single 64-bit seed.

Each consumer asks for a named stream; the name is hashed into the
``spawn_key`` of a :class:`numpy.random.SeedSequence` feeding a counter-based
Philox generator, so streams are independent of the order they are requested.
"""
import zlib

import numpy as np


def stream(seed: int, name: str) -> np.random.Generator:
    key = zlib.crc32(name.encode("utf-8"))
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(key,))
    return np.random.Generator(np.random.Philox(ss))
