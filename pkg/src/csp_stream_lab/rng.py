"""Seed tree built on counter-based Philox streams.

A stream is addressed by ``(master_seed, *path)``. Each path component is an
integer or a string (strings are mapped through CRC-32), and the tuple becomes
the ``spawn_key`` of a :class:`numpy.random.SeedSequence`. Trial ``i`` of an
experiment therefore lives at ``(seed, experiment, i)`` and never depends on
how many other trials were drawn.
"""

from __future__ import annotations

import zlib

import numpy as np


def path_key(*path: int | str) -> tuple[int, ...]:
    key = []
    for part in path:
        if isinstance(part, str):
            key.append(zlib.crc32(part.encode("utf-8")))
        else:
            key.append(int(part))
    return tuple(key)


def stream(seed: int, *path: int | str) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=path_key(*path))
    return np.random.Generator(np.random.Philox(ss))


def as_generator(rng: np.random.Generator | int | None) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return stream(0 if rng is None else int(rng))


def describe(seed: int, *path: int | str) -> dict:
    """JSON-friendly record of where a stream came from."""
    return {"seed": int(seed), "path": list(path), "spawn_key": list(path_key(*path))}
