"""Deterministic, splittable random streams.

A seed is a non-negative integer or a tuple ``(master, k1, k2, ...)`` of
non-negative integers and string tags.  Appending parts with :func:`child`
names an independent sub-stream.  Every stream is a Philox (counter-based)
generator keyed through :class:`numpy.random.SeedSequence` by the whole tuple,
so a draw depends only on that tuple, never on call order or thread.
"""
from __future__ import annotations

import zlib
from typing import Union

import numpy as np

Seed = Union[int, tuple]


def _part(p) -> int:
    if isinstance(p, str):
        return zlib.crc32(p.encode("utf-8"))
    if isinstance(p, (bool, np.bool_)):
        raise TypeError("boolean is not a valid seed part")
    if isinstance(p, (int, np.integer)):
        if p < 0:
            raise ValueError(f"seed parts must be non-negative, got {p}")
        return int(p)
    raise TypeError(f"invalid seed part {p!r}")


def as_seed(seed: Seed) -> tuple:
    """Normalise ``seed`` to a tuple of non-negative integers."""
    if isinstance(seed, tuple):
        if not seed:
            raise ValueError("empty seed tuple")
        return tuple(_part(p) for p in seed)
    return (_part(seed),)


def child(seed: Seed, *parts) -> tuple:
    """Seed of the sub-stream ``parts`` below ``seed``."""
    return as_seed(seed) + tuple(_part(p) for p in parts)


def generator(seed: Seed) -> np.random.Generator:
    s = as_seed(seed)
    ss = np.random.SeedSequence(entropy=s[0], spawn_key=s[1:])
    return np.random.Generator(np.random.Philox(ss))
