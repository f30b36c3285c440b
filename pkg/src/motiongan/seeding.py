"""Seed splitting.

Every random stream is derived from one root seed and a tuple of keys:
``derive_seed(root, "train", 17)`` feeds ``root`` as entropy and the keys as
the spawn key of a :class:`numpy.random.SeedSequence`. String keys enter as
their CRC-32, integers as themselves. Distinct key tuples give independent
streams and the mapping is stable across platforms and Python versions.
"""
import zlib

import numpy as np


def _key(k):
    return zlib.crc32(k.encode("utf-8")) if isinstance(k, str) else int(k)


def derive_seed(root, *keys):
    ss = np.random.SeedSequence(entropy=int(root), spawn_key=tuple(_key(k) for k in keys))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return (int(hi) << 32) | int(lo)


def derive_rng(root, *keys):
    return np.random.default_rng(derive_seed(root, *keys))
