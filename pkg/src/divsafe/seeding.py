"""Splittable seed derivation.

Every random draw in the package is keyed by an explicit integer seed. Child
seeds are derived by hashing the parent seed together with a key path, so the
result does not depend on call order or on how work is split across workers.
"""

import hashlib

import numpy as np


def derive_seed(seed: int, *keys) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(seed)).encode())
    for key in keys:
        h.update(b"\x1f")
        h.update(str(key).encode())
    return int.from_bytes(h.digest(), "little") & ((1 << 63) - 1)


def rng(seed: int, *keys) -> np.random.Generator:
    if keys:
        seed = derive_seed(seed, *keys)
    return np.random.default_rng(int(seed))
