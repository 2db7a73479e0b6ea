"""Deterministic seed derivation.

Every source of randomness in the toolkit draws from a seed derived here, so
that one master seed fixes corpus generation, combination sampling, fold
assignment and learner initialisation regardless of execution order or number
of worker processes.
"""

from __future__ import annotations

import hashlib

import numpy as np

_PREFIX = b"bytegrams.v1"


def derive_seed(*parts: int | str | bytes) -> int:
    """Hash the given parts into a stable non-negative 63-bit integer.

    Parts are length-prefixed before hashing so no two distinct part tuples
    collide by concatenation.
    """
    h = hashlib.sha256(_PREFIX)
    for part in parts:
        if isinstance(part, bytes):
            enc = b"b" + part
        elif isinstance(part, str):
            enc = b"s" + part.encode("utf-8")
        elif isinstance(part, (int, np.integer)):
            enc = b"i" + str(int(part)).encode("ascii")
        else:
            raise TypeError(f"unsupported seed part type: {type(part)!r}")
        h.update(len(enc).to_bytes(4, "big"))
        h.update(enc)
    return int.from_bytes(h.digest()[:8], "big") >> 1


def rng_from(*parts: int | str | bytes) -> np.random.Generator:
    """PCG64 generator seeded from derive_seed(*parts)."""
    return np.random.Generator(np.random.PCG64(derive_seed(*parts)))
