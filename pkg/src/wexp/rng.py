"""Counter-based random streams keyed by (seed, purpose, replication).

Every replication draws from its own Philox stream. The key depends on the
master seed and a purpose tag, the replication index sits in the counter,
so a replication's numbers do not depend on which worker produces them or
in which order.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StreamKey:
    key: tuple[int, int]
    counter: tuple[int, int, int, int]

    def generator(self) -> np.random.Generator:
        return np.random.Generator(
            np.random.Philox(
                key=np.array(self.key, dtype=np.uint64),
                counter=np.array(self.counter, dtype=np.uint64),
            )
        )


def _key_words(seed: int, purpose_tag: str) -> tuple[int, int]:
    digest = hashlib.blake2b(f"{int(seed)}|{purpose_tag}".encode(), digest_size=16).digest()
    return int.from_bytes(digest[:8], "little"), int.from_bytes(digest[8:], "little")


def seed_stream(seed: int, rep_index: int, purpose_tag: str) -> StreamKey:
    """Stream key for one replication; draws advance the low counter word."""
    if rep_index < 0:
        raise ValueError("rep_index must be non-negative")
    return StreamKey(_key_words(seed, purpose_tag), (0, 0, int(rep_index), 0))


def generator(seed: int, rep_index: int, purpose_tag: str) -> np.random.Generator:
    return seed_stream(seed, rep_index, purpose_tag).generator()


def normals(seed: int, rep_indices, purpose_tag: str, size: int) -> np.ndarray:
    """Standard normals, one row of length ``size`` per replication index.

    Row ``i`` equals ``generator(seed, rep_indices[i], purpose_tag)
    .standard_normal(size)``; one bit generator is re-keyed per row, which
    is cheaper than constructing a fresh one.
    """
    reps = np.atleast_1d(np.asarray(rep_indices, dtype=np.int64))
    out = np.empty((reps.size, size))
    bits = np.random.Philox(key=np.array(_key_words(seed, purpose_tag), dtype=np.uint64))
    gen = np.random.Generator(bits)
    state = bits.state
    for i, r in enumerate(reps):
        if r < 0:
            raise ValueError("rep_index must be non-negative")
        state["state"]["counter"][:] = (0, 0, int(r), 0)
        state["buffer_pos"] = 4
        state["has_uint32"] = 0
        bits.state = state
        out[i] = gen.standard_normal(size)
    return out
