"""Reproducible random streams.

Every stream is a Philox4x64-10 counter-based generator whose 128-bit key is
the first 16 bytes of SHA-256(``"<master_seed>:<stream_id>"``), with the
counter starting at zero.  Uniform doubles are built explicitly from the raw
64-bit words as ``(word >> 11) * 2**-53`` so the mapping does not depend on
NumPy's ``Generator`` implementation details.
"""
from __future__ import annotations

import hashlib

import numpy as np

RNG_ALGORITHM = "Philox4x64-10 (key = SHA-256(\"<seed>:<stream>\")[:16], counter 0)"
MASK64 = (1 << 64) - 1
_TWO_M53 = 1.0 / 9007199254740992.0


def stream_key(master_seed: int, stream_id: str) -> np.ndarray:
    digest = hashlib.sha256(f"{int(master_seed) & MASK64}:{stream_id}".encode()).digest()
    return np.frombuffer(digest[:16], dtype="<u8").astype(np.uint64)


class RngStream:
    """One named substream of a master seed."""

    def __init__(self, master_seed: int, stream_id: str):
        self.master_seed = int(master_seed) & MASK64
        self.stream_id = stream_id
        self._bitgen = np.random.Philox(key=stream_key(self.master_seed, stream_id))

    def __repr__(self):
        return f"RngStream(master_seed={self.master_seed}, stream_id={self.stream_id!r})"

    def raw(self, size=None):
        if size is None:
            return int(self._bitgen.random_raw())
        return self._bitgen.random_raw(size)

    def uniform(self, size=None):
        """Uniform variates on [0, 1) with 53 bits of resolution."""
        if size is None:
            return (self.raw() >> 11) * _TWO_M53
        n = int(np.prod(size))
        words = self._bitgen.random_raw(n) >> np.uint64(11)
        return (words.astype(np.float64) * _TWO_M53).reshape(size)

    def exponential(self, mean=1.0, size=None):
        u = self.uniform(size)
        return -mean * np.log1p(-u)

    def integers(self, n: int, size=None):
        """Integers in [0, n) by scaling a uniform."""
        u = self.uniform(size)
        if size is None:
            return min(int(u * n), n - 1)
        return np.minimum(np.floor(u * n), n - 1).astype(np.int64)

    def u64(self) -> int:
        return self.raw()


def spawn_stream(master_seed: int, stream_id: str) -> RngStream:
    return RngStream(master_seed, stream_id)


def derive_run_seed(master_seed: int, run_index: int) -> int:
    """Seed for replication ``run_index``; independent of how many runs exist."""
    return spawn_stream(master_seed, f"run:{run_index}").u64()
