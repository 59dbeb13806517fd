"""Deterministic, counter-based random streams.

Every randomized routine in the package takes an explicit :class:`SeededRng`.
A stream is identified by ``(seed, stream_id)``; both are folded into the key
of a Philox counter-based generator, so the same pair always yields the same
sequence, independently of call history elsewhere in the program.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

_MASK64 = (1 << 64) - 1
_RES = float(2**52)


def derive_stream_id(*parts: int | str) -> int:
    """Hash an ordered tuple of labels into a 64-bit stream id.

    Used for per-trial streams, e.g. ``derive_stream_id(seed, n, trial)``.
    The hash is stable across processes and platforms (unlike ``hash()``).
    """
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        if isinstance(part, str):
            data = b"s" + part.encode()
        else:
            data = b"i" + struct.pack("<Q", int(part) & _MASK64)
        h.update(struct.pack("<I", len(data)) + data)
    return int.from_bytes(h.digest(), "little")


class SeededRng:
    """A reproducible noise stream.

    Args:
      seed: 64-bit master seed.
      stream_id: integer selecting an independent stream under ``seed``.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed}, stream_id={self.stream_id})"

    def spawn(self, *labels: int | str) -> "SeededRng":
        """Independent child stream keyed by ``(seed, stream_id, *labels)``."""
        return SeededRng(self.seed, derive_stream_id(self.stream_id, *labels))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def uniform(self, size=None):
        """Uniform draws on [0, 1)."""
        return self._gen.random(size)

    def open_uniform(self, size=None):
        """Uniform draws on the open interval (0, 1), symmetric about 1/2.

        Values lie on the grid (k + 1/2) / 2**52, so u and 1 - u are equally
        likely and neither endpoint can occur.
        """
        k = np.floor(self._gen.random(size) * _RES)
        return (k + 0.5) / _RES

    def laplace(self, scale: float, size=None):
        """Zero-mean Laplace draws by inverse CDF, one uniform per value."""
        u = self.open_uniform(size)
        return scale * laplace_quantile(u)

    def choice_index(self, probs: np.ndarray, size=None):
        """Indices drawn from a finite distribution by inverse CDF."""
        cdf = np.cumsum(probs, dtype=float)
        cdf /= cdf[-1]
        u = self._gen.random(size)
        idx = np.searchsorted(cdf, u, side="right")
        return np.minimum(idx, len(cdf) - 1)


def laplace_quantile(u):
    """Quantile function of the unit-scale, zero-mean Laplace distribution."""
    u = np.asarray(u, dtype=float)
    lower = u < 0.5
    # Evaluate both branches on safe arguments to avoid log(0) warnings.
    left = np.log(2.0 * np.where(lower, u, 0.25))
    right = -np.log(2.0 * (1.0 - np.where(lower, 0.75, u)))
    out = np.where(lower, left, right)
    return out if out.ndim else float(out)
