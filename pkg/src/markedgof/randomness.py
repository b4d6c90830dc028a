"""Seeded, stream-addressable random numbers.

Every stochastic routine in the package draws from a ``numpy.random.Generator``
backed by a Philox counter-based bit generator.  A stream is addressed by the
pair ``(root_seed, stream_id)``; the key is derived by hashing the pair, so any
stream can be built directly without touching the others.

Uniforms and normals are produced from raw 64-bit words by fixed transforms
(one word per variate, inverse-CDF for normals) so the number of words
consumed per draw never depends on the values drawn.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

DEFAULT_ROOT_SEED = 20190311

# stream-id blocks; replication streams live below LIMIT_BLOCK
LIMIT_BLOCK = 2**62
AUX_BLOCK = 2**61
QUADRATURE_LIMIT_BLOCK = 2**60

_MAX_SEED = 2**64 - 1


@dataclass(frozen=True)
class SeedSpec:
    """Address of one independent random stream."""

    root_seed: int = DEFAULT_ROOT_SEED
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= int(self.root_seed) <= _MAX_SEED:
            raise ValueError(f"root_seed must be a 64-bit unsigned integer, got {self.root_seed}")
        if int(self.stream_id) < 0:
            raise ValueError(f"stream_id must be non-negative, got {self.stream_id}")


def derive_stream(seed: SeedSpec | tuple[int, int]) -> np.random.Generator:
    """Return a fresh generator for ``seed``.

    The same ``SeedSpec`` always yields the same word sequence; handles are
    independent objects and must not be shared between threads.
    """
    if not isinstance(seed, SeedSpec):
        seed = SeedSpec(*seed)
    ss = np.random.SeedSequence([int(seed.root_seed), int(seed.stream_id)])
    return np.random.Generator(np.random.Philox(ss))


def words(gen: np.random.Generator, size=None):
    """Raw uniform 64-bit words."""
    return gen.bit_generator.random_raw(size)


def uniform(gen: np.random.Generator, size=None):
    """Uniform draws on the open interval (0, 1), one word each.

    The top 52 bits of each word select a cell of width 2**-52 and the draw is
    the cell midpoint, so neither endpoint can occur.
    """
    w = np.asarray(words(gen, size), dtype=np.uint64)
    u = ((w >> np.uint64(12)).astype(np.float64) + 0.5) * 2.0**-52
    if size is None:
        return float(u)
    return u


def standard_normal(gen: np.random.Generator, size=None):
    """N(0, 1) draws by inverse-CDF transform of :func:`uniform`."""
    z = ndtri(uniform(gen, size))
    if size is None:
        return float(z)
    return z


def replication_stream_id(n: int, rep: int) -> int:
    """Stream id used by the harness for replication ``rep`` at sample size ``n``.

    Streams depend on ``(n, rep)`` only, so every scenario sharing a sample
    size uses common random numbers.
    """
    if not 1 <= n < 2**27 or not 0 <= rep < 2**32:
        raise ValueError("invalid (n, rep) pair")
    return int(n) * 2**32 + int(rep)
