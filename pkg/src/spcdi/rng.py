"""Counter-based random streams.

Every random quantity in the package is drawn from Philox4x64-10 (the
``numpy.random.Philox`` bit generator).  A stream is addressed by
``(seed, purpose, index)``:

* the 128-bit Philox key is ``seed | purpose << 64``;
* the 256-bit counter starts at ``index << 192``.

so that e.g. the noise for pattern ``k`` can be regenerated without
touching patterns ``0..k-1``.  Variates are derived from the raw 64-bit
words with fixed formulas (53-bit uniforms, Box-Muller normals, LSB-first
bits) rather than through ``numpy.random.Generator`` methods, which keeps
the mapping from words to values fully specified.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

# Purpose tags. Changing any of these changes every generated dataset.
PATTERNS = 1
NOISE = 2
INIT = 3
SHUFFLE = 4
TRIALS = 5

_TWO_PI = 2.0 * np.pi


def stream(seed: int, purpose: int, index: int = 0) -> np.random.Philox:
    """Return a fresh Philox bit generator for ``(seed, purpose, index)``."""
    if index < 0:
        raise ValueError(f"stream index must be non-negative, got {index}")
    key = (int(seed) & MASK64) | ((int(purpose) & MASK64) << 64)
    return np.random.Philox(key=key, counter=int(index) << 192)


def raw(bitgen: np.random.Philox, count: int) -> np.ndarray:
    return np.asarray(bitgen.random_raw(count), dtype=np.uint64)


def uniform(bitgen: np.random.Philox, size) -> np.ndarray:
    """Uniform doubles on [0, 1) from the top 53 bits of each word."""
    shape = (size,) if np.isscalar(size) else tuple(size)
    count = int(np.prod(shape, dtype=np.int64))
    words = raw(bitgen, count)
    return ((words >> np.uint64(11)).astype(np.float64) * 2.0**-53).reshape(shape)


def normal(bitgen: np.random.Philox, size) -> np.ndarray:
    """Standard normals by Box-Muller; consumes two words per variate."""
    shape = (size,) if np.isscalar(size) else tuple(size)
    count = int(np.prod(shape, dtype=np.int64))
    u = uniform(bitgen, 2 * count)
    u1, u2 = u[0::2], u[1::2]
    # 1 - u1 lies in (0, 1], so the log is finite
    z = np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(_TWO_PI * u2)
    return z.reshape(shape)


def bits(bitgen: np.random.Philox, size) -> np.ndarray:
    """Fair coin flips as uint8, unpacked least-significant bit first."""
    shape = (size,) if np.isscalar(size) else tuple(size)
    count = int(np.prod(shape, dtype=np.int64))
    words = raw(bitgen, -(-count // 64))
    flat = np.unpackbits(words.astype("<u8").view(np.uint8), bitorder="little")
    return flat[:count].reshape(shape)


def permutation(bitgen: np.random.Philox, n: int) -> np.ndarray:
    """Random permutation of ``range(n)`` (stable argsort of uniform keys)."""
    return np.argsort(uniform(bitgen, n), kind="stable")


def derive_seed(root: int, *path: int) -> int:
    """Deterministic 64-bit child seed of ``root`` along an integer path."""
    seed = int(root) & MASK64
    for i, step in enumerate(path):
        word = raw(stream(seed, TRIALS, (int(step) << 8) | i), 1)[0]
        seed = int(word)
    return seed
