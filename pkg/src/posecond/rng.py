"""Portable counter-based random numbers.

Every stochastic quantity in the package (shake jitter, VAE initialisation,
reparameterisation noise) comes from SplitMix64 so that a given seed yields
the same bits on every platform and in every language:

    state_i = seed + (i + 1) * 0x9E3779B97F4A7C15          (mod 2**64)
    z = (state_i ^ (state_i >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    out_i = z ^ (z >> 31)

Uniforms on [0, 1) take the top 53 bits: ``(out >> 11) * 2**-53``.
Standard normals use the basic Box-Muller transform on consecutive uniform
pairs ``(u1, u2)``: ``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)``, then
``... * sin(2 pi u2)``, interleaved.
"""

import numpy as np

GOLDEN_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def splitmix64(seed, n, offset=0):
    """Return ``n`` raw 64-bit outputs starting at counter ``offset``."""
    seed = np.uint64(int(seed) & _MASK64)
    idx = np.arange(offset + 1, offset + n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = seed + idx * GOLDEN_GAMMA
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def uniform(seed, n, offset=0):
    return (splitmix64(seed, n, offset) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def uniform_range(seed, shape, low, high, offset=0):
    n = int(np.prod(shape, dtype=np.int64))
    return low + (high - low) * uniform(seed, n, offset).reshape(shape)


def standard_normal(seed, shape, offset=0):
    """Box-Muller normals; ``offset`` counts normals, not raw draws."""
    n = int(np.prod(shape, dtype=np.int64))
    pairs = (n + 1) // 2
    start = 2 * (offset // 2)
    skip = offset - start
    u = uniform(seed, 2 * (pairs + skip), offset=start)
    u1, u2 = u[0::2], u[1::2]
    r = np.sqrt(-2.0 * np.log1p(-u1))
    out = np.empty(2 * u1.size)
    out[0::2] = r * np.cos(2.0 * np.pi * u2)
    out[1::2] = r * np.sin(2.0 * np.pi * u2)
    return out[skip:skip + n].reshape(shape)


def derive_seed(seed, *keys):
    """Mix extra integer keys into a seed (one SplitMix64 round per key)."""
    s = int(seed) & _MASK64
    for k in keys:
        s = int(splitmix64(s ^ (int(k) & _MASK64), 1)[0])
    return s
