"""NumPy implementation of the round kernels.

Every function accepts a single level vector of shape ``(n,)`` or a batch of
shape ``(B, n)`` (one independent run per row, with one seed per row).
Results are bit-identical to the compiled kernels.
"""
import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB

STREAM_BEEP = 1
STREAM_FAULT_SELECT = 2
STREAM_FAULT_LEVEL = 3

V1 = 1
V2 = 2

_U30, _U27, _U31 = np.uint64(30), np.uint64(27), np.uint64(31)


def splitmix64_int(z):
    z = (z + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * _MUL1) & MASK64
    z = ((z ^ (z >> 27)) * _MUL2) & MASK64
    return z ^ (z >> 31)


def splitmix64(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + np.uint64(GOLDEN)
        z = (z ^ (z >> _U30)) * np.uint64(_MUL1)
        z = (z ^ (z >> _U27)) * np.uint64(_MUL2)
    return z ^ (z >> _U31)


def round_key(seed, stream, round_index):
    """Per-round key; a Python int for scalar seeds, a ``(B, 1)`` array otherwise."""
    if np.ndim(seed) == 0:
        k = splitmix64_int((int(seed) & MASK64) ^ ((stream * GOLDEN) & MASK64))
        return splitmix64_int(k ^ (int(round_index) & MASK64))
    seeds = np.asarray(seed, dtype=np.uint64).reshape(-1, 1)
    k = splitmix64(seeds ^ np.uint64((stream * GOLDEN) & MASK64))
    return splitmix64(k ^ np.uint64(int(round_index) & MASK64))


def vertex_hashes(seed, stream, round_index, n):
    key = round_key(seed, stream, round_index)
    if isinstance(key, int):
        key = np.uint64(key)
    return splitmix64(key ^ np.arange(n, dtype=np.uint64))


def neighbor_count(indptr, indices, x):
    """``sum_{u in N(v)} x[u]`` for every ``v`` (along the last axis)."""
    vals = np.asarray(x)[..., indices].astype(np.int64)
    c = np.zeros(vals.shape[:-1] + (vals.shape[-1] + 1,), dtype=np.int64)
    np.cumsum(vals, axis=-1, out=c[..., 1:])
    return c[..., indptr[1:]] - c[..., indptr[:-1]]


def beep_draws(levels, lmax, variant, seed, round_index):
    n = levels.shape[-1]
    h = vertex_hashes(seed, STREAM_BEEP, round_index, n)
    interior = (levels > 0) & (levels < lmax)
    shift = np.where(interior, 64 - levels, 1).astype(np.uint64)
    solo = interior & ((h >> shift) == 0)
    if variant == V1:
        return solo | (levels <= 0), np.zeros(levels.shape, dtype=bool)
    return solo, levels == 0


def step(indptr, indices, levels, lmax, variant, seed, round_index):
    """One synchronous round. Returns ``(new_levels, b1, h1, b2, h2)``."""
    levels = np.asarray(levels, dtype=np.int64)
    b1, b2 = beep_draws(levels, lmax, variant, seed, round_index)
    h1 = neighbor_count(indptr, indices, b1) > 0
    up = np.minimum(levels + 1, lmax)
    down = np.maximum(levels - 1, 1)
    if variant == V1:
        new = np.where(h1, up, np.where(b1, -lmax, down))
        h2 = np.zeros_like(h1)
    else:
        h2 = neighbor_count(indptr, indices, b2) > 0
        quiet = np.where(b2, levels, down)
        new = np.where(h2, lmax, np.where(h1, up, np.where(b1, 0, quiet)))
    return new.astype(np.int64), b1, h1, b2, h2


def stable_masks(indptr, indices, levels, lmax, variant):
    """``(mis, stable)`` boolean masks of the structural stability predicate."""
    levels = np.asarray(levels, dtype=np.int64)
    core = levels == (-lmax if variant == V1 else 0)
    below_max = neighbor_count(indptr, indices, levels != lmax)
    mis = core & (below_max == 0)
    stable = mis | (neighbor_count(indptr, indices, mis) > 0)
    return mis, stable
