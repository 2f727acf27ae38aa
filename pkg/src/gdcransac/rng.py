"""Counter-based random draws used by every sampler.

Each RANSAC iteration owns an independent substream, so a hypothesis can be
regenerated from ``(seed, iteration)`` alone and batched or parallel
evaluation reproduces the sequential run exactly.

Algorithm (all arithmetic modulo 2**64)::

    mix(x)  = SplitMix64 finaliser of x + 0x9E3779B97F4A7C15
    key     = mix(seed)
    stream  = mix(key ^ iteration)
    word    = mix(stream ^ counter)
    index   = ((word >> 32) * n) >> 32          # uniform on [0, n)

``counter`` starts at 0 for every iteration and advances by one per draw,
including draws rejected because they repeat an earlier index.
"""
import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MUL1 = 0xBF58476D1CE4E5B9
MUL2 = 0x94D049BB133111EB


def mix64(x):
    """SplitMix64 step on a Python int."""
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * MUL1) & MASK64
    z = ((z ^ (z >> 27)) * MUL2) & MASK64
    return z ^ (z >> 31)


def stream_key(seed, iteration):
    return mix64(mix64(seed & MASK64) ^ (iteration & MASK64))


def bounded(word, n):
    return ((word >> 32) * n) >> 32


def draw_indices(seed, iteration, cutoffs):
    """Reference sampler: one distinct index per slot, slot j uniform on [0, cutoffs[j]).

    Plain-integer implementation; the numba and numpy kernels must agree with it.
    """
    stream = stream_key(seed, iteration)
    out = []
    counter = 0
    for c in cutoffs:
        while True:
            idx = bounded(mix64(stream ^ counter), int(c))
            counter += 1
            if idx not in out:
                break
        out.append(idx)
    return out


_U = np.uint64


def mix64_np(x):
    """Vectorised SplitMix64 over a uint64 array (wrapping arithmetic)."""
    x = np.asarray(x, dtype=np.uint64)
    z = x + _U(GOLDEN)
    z = (z ^ (z >> _U(30))) * _U(MUL1)
    z = (z ^ (z >> _U(27))) * _U(MUL2)
    return z ^ (z >> _U(31))


def stream_keys_np(seed, iterations):
    key = np.array([mix64(seed & MASK64)], dtype=np.uint64)
    return mix64_np(key ^ np.asarray(iterations, dtype=np.uint64))


def draw_indices_np(seed, iterations, cutoffs):
    """Batch version of :func:`draw_indices`; returns an int64 array (len(iterations), s)."""
    iterations = np.atleast_1d(np.asarray(iterations, dtype=np.int64))
    cutoffs = np.asarray(cutoffs, dtype=np.int64)
    streams = stream_keys_np(seed, iterations)
    b = iterations.size
    s = cutoffs.size
    out = np.empty((b, s), dtype=np.int64)
    counter = np.zeros(b, dtype=np.uint64)
    for j in range(s):
        pending = np.arange(b)
        n = _U(cutoffs[j])
        while pending.size:
            words = mix64_np(streams[pending] ^ counter[pending])
            idx = (((words >> _U(32)) * n) >> _U(32)).astype(np.int64)
            counter[pending] += _U(1)
            if j:
                dup = (out[pending, :j] == idx[:, None]).any(axis=1)
            else:
                dup = np.zeros(pending.size, dtype=bool)
            keep = ~dup
            out[pending[keep], j] = idx[keep]
            pending = pending[dup]
    return out
