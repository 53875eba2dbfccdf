"""Counter-based random streams.

Every random draw in the simulator comes from a stream identified by the
root seed and a tuple of integer keys (purpose tag, entry block, trial
index, ...). Streams are independent of evaluation order, so trials can
run in any order or in parallel and still reproduce.
"""
from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode())
    return int(part)


def stream(seed: int, *keys) -> np.random.Generator:
    """Generator for the stream ``(seed, *keys)``; string keys are hashed to integers."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def draw_iid(rng: np.random.Generator, p: np.ndarray, shape) -> np.ndarray:
    """I.i.d. symbols from ``p`` by inverse CDF."""
    cdf = np.cumsum(np.asarray(p, dtype=float))
    cdf[-1] = 1.0
    return np.searchsorted(cdf, rng.random(shape), side="right").astype(np.int64)


def through_kernel(rows: np.ndarray, inputs: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Pass symbols through a kernel by inverse CDF with supplied uniforms.

    Reusing the same uniforms for different inputs couples the outputs
    (common random numbers), which is how competing encoder inputs are
    compared on the same noise realization.
    """
    cdf = np.cumsum(np.asarray(rows, dtype=float), axis=1)
    cdf[:, -1] = 1.0
    c = cdf[inputs]  # [..., n, |out|]
    return (uniforms[..., None] >= c).sum(axis=-1).astype(np.int64)
