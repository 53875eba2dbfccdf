"""Random codebooks and the block coding rules built on them.

Indices ``m`` are 1-based, so the fallback index is ``1``. Codebook
entries are generated in blocks of ``BLOCK`` from their own random stream,
so a codebook's first entries do not depend on its size.

The decoder's index law ``P(m_hat | x^n)`` is computed exactly by
enumerating all channel outputs when ``|Y|^n <= EXACT_OUTPUTS``, and
otherwise estimated from output samples driven by common random numbers,
with a reported standard error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..prob import JointDistribution, Kernel, ValidationError
from ..scenarios.instance import ResourceLimitError
from .rng import draw_iid, stream, through_kernel
from .types import all_sequences, joint_counts, within

MAX_ENTRIES = 1 << 20
BLOCK = 1024
EXACT_OUTPUTS = 10 ** 6
EXHAUSTIVE_INPUTS = 4096  # exhaustive strategic search up to n = 12 binary
MAX_CANDIDATES = 200_000
MC_SAMPLES = 4096
TIE_TOL = 1e-12


def entry_count(rate: float, n: int) -> int:
    """``ceil(2^(n R))``, with ``n R`` snapped to an integer when it is one up to rounding."""
    if rate < 0 or n < 1:
        raise ValidationError("rate must be >= 0 and n >= 1")
    e = n * rate
    if abs(e - round(e)) < 1e-9:
        return 1 << int(round(e))
    return math.ceil(2.0 ** e)


@dataclass(frozen=True, eq=False)
class Codebook:
    rate: float
    n: int
    seed: int
    p_w: np.ndarray
    p_x: np.ndarray
    w: np.ndarray  # [size, n]
    x: np.ndarray  # [size, n]

    @property
    def size(self) -> int:
        return self.w.shape[0]

    def entry(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        return self.w[m - 1], self.x[m - 1]


def generate_codebook(p_w, p_x, rate: float, n: int, seed: int, max_entries: int = MAX_ENTRIES) -> Codebook:
    """Entries ``(w^n(m), x^n(m))`` drawn i.i.d. from ``P_W`` and ``P_X``, independently."""
    p_w = np.asarray(p_w, dtype=float)
    p_x = np.asarray(p_x, dtype=float)
    size = entry_count(rate, n)
    if size > max_entries:
        raise ResourceLimitError(f"codebook would hold {size} entries (cap {max_entries}); reduce n or R")
    w = np.empty((size, n), dtype=np.int64)
    x = np.empty((size, n), dtype=np.int64)
    for blk in range(0, size, BLOCK):
        rng = stream(seed, "codebook", blk // BLOCK)
        rows = min(BLOCK, size - blk)
        w[blk:blk + rows] = draw_iid(rng, p_w, (BLOCK, n))[:rows]
        x[blk:blk + rows] = draw_iid(rng, p_x, (BLOCK, n))[:rows]
    for arr in (w, x, p_w, p_x):
        arr.setflags(write=False)
    return Codebook(float(rate), int(n), int(seed), p_w, p_x, w, x)


def shannon_encode(cb: Codebook, u, q_uw, delta: float) -> int:
    """Smallest ``m`` with ``(u^n, w^n(m))`` in ``T_delta(Q_UW)``, else 1."""
    u = np.asarray(u, dtype=np.int64)
    q = np.asarray(q_uw, dtype=float)
    if u.size != cb.n:
        raise ValidationError(f"source sequence has length {u.size}, codebook has n = {cb.n}")
    types = joint_counts(u[None, :], cb.w, q.shape[0], q.shape[1]) / cb.n
    hits = np.flatnonzero(within(types, q, delta))
    return int(hits[0]) + 1 if hits.size else 1


def _decode_batch(cb: Codebook, ys: np.ndarray, ref: np.ndarray, delta: float) -> np.ndarray:
    # Unique jointly typical index, else 1 (two or more typical entries count as "otherwise").
    kx, ky = ref.shape
    out = np.empty(len(ys), dtype=np.int64)
    step = max(1, 2_000_000 // max(1, cb.size * cb.n))
    for s in range(0, len(ys), step):
        y = ys[s:s + step]
        types = joint_counts(cb.x[None, :, :], y[:, None, :], kx, ky) / cb.n  # [B, size, kx, ky]
        typ = within(types, ref, delta)
        count = typ.sum(axis=1)
        out[s:s + step] = np.where(count == 1, typ.argmax(axis=1) + 1, 1)
    return out


def typicality_decode(cb: Codebook, y, p_x, channel, delta: float) -> int:
    """Unique ``m`` with ``(x^n(m), y^n)`` in ``T_delta(P_X T)``, else 1."""
    y = np.asarray(y, dtype=np.int64)
    if y.size != cb.n:
        raise ValidationError(f"channel output has length {y.size}, codebook has n = {cb.n}")
    ref = np.asarray(p_x, dtype=float)[:, None] * np.asarray(channel, dtype=float)
    return int(_decode_batch(cb, y[None, :], ref, delta)[0])


def draw_reconstruction(cb: Codebook, m_hat: int, v_given_w, rng: np.random.Generator) -> np.ndarray:
    """``V^n`` drawn i.i.d. from ``P_{V|W}`` along ``w^n(m_hat)``."""
    return through_kernel(np.asarray(v_given_w, dtype=float), cb.w[m_hat - 1], rng.random(cb.n))


def _log(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(p)


@dataclass(frozen=True)
class IndexLaw:
    """``P(m_hat | x^n)`` per candidate input; ``se`` is zero when exact."""

    probs: np.ndarray  # [candidates, size]
    se: np.ndarray
    exact: bool
    samples: int


class _IndexDecoder:
    """Shared machinery for decoders that map ``y^n`` to an index and then draw ``V^n``."""

    codebook: Codebook
    channel: np.ndarray
    v_given_w: np.ndarray

    def decode(self, ys: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def n(self) -> int:
        return self.codebook.n

    def sample(self, y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        m_hat = int(self.decode(np.asarray(y)[None, :])[0])
        return draw_reconstruction(self.codebook, m_hat, self.v_given_w, rng)

    def table(self) -> np.ndarray:
        """``P(v^n | y^n)`` over all output and reconstruction sequences."""
        ky, kv = self.channel.shape[1], self.v_given_w.shape[1]
        ys = all_sequences(ky, self.n)
        vs = all_sequences(kv, self.n)
        w = self.codebook.w[self._all_decoded() - 1]  # [|Y|^n, n]
        return np.exp(_log(self.v_given_w)[w[:, None, :], vs[None, :, :]].sum(axis=-1))

    def _all_decoded(self) -> np.ndarray:
        # Decoded index of every output sequence, computed once.
        if getattr(self, "_decoded", None) is None:
            self._decoded = self.decode(all_sequences(self.channel.shape[1], self.n))
        return self._decoded

    def index_law(self, xs: np.ndarray, samples: int = MC_SAMPLES, seed: int = 0,
                  exact_limit: int = EXACT_OUTPUTS) -> IndexLaw:
        xs = np.atleast_2d(np.asarray(xs, dtype=np.int64))
        ky, size = self.channel.shape[1], self.codebook.size
        if ky ** self.n <= exact_limit:
            ys = all_sequences(ky, self.n)
            onehot = np.zeros((len(ys), size))
            onehot[np.arange(len(ys)), self._all_decoded() - 1] = 1.0
            logs = _log(self.channel)
            probs = np.empty((len(xs), size))
            step = max(1, 4_000_000 // (len(ys) * self.n))
            for s in range(0, len(xs), step):
                probs[s:s + step] = np.exp(logs[xs[s:s + step, None, :], ys[None, :, :]].sum(axis=-1)) @ onehot
            return IndexLaw(probs, np.zeros_like(probs), True, 0)
        uniforms = stream(seed, "index-law").random((samples, self.n))
        probs = np.empty((len(xs), size))
        for i, x in enumerate(xs):
            ys = through_kernel(self.channel, np.broadcast_to(x, (samples, self.n)), uniforms)
            probs[i] = np.bincount(self.decode(ys) - 1, minlength=size) / samples
        return IndexLaw(probs, np.sqrt(probs * (1 - probs) / samples), False, samples)


class TypicalityDecoder(_IndexDecoder):
    """Joint-typicality channel decoder followed by ``V^n`` drawn along ``w^n(m_hat)``."""

    def __init__(self, codebook: Codebook, channel, delta: float, v_given_w, p_x=None):
        self.codebook = codebook
        self.channel = Kernel(np.asarray(channel, dtype=float)).rows
        self.v_given_w = Kernel(np.asarray(v_given_w, dtype=float)).rows
        self.p_x = codebook.p_x if p_x is None else np.asarray(p_x, dtype=float)
        self.delta = float(delta)
        self.ref = self.p_x[:, None] * self.channel

    def decode(self, ys: np.ndarray) -> np.ndarray:
        return _decode_batch(self.codebook, np.atleast_2d(ys), self.ref, self.delta)


class ConstantIndexDecoder(_IndexDecoder):
    """Ignores the channel output and always decodes ``index``."""

    def __init__(self, codebook: Codebook, channel, index: int, v_given_w):
        self.codebook = codebook
        self.channel = Kernel(np.asarray(channel, dtype=float)).rows
        self.v_given_w = Kernel(np.asarray(v_given_w, dtype=float)).rows
        self.index = int(index)

    def decode(self, ys: np.ndarray) -> np.ndarray:
        return np.full(len(np.atleast_2d(ys)), self.index, dtype=np.int64)


def entry_costs(cb: Codebook, u, v_given_w, d_e) -> np.ndarray:
    """``sum_{u,w} Q_m(u,w) sum_v P(v|w) d_e(u,v)`` for every entry ``m``."""
    g = np.asarray(d_e, dtype=float) @ np.asarray(v_given_w, dtype=float).T  # [u, w]
    u = np.asarray(u, dtype=np.int64)
    return g[u[None, :], cb.w].mean(axis=1)


@dataclass(frozen=True)
class StrategicChoice:
    x: np.ndarray
    objective: float
    se: float
    search_space: str
    candidates: int
    exact: bool


def candidate_inputs(cb: Codebook, k_x: int, search: str = "auto",
                     max_candidates: int = MAX_CANDIDATES) -> tuple[np.ndarray, str]:
    """Input sequences searched by the strategic encoder, and the name of the search space."""
    if search == "auto":
        search = "exhaustive" if k_x ** cb.n <= EXHAUSTIVE_INPUTS else "codebook+flips"
    if search == "exhaustive":
        if k_x ** cb.n > max_candidates:
            raise ResourceLimitError(f"exhaustive search over {k_x}^{cb.n} inputs exceeds the cap of {max_candidates}")
        return all_sequences(k_x, cb.n), search
    if search != "codebook+flips":
        raise ValidationError(f"unknown search space {search!r}")
    total = cb.size * (1 + cb.n * (k_x - 1))
    if total > max_candidates:
        raise ResourceLimitError(f"{total} codebook+flips candidates exceed the cap of {max_candidates}")
    out = [cb.x]
    for t in range(cb.n):
        for shift in range(1, k_x):
            flipped = cb.x.copy()
            flipped[:, t] = (flipped[:, t] + shift) % k_x
            out.append(flipped)
    return np.concatenate(out), search


def strategic_encoder(cb: Codebook, u, decoder: _IndexDecoder, d_e, search: str = "auto",
                      samples: int = MC_SAMPLES, seed: int = 0,
                      max_candidates: int = MAX_CANDIDATES) -> StrategicChoice:
    """Encoder best response: the input minimizing the expected ``d_e`` of the decoder's reply.

    Ties are broken toward the first candidate (lexicographic for the
    exhaustive search).
    """
    u = np.asarray(u, dtype=np.int64)
    if u.size != cb.n:
        raise ValidationError(f"source sequence has length {u.size}, codebook has n = {cb.n}")
    xs, space = candidate_inputs(cb, decoder.channel.shape[0], search, max_candidates)
    costs = entry_costs(cb, u, decoder.v_given_w, d_e)
    law = decoder.index_law(xs, samples=samples, seed=seed)
    obj = law.probs @ costs
    best = int(np.flatnonzero(obj <= obj.min() + TIE_TOL)[0])
    if law.exact:
        se = 0.0
    else:
        # Per-sample objective is the cost of the decoded entry.
        mean_sq = law.probs[best] @ costs ** 2
        se = float(math.sqrt(max(mean_sq - obj[best] ** 2, 0.0) / law.samples))
    return StrategicChoice(xs[best].copy(), float(obj[best]), se, space, len(xs), law.exact)


def average_empirical_distribution(x, u, cb: Codebook, decoder: _IndexDecoder, k_u: int | None = None,
                                   samples: int = MC_SAMPLES, seed: int = 0,
                                   exact_limit: int = EXACT_OUTPUTS) -> tuple[JointDistribution, np.ndarray]:
    """``sum_m P(m_hat = m | x^n) Q_m``, with ``Q_m`` the joint type of ``(u^n, w^n(m))``.

    Returns the joint and an entrywise standard error (zeros when exact).
    """
    u = np.asarray(u, dtype=np.int64)
    ku = int(u.max()) + 1 if k_u is None else int(k_u)
    kw = decoder.v_given_w.shape[0]
    law = decoder.index_law(np.asarray(x)[None, :], samples=samples, seed=seed, exact_limit=exact_limit)
    types = joint_counts(u[None, :], cb.w, ku, kw) / cb.n  # [size, ku, kw]
    p = law.probs[0]
    q = np.tensordot(p, types, axes=1)
    if law.exact:
        se = np.zeros_like(q)
    else:
        second = np.tensordot(p, types ** 2, axes=1)
        se = np.sqrt(np.maximum(second - q ** 2, 0.0) / law.samples)
    return JointDistribution(q), se
