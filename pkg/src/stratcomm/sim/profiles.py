"""Block strategy profiles and their long-run distortions.

An encoder maps ``u^n`` to a distribution over ``X^n`` and a decoder maps
``y^n`` to a distribution over ``V^n``. Both can be given as explicit
tables over lexicographically ordered sequences, or as codebook rules.
The long-run distortion of a profile is ``E[(1/n) sum_t d(U_t, V_t)]``
under the joint law of source, encoder, channel and decoder.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..prob import ValidationError
from ..scenarios.instance import ProblemInstance
from .codebook import Codebook, StrategicChoice, _IndexDecoder, shannon_encode, strategic_encoder
from .rng import draw_iid, stream, through_kernel
from .types import all_sequences, sequence_index

EXACT_OUTCOMES = 10 ** 6


def _check_table(rows: np.ndarray, what: str) -> np.ndarray:
    rows = np.array(rows, dtype=float)
    if rows.ndim != 2 or not np.all(np.isfinite(rows)) or rows.min() < -1e-12:
        raise ValidationError(f"{what}: rows must be finite nonnegative vectors")
    bad = np.flatnonzero(np.abs(rows.sum(axis=1) - 1.0) > 1e-9)
    if bad.size:
        raise ValidationError(f"{what}: row {bad[0]} sums to {rows[bad[0]].sum():.12g}, not 1")
    return np.clip(rows, 0.0, None)


class TableRule:
    """Explicit kernel between sequence sets, rows indexed lexicographically."""

    def __init__(self, rows, k_in: int, k_out: int, n: int):
        self.rows = _check_table(rows, "strategy table")
        self.k_in, self.k_out, self.n = k_in, k_out, n
        if self.rows.shape != (k_in ** n, k_out ** n):
            raise ValidationError(f"table shape {self.rows.shape} does not match {k_in}^{n} x {k_out}^{n}")
        self._outs = all_sequences(k_out, n)

    def sample(self, seq: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        row = self.rows[int(sequence_index(seq, self.k_in))]
        return self._outs[int(draw_iid(rng, row, ()))]

    def table(self) -> np.ndarray:
        return self.rows

    @classmethod
    def deterministic(cls, mapping, k_in: int, k_out: int, n: int) -> "TableRule":
        """From a map ``input index -> output index``."""
        rows = np.zeros((k_in ** n, k_out ** n))
        rows[np.arange(k_in ** n), np.asarray(mapping, dtype=np.int64)] = 1.0
        return cls(rows, k_in, k_out, n)

    @classmethod
    def constant(cls, out_seq, k_in: int, k_out: int, n: int) -> "TableRule":
        idx = int(sequence_index(np.asarray(out_seq), k_out))
        return cls.deterministic(np.full(k_in ** n, idx), k_in, k_out, n)


class ShannonEncoder:
    """Sends ``x^n(m)`` for the index chosen by ``shannon_encode``."""

    def __init__(self, codebook: Codebook, q_uw, delta: float):
        self.codebook = codebook
        self.q_uw = np.asarray(q_uw, dtype=float)
        self.delta = float(delta)
        self.n = codebook.n

    def index(self, u: np.ndarray) -> int:
        return shannon_encode(self.codebook, u, self.q_uw, self.delta)

    def sample(self, u: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        return self.codebook.x[self.index(u) - 1]

    def table(self) -> np.ndarray:
        k_u = self.q_uw.shape[0]
        k_x = self.codebook.p_x.size
        us = all_sequences(k_u, self.n)
        xs = self.codebook.x[[self.index(u) - 1 for u in us]]
        rows = np.zeros((len(us), k_x ** self.n))
        rows[np.arange(len(us)), sequence_index(xs, k_x)] = 1.0
        return rows


class StrategicEncoder:
    """Best response of the encoder to a codebook decoder, computed per source sequence."""

    def __init__(self, decoder: _IndexDecoder, d_e, k_u: int, search: str = "auto", seed: int = 0):
        self.decoder = decoder
        self.codebook = decoder.codebook
        self.d_e = np.asarray(d_e, dtype=float)
        self.k_u = k_u
        self.search = search
        self.seed = seed
        self.n = decoder.n

    def choose(self, u: np.ndarray) -> StrategicChoice:
        return strategic_encoder(self.codebook, u, self.decoder, self.d_e, self.search, seed=self.seed)

    def sample(self, u: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        return self.choose(u).x

    def table(self) -> np.ndarray:
        k_x = self.decoder.channel.shape[0]
        us = all_sequences(self.k_u, self.n)
        rows = np.zeros((len(us), k_x ** self.n))
        for i, u in enumerate(us):
            rows[i, int(sequence_index(self.choose(u).x, k_x))] = 1.0
        return rows


@dataclass
class StrategyProfile:
    n: int
    encoder: object
    decoder: object


@dataclass(frozen=True)
class LongRunEstimate:
    d_e: float
    d_d: float
    se_e: float
    se_d: float
    exact: bool
    trials: int


def _letter_average(d: np.ndarray, us: np.ndarray, vs: np.ndarray) -> np.ndarray:
    # (1/n) sum_t d(u_t, v_t) for every pair of sequences.
    out = np.zeros((len(us), len(vs)))
    for t in range(us.shape[1]):
        out += d[us[:, t][:, None], vs[:, t][None, :]]
    return out / us.shape[1]


def channel_power(t: np.ndarray, n: int) -> np.ndarray:
    """Memoryless extension ``T^n(y^n | x^n)``, lexicographic order."""
    out = np.ones((1, 1))
    for _ in range(n):
        out = np.kron(out, t)
    return out


def exact_size(inst: ProblemInstance, n: int) -> int:
    ku, kx, ky = inst.n_u, inst.channel.shape[0], inst.channel.shape[1]
    kv = inst.n_v
    return max(ku * kx, kx * ky, ky * kv, ku * kv) ** n


def long_run_distortions(profile: StrategyProfile, inst: ProblemInstance, trials: int, seed: int,
                         exact_limit: int = EXACT_OUTCOMES) -> LongRunEstimate:
    """Long-run distortions of a profile.

    Exact (zero standard error) when every sequence-level table has at
    most ``exact_limit`` entries and both rules can produce tables;
    otherwise a Monte Carlo average over ``trials`` seeded trials.
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    n = profile.n
    t = np.asarray(inst.channel.rows)
    if exact_size(inst, n) <= exact_limit and hasattr(profile.encoder, "table") and hasattr(profile.decoder, "table"):
        us = all_sequences(inst.n_u, n)
        vs = all_sequences(inst.n_v, n)
        p_un = np.prod(inst.prior[us], axis=1)
        joint = (p_un[:, None] * profile.encoder.table()) @ channel_power(t, n) @ profile.decoder.table()
        d_e = float(np.sum(joint * _letter_average(inst.d_e, us, vs)))
        d_d = float(np.sum(joint * _letter_average(inst.d_d, us, vs)))
        return LongRunEstimate(d_e, d_d, 0.0, 0.0, True, 0)
    de = np.empty(trials)
    dd = np.empty(trials)
    for i in range(trials):
        rng = stream(seed, "long-run", i)
        u = draw_iid(rng, inst.prior, n)
        x = profile.encoder.sample(u, rng)
        y = through_kernel(t, x, rng.random(n))
        v = profile.decoder.sample(y, rng)
        de[i] = inst.d_e[u, v].mean()
        dd[i] = inst.d_d[u, v].mean()
    scale = 1.0 / math.sqrt(trials)
    se_e = float(de.std(ddof=1) * scale) if trials > 1 else math.inf
    se_d = float(dd.std(ddof=1) * scale) if trials > 1 else math.inf
    return LongRunEstimate(float(de.mean()), float(dd.mean()), se_e, se_d, False, trials)
