"""Monte Carlo checks of the packing and covering lemmas, and the simplex cover.

Both lemmas concern ``U^n`` drawn i.i.d. from ``P_U`` and ``ceil(2^(nR))``
independent codewords ``W^n(m)`` drawn i.i.d. from ``P_W``. Given ``u^n``,
the codewords are i.i.d., so the event "some codeword's joint type with
``u^n`` lies in a set" has probability ``1 - (1 - p)^M``, where ``p`` is
the probability of the set under the conditional type law. A trial
draws ``u^n`` and then this event as one Bernoulli variable, which has
exactly the law of the event under the full random code. The exact event
probability (averaged over ``u``-types) is reported next to the estimate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from fractions import Fraction

import numpy as np
from scipy.special import gammaln

from ..prob import TYPICALITY_SLACK, ValidationError, mi_bits
from ..scenarios.grid import compositions
from ..scenarios.instance import ResourceLimitError
from .codebook import entry_count
from .rng import stream
from .types import type_law


@dataclass(frozen=True)
class LemmaReport:
    trials: int
    failures: int      # number of trials in which the event occurred
    estimate: float    # failures / trials
    se: float
    exact: float       # event probability under the code ensemble
    params: dict = field(default_factory=dict)
    bound: float = math.nan


def _event_given_counts(log_p_one: float, entries: int) -> float:
    # 1 - (1 - p)^M computed stably.
    p = math.exp(log_p_one)
    if p >= 1.0:
        return 1.0
    return -math.expm1(entries * math.log1p(-p))


def _u_type_weights(p_u: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    counts = compositions(n, p_u.size)
    with np.errstate(divide="ignore"):
        log_pu = np.log(p_u)
    terms = np.where(counts > 0, counts * log_pu[None, :], 0.0)
    log_w = gammaln(n + 1) - gammaln(counts + 1).sum(axis=1) + terms.sum(axis=1)
    keep = np.isfinite(log_w)
    return counts[keep], np.exp(log_w[keep])


def _run(p_u: np.ndarray, p_w: np.ndarray, n: int, rate: float, mask_fn, trials: int, seed: int, tag: str):
    entries = entry_count(rate, n)
    cache: dict[tuple, float] = {}

    def prob(counts) -> float:
        key = tuple(int(c) for c in counts)
        if key not in cache:
            law = type_law(key, p_w)
            cache[key] = _event_given_counts(law.log_probability(mask_fn(law)), entries)
        return cache[key]

    counts, weights = _u_type_weights(p_u, n)
    exact = float(sum(w * prob(c) for c, w in zip(counts, weights)))
    rng = stream(seed, tag, n)
    draws = rng.multinomial(n, p_u, size=trials)
    uniforms = rng.random(trials)
    hits = np.array([uniforms[i] < prob(draws[i]) for i in range(trials)])
    failures = int(hits.sum())
    est = failures / trials
    se = math.sqrt(est * (1 - est) / trials)
    return failures, est, se, exact, entries


def packing_margin(delta: float, size: int) -> float:
    """``3 delta log2(4 (size - 1) / delta)``, the loss in the packing exponent."""
    return 3.0 * delta * math.log2(4.0 * (size - 1) / delta)


def lemma1_verify(p_u, p_w, rate: float, eta: float, delta: float, n: int, trials: int, seed: int) -> LemmaReport:
    """Probability that some codeword's joint type with ``u^n`` has near-nominal marginals and ``I >= R + eta``."""
    p_u = np.asarray(p_u, dtype=float)
    p_w = np.asarray(p_w, dtype=float)
    if rate < 0 or eta <= 0 or delta <= 0 or n < 1 or trials < 1:
        raise ValidationError("need rate >= 0, eta > 0, delta > 0, n >= 1, trials >= 1")
    size = p_u.size * p_w.size
    margin = packing_margin(delta, size)
    if not margin < eta:
        raise ValidationError(
            f"delta = {delta} violates 3 delta log2(4(|U x W| - 1)/delta) < eta: {margin:.4g} >= {eta}")
    level = rate + eta

    def mask(law):
        t = law.types
        off_u = np.abs(t.sum(axis=2) - p_u).sum(axis=1) <= delta + TYPICALITY_SLACK
        off_w = np.abs(t.sum(axis=1) - p_w).sum(axis=1) <= delta + TYPICALITY_SLACK
        return off_u & off_w & (mi_bits(t) >= level)

    failures, est, se, exact, entries = _run(p_u, p_w, n, rate, mask, trials, seed, "lemma1")
    cover = simplex_cover(size, delta)
    log2_bound = math.log2(cover.count) - n * (eta - margin)
    bound = 2.0 ** log2_bound if log2_bound < 1024 else math.inf
    params = {"rate": rate, "eta": eta, "delta": delta, "n": n, "entries": entries, "log2_bound": log2_bound}
    return LemmaReport(trials, failures, est, se, exact, params, bound)


def lemma2_verify(q_uw, eta: float, delta: float, n: int, trials: int, seed: int) -> LemmaReport:
    """Probability that some codeword's joint type with ``u^n`` is within ``delta`` of ``Q_UW``, at ``R = I(Q) + eta``.

    Here the counted event is covering success, so ``failures`` counts
    trials in which a typical codeword exists.
    """
    q = np.asarray(q_uw, dtype=float)
    if eta <= 0 or delta < 0 or n < 1 or trials < 1:
        raise ValidationError("need eta > 0, delta >= 0, n >= 1, trials >= 1")
    rate = float(mi_bits(q)) + eta
    p_u, p_w = q.sum(axis=1), q.sum(axis=0)

    def mask(law):
        return np.abs(law.types - q).sum(axis=(1, 2)) <= delta + TYPICALITY_SLACK

    failures, est, se, exact, entries = _run(p_u, p_w, n, rate, mask, trials, seed, "lemma2")
    params = {"rate": rate, "eta": eta, "delta": delta, "n": n, "entries": entries}
    return LemmaReport(trials, failures, est, se, exact, params)


MAX_MEMBERS = 5_000_000


@dataclass(frozen=True)
class SimplexCover:
    """Lattice family ``c / N`` with every ``c_i >= 1``, and its exact checks."""

    size: int
    delta: float
    denominator: int

    @property
    def count(self) -> int:
        return math.comb(self.denominator - 1, self.size - 1)

    @cached_property
    def counts(self) -> np.ndarray:
        """Integer numerators, one member per row, rows summing to ``denominator``."""
        if self.count > MAX_MEMBERS:
            raise ResourceLimitError(f"cover has {self.count} members (cap {MAX_MEMBERS}); use a larger delta")
        return compositions(self.denominator - self.size, self.size) + 1

    @property
    def members(self) -> np.ndarray:
        return self.counts / self.denominator

    def __len__(self) -> int:
        return self.count

    def min_entry_ok(self) -> bool:
        # 1/N >= delta / (4 (size - 1)), in exact arithmetic.
        d = Fraction(str(self.delta))
        return Fraction(1, self.denominator) >= d / (4 * (self.size - 1))

    def count_ok(self) -> bool:
        d = Fraction(str(self.delta))
        return self.count <= (Fraction(4 * (self.size - 1)) / d) ** (self.size - 1)

    def nearest(self, probes: np.ndarray, chunk: int = 256) -> tuple[np.ndarray, np.ndarray]:
        """Closest member in l1 for each probe, by brute force over the family."""
        probes = np.atleast_2d(np.asarray(probes, dtype=float))
        idx = np.empty(len(probes), dtype=np.int64)
        dist = np.empty(len(probes))
        mem = self.members
        for s in range(0, len(probes), chunk):
            d = np.abs(probes[s:s + chunk, None, :] - mem[None, :, :]).sum(axis=2)
            idx[s:s + chunk] = d.argmin(axis=1)
            dist[s:s + chunk] = d.min(axis=1)
        return idx, dist

    def covers(self, probes: np.ndarray) -> bool:
        return bool(np.all(self.nearest(probes)[1] <= self.delta))

    def rounding_member(self, p: np.ndarray) -> np.ndarray:
        """A member within ``delta`` of ``p``, built by largest-remainder rounding then lifting zero entries."""
        p = np.asarray(p, dtype=float)
        n_ = self.denominator
        scaled = p * n_
        c = np.floor(scaled).astype(np.int64)
        short = n_ - int(c.sum())
        order = np.argsort(-(scaled - c), kind="stable")
        c[order[:short]] += 1
        for i in np.flatnonzero(c == 0):
            c[int(np.argmax(c))] -= 1
            c[i] = 1
        return c


def simplex_cover(sizes, delta: float) -> SimplexCover:
    """Interior lattice family covering the simplex within ``delta`` in l1.

    The step is ``1/N`` with ``N = floor(4 (k - 1) / delta)``, so the step is
    at least ``delta / (4 (k - 1))``; members are ``c / N`` with integer
    ``c_i >= 1``. When ``4 (k - 1) / delta`` is an integer the family
    contains the corner points ``1 - delta/4`` / ``delta / (4 (k - 1))``.
    ``sizes`` is one alphabet size or a tuple whose product is the size.
    """
    k = int(np.prod(np.atleast_1d(sizes)))
    if k < 2 or not 0 < delta <= 2:
        raise ValidationError("need size >= 2 and 0 < delta <= 2")
    d = Fraction(str(delta))
    n_ = max(int(Fraction(4 * (k - 1)) / d), k)
    return SimplexCover(k, float(delta), n_)
