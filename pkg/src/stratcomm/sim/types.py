"""Sequences, joint types and the law of a joint type under random pairing.

Sequences are int arrays of symbol indices. Sequence tables over ``A^n``
are ordered lexicographically with the first letter most significant.

``ConditionalTypeLaw`` is the exact distribution of the joint type of a
fixed sequence ``a^n`` paired with ``B^n`` drawn i.i.d. from ``P_B``: for
each symbol ``a`` the ``b``-counts on the positions holding ``a`` are
multinomial, independently across ``a``. Typicality events of random
codewords reduce to sums over this finite law.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, logsumexp

from ..prob import TYPICALITY_SLACK, mi_bits
from ..scenarios.grid import compositions
from ..scenarios.instance import ResourceLimitError

MAX_TYPES = 2_000_000


def all_sequences(k: int, n: int) -> np.ndarray:
    """Every sequence in ``{0..k-1}^n``, one per row, in lexicographic order."""
    idx = np.arange(k ** n, dtype=np.int64)
    powers = k ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return (idx[:, None] // powers[None, :]) % k


def sequence_index(seqs: np.ndarray, k: int) -> np.ndarray:
    seqs = np.asarray(seqs, dtype=np.int64)
    powers = k ** np.arange(seqs.shape[-1] - 1, -1, -1, dtype=np.int64)
    return seqs @ powers


def symbol_counts(seq: np.ndarray, k: int) -> np.ndarray:
    """Per-symbol counts along the last axis."""
    seq = np.asarray(seq, dtype=np.int64)
    return np.stack([(seq == a).sum(axis=-1) for a in range(k)], axis=-1)


def joint_counts(a: np.ndarray, b: np.ndarray, ka: int, kb: int) -> np.ndarray:
    """Joint symbol counts of paired sequences, broadcast over leading axes."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    code = a * kb + b
    flat = np.stack([(code == c).sum(axis=-1) for c in range(ka * kb)], axis=-1)
    return flat.reshape(flat.shape[:-1] + (ka, kb))


def l1_to(types: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """l1 distance of (batched) joint types to a reference joint."""
    return np.abs(types - ref).sum(axis=(-2, -1))


def within(types: np.ndarray, ref: np.ndarray, delta: float) -> np.ndarray:
    """Closed l1-ball membership, with the same rounding slack as ``is_typical``."""
    return l1_to(types, ref) <= delta + TYPICALITY_SLACK


class ConditionalTypeLaw:
    """Exact law of the joint type of ``(a^n, B^n)``, ``B^n`` i.i.d. ``P_B``, for fixed ``a``-counts."""

    def __init__(self, counts_a, p_b, max_types: int = MAX_TYPES):
        counts_a = [int(c) for c in counts_a]
        p_b = np.asarray(p_b, dtype=float)
        self.n = sum(counts_a)
        self.counts_a = tuple(counts_a)
        kb = p_b.size
        total = math.prod(math.comb(c + kb - 1, kb - 1) for c in counts_a)
        if total > max_types:
            raise ResourceLimitError(f"{total} joint types exceed the cap of {max_types}; use a smaller n")
        with np.errstate(divide="ignore"):
            log_pb = np.log(p_b)
        rows, logs = [], []
        for c in counts_a:
            comp = compositions(c, kb)
            with np.errstate(invalid="ignore"):
                terms = np.where(comp > 0, comp * log_pb[None, :], 0.0)
            lp = gammaln(c + 1) - gammaln(comp + 1).sum(axis=1) + terms.sum(axis=1)
            rows.append(comp)
            logs.append(lp)
        # Cartesian product over the a-symbols.
        grids = np.meshgrid(*[np.arange(len(r)) for r in rows], indexing="ij")
        picks = [g.ravel() for g in grids]
        self.counts = np.stack([rows[i][picks[i]] for i in range(len(rows))], axis=1)  # [T, ka, kb]
        self.log_p = sum(logs[i][picks[i]] for i in range(len(rows)))
        keep = np.isfinite(self.log_p)
        self.counts, self.log_p = self.counts[keep].astype(np.int32), self.log_p[keep]

    @property
    def types(self) -> np.ndarray:
        return self.counts / self.n

    def __len__(self) -> int:
        return len(self.log_p)

    def log_probability(self, mask: np.ndarray) -> float:
        if not np.any(mask):
            return -np.inf
        return float(logsumexp(self.log_p[mask]))

    def probability(self, mask: np.ndarray) -> float:
        return float(np.exp(self.log_probability(mask)))

    def expectation(self, values: np.ndarray, mask: np.ndarray | None = None) -> float:
        """``E[values(type) | type in mask]``."""
        lp = self.log_p if mask is None else np.where(mask, self.log_p, -np.inf)
        w = np.exp(lp - logsumexp(lp))
        return float(w @ values)

    def expected_type(self, mask: np.ndarray | None = None) -> np.ndarray:
        lp = self.log_p if mask is None else np.where(mask, self.log_p, -np.inf)
        w = np.exp(lp - logsumexp(lp))
        return np.tensordot(w, self.types, axes=1)

    def sample(self, rng: np.random.Generator, mask: np.ndarray | None = None) -> np.ndarray:
        """Draw joint counts from the law, conditioned on ``mask``."""
        lp = self.log_p if mask is None else np.where(mask, self.log_p, -np.inf)
        w = np.exp(lp - logsumexp(lp))
        cdf = np.cumsum(w)
        i = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(w) - 1)
        return self.counts[i]

    def mutual_information(self) -> np.ndarray:
        return mi_bits(self.types)


@lru_cache(maxsize=512)
def _law(counts_a: tuple, p_b: tuple) -> ConditionalTypeLaw:
    return ConditionalTypeLaw(counts_a, np.array(p_b))


def type_law(counts_a, p_b) -> ConditionalTypeLaw:
    """Cached ``ConditionalTypeLaw``."""
    return _law(tuple(int(c) for c in counts_a), tuple(float(x) for x in p_b))


def realize(a: np.ndarray, counts: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """A uniformly random ``b^n`` with joint counts ``counts`` against ``a^n``."""
    a = np.asarray(a, dtype=np.int64)
    b = np.empty_like(a)
    for sym in range(counts.shape[0]):
        pos = np.flatnonzero(a == sym)
        vals = np.repeat(np.arange(counts.shape[1]), counts[sym])
        b[pos] = rng.permutation(vals)
    return b
