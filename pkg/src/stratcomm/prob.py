"""Finite-alphabet probability primitives.

Distributions, kernels and joints are thin immutable wrappers around dense
numpy arrays. The array-level helpers (``entropy_bits``, ``mi_bits``) accept
batches along leading axes and are what the solvers call in their inner
loops; the typed wrappers are used at module boundaries.

All information quantities are in bits.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SIMPLEX_TOL = 1e-12


class ValidationError(ValueError):
    """Raised when an input violates a probability or shape invariant."""


@dataclass(frozen=True)
class Alphabet:
    name: str
    size: int

    def __post_init__(self):
        if int(self.size) != self.size or self.size < 1:
            raise ValidationError(f"alphabet {self.name!r}: size must be a positive integer, got {self.size}")


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _check_simplex(arr: np.ndarray, what: str, tol: float = SIMPLEX_TOL) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{what}: non-finite entry")
    if arr.size and arr.min() < -tol:
        raise ValidationError(f"{what}: negative entry {arr.min():.3g}")
    arr = np.clip(arr, 0.0, None)
    total = arr.sum()
    if abs(total - 1.0) > tol:
        raise ValidationError(f"{what}: entries sum to {total:.15g}, not 1")
    return arr / total


@dataclass(frozen=True, eq=False)
class Distribution:
    """A probability vector over a finite alphabet."""

    probs: np.ndarray
    alphabet: Alphabet | None = None

    def __post_init__(self):
        p = _check_simplex(np.asarray(self.probs, dtype=float).ravel(), "distribution")
        object.__setattr__(self, "probs", _readonly(p))
        if self.alphabet is None:
            object.__setattr__(self, "alphabet", Alphabet("", p.size))
        elif self.alphabet.size != p.size:
            raise ValidationError(f"distribution over {self.alphabet.name!r} has {p.size} entries, expected {self.alphabet.size}")

    @property
    def size(self) -> int:
        return self.probs.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.probs, dtype=dtype)

    @classmethod
    def uniform(cls, size: int, name: str = "") -> "Distribution":
        return cls(np.full(size, 1.0 / size), Alphabet(name, size))

    @classmethod
    def point(cls, size: int, index: int, name: str = "") -> "Distribution":
        p = np.zeros(size)
        p[index] = 1.0
        return cls(p, Alphabet(name, size))


@dataclass(frozen=True, eq=False)
class Kernel:
    """Row-stochastic matrix: row ``a`` is the distribution of the output given input ``a``."""

    rows: np.ndarray
    source: Alphabet | None = None
    target: Alphabet | None = None

    def __post_init__(self):
        m = np.array(self.rows, dtype=float)
        if m.ndim != 2:
            raise ValidationError(f"kernel must be a matrix, got shape {m.shape}")
        out = np.empty_like(m)
        for i, row in enumerate(m):
            out[i] = _check_simplex(row, f"kernel row {i}")
        object.__setattr__(self, "rows", _readonly(out))
        if self.source is None:
            object.__setattr__(self, "source", Alphabet("", m.shape[0]))
        if self.target is None:
            object.__setattr__(self, "target", Alphabet("", m.shape[1]))
        if (self.source.size, self.target.size) != m.shape:
            raise ValidationError(f"kernel shape {m.shape} does not match alphabets")

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows.shape

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.rows, dtype=dtype)

    def row(self, a: int) -> Distribution:
        return Distribution(self.rows[a], self.target)

    @classmethod
    def identity(cls, size: int) -> "Kernel":
        return cls(np.eye(size))

    @classmethod
    def constant(cls, row: Sequence[float], n_inputs: int) -> "Kernel":
        return cls(np.tile(np.asarray(row, dtype=float), (n_inputs, 1)))


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """Joint probability matrix over ``first x second``."""

    probs: np.ndarray
    first: Alphabet | None = None
    second: Alphabet | None = None

    def __post_init__(self):
        m = np.asarray(self.probs, dtype=float)
        if m.ndim != 2:
            raise ValidationError(f"joint distribution must be a matrix, got shape {m.shape}")
        m = _check_simplex(m, "joint distribution")
        object.__setattr__(self, "probs", _readonly(m))
        if self.first is None:
            object.__setattr__(self, "first", Alphabet("", m.shape[0]))
        if self.second is None:
            object.__setattr__(self, "second", Alphabet("", m.shape[1]))
        if (self.first.size, self.second.size) != m.shape:
            raise ValidationError(f"joint shape {m.shape} does not match alphabets")

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.probs, dtype=dtype)

    def marginal_first(self) -> Distribution:
        return Distribution(self.probs.sum(axis=1), self.first)

    def marginal_second(self) -> Distribution:
        return Distribution(self.probs.sum(axis=0), self.second)

    def given_first(self) -> Kernel:
        """Conditional of the second coordinate given the first.

        Rows whose conditioning mass is zero are set to uniform so the
        result is still a valid kernel.
        """
        return Kernel(conditional_rows(self.probs), self.first, self.second)

    def given_second(self) -> Kernel:
        return Kernel(conditional_rows(self.probs.T), self.second, self.first)

    def l1(self, other: "JointDistribution | np.ndarray") -> float:
        other = np.asarray(other, dtype=float)
        if other.shape != self.shape:
            raise ValidationError(f"alphabet mismatch: {self.shape} vs {other.shape}")
        return float(np.abs(self.probs - other).sum())

    @classmethod
    def product(cls, a: Distribution | np.ndarray, b: Distribution | np.ndarray) -> "JointDistribution":
        return cls(np.outer(np.asarray(a, dtype=float), np.asarray(b, dtype=float)))


@dataclass(frozen=True, eq=False)
class EmpiricalDistribution:
    """Joint type of a pair of sequences of common length ``length``."""

    joint: JointDistribution
    length: int

    def __post_init__(self):
        if self.length < 1:
            raise ValidationError("empirical distribution needs length >= 1")
        scaled = self.joint.probs * self.length
        if np.abs(scaled - np.rint(scaled)).max() > 1e-9:
            raise ValidationError("empirical entries must be multiples of 1/n")

    @property
    def counts(self) -> np.ndarray:
        return np.rint(self.joint.probs * self.length).astype(np.int64)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.joint.probs, dtype=dtype)


def conditional_rows(q: np.ndarray) -> np.ndarray:
    """Normalize rows of a (batched) nonnegative matrix; zero rows become uniform."""
    q = np.asarray(q, dtype=float)
    mass = q.sum(axis=-1, keepdims=True)
    safe = np.where(mass > 0, mass, 1.0)
    return np.where(mass > 0, q / safe, 1.0 / q.shape[-1])


def entropy_bits(p: np.ndarray) -> np.ndarray:
    """Entropy along the last axis, with 0 log 0 = 0."""
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return terms.sum(axis=-1)


def mi_bits(q: np.ndarray) -> np.ndarray:
    """Mutual information of joint matrices stacked on leading axes.

    Computed over the support only; the result is clipped at zero to absorb
    rounding noise of order 1e-16.
    """
    q = np.asarray(q, dtype=float)
    qa = q.sum(axis=-1, keepdims=True)
    qb = q.sum(axis=-2, keepdims=True)
    denom = qa * qb
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(q > 0, q / np.where(denom > 0, denom, 1.0), 1.0)
        terms = np.where(q > 0, q * np.log2(ratio), 0.0)
    return np.maximum(terms.sum(axis=(-2, -1)), 0.0)


def entropy(d: Distribution | np.ndarray) -> float:
    """Shannon entropy in bits."""
    return float(entropy_bits(np.asarray(d, dtype=float)))


def mutual_information(j: JointDistribution | np.ndarray) -> float:
    """I(A;B) in bits for a joint matrix over A x B."""
    return float(mi_bits(np.asarray(j, dtype=float)))


def compose(prior: Distribution | np.ndarray, k: Kernel | np.ndarray) -> JointDistribution:
    """Joint ``prior(a) * k(b|a)``."""
    p = np.asarray(prior, dtype=float)
    m = np.asarray(k, dtype=float)
    if m.shape[0] != p.size:
        raise ValidationError(f"prior has {p.size} symbols but kernel has {m.shape[0]} rows")
    first = prior.alphabet if isinstance(prior, Distribution) else None
    second = k.target if isinstance(k, Kernel) else None
    return JointDistribution(p[:, None] * m, first, second)


def empirical(seq_a: Sequence[int], seq_b: Sequence[int],
              size_a: int | None = None, size_b: int | None = None) -> EmpiricalDistribution:
    """Joint type of two equal-length symbol sequences."""
    a = np.asarray(seq_a, dtype=np.int64).ravel()
    b = np.asarray(seq_b, dtype=np.int64).ravel()
    if a.size != b.size:
        raise ValidationError(f"sequence length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValidationError("empty sequences")
    size_a = int(a.max()) + 1 if size_a is None else size_a
    size_b = int(b.max()) + 1 if size_b is None else size_b
    if a.min() < 0 or b.min() < 0 or a.max() >= size_a or b.max() >= size_b:
        raise ValidationError("symbol outside alphabet")
    counts = np.zeros((size_a, size_b))
    np.add.at(counts, (a, b), 1.0)
    return EmpiricalDistribution(JointDistribution(counts / a.size), a.size)


# Slack absorbing rounding in sums of multiples of 1/n, so boundary cases
# (distance exactly delta) are decided as the closed ball requires.
TYPICALITY_SLACK = 1e-12


def is_typical(e: EmpiricalDistribution | JointDistribution | np.ndarray,
               ref: JointDistribution | np.ndarray, delta: float) -> bool:
    """True iff the l1 distance between ``e`` and ``ref`` is at most ``delta``."""
    if delta < 0:
        raise ValidationError("delta must be nonnegative")
    q = np.asarray(e, dtype=float)
    r = np.asarray(ref, dtype=float)
    if q.shape != r.shape:
        raise ValidationError(f"alphabet mismatch: {q.shape} vs {r.shape}")
    return bool(np.abs(q - r).sum() <= delta + TYPICALITY_SLACK)
