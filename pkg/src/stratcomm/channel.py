"""Channel capacity and the information constraint shared by the feasible sets."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .prob import Distribution, JointDistribution, Kernel, mutual_information

DEFAULT_TOL = 1e-9
MAX_ITER = 100_000


class CapacityError(RuntimeError):
    """Blahut-Arimoto did not close the capacity bounds within the iteration cap."""

    def __init__(self, lower: float, upper: float, iterations: int):
        super().__init__(f"capacity bounds [{lower:.12g}, {upper:.12g}] not within tolerance after {iterations} iterations")
        self.lower = lower
        self.upper = upper
        self.iterations = iterations


@dataclass(frozen=True)
class CapacityResult:
    capacity: float
    optimal_input: Distribution
    iterations: int
    residual: float
    lower: float
    upper: float


def _divergences(t: np.ndarray, p: np.ndarray) -> np.ndarray:
    q = p @ t
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(t > 0, t / q, 1.0)
        return np.where(t > 0, t * np.log2(ratio), 0.0).sum(axis=1)


def capacity(t: Kernel | np.ndarray, tol: float = DEFAULT_TOL, max_iter: int = MAX_ITER) -> CapacityResult:
    """Capacity of a discrete memoryless channel by Blahut-Arimoto.

    Iterates until the bounds ``sum_x p(x) D_x <= C <= max_x D_x`` differ by
    less than ``tol``, where ``D_x`` is the divergence between row ``x`` and
    the current output distribution. Returns the midpoint of the bracket.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    t = Kernel(np.asarray(t, dtype=float)).rows
    # Outputs that are never produced carry no information.
    t = t[:, t.sum(axis=0) > 0]
    n_in = t.shape[0]
    p = np.full(n_in, 1.0 / n_in)
    lower = upper = 0.0
    for it in range(1, max_iter + 1):
        d = _divergences(t, p)
        lower = float(p @ d)
        upper = float(d.max())
        if upper - lower < tol:
            break
        w = p * np.exp2(d - d.max())
        p = w / w.sum()
    else:
        raise CapacityError(lower, upper, max_iter)
    cap_max = math.log2(min(t.shape))
    value = min(max(0.5 * (lower + upper), 0.0), cap_max)
    return CapacityResult(value, Distribution(p), it, upper - lower, lower, upper)


def info_constraint_slack(q: JointDistribution | np.ndarray, cap: float) -> float:
    """``cap - I(A;B)``; the joint is feasible iff this is nonnegative."""
    return cap - mutual_information(q)


def bsc(p: float) -> Kernel:
    """Binary symmetric channel with crossover probability ``p``."""
    return Kernel(np.array([[1 - p, p], [p, 1 - p]]))


def h2(p: float) -> float:
    """Binary entropy in bits."""
    if p <= 0 or p >= 1:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)
