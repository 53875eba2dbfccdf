"""Problem data and solver settings shared by the scenario solvers."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ..best_response import DECODER_TIE_TOL, ENCODER_TIE_TOL, aux_size
from ..channel import capacity
from ..prob import Distribution, Kernel, ValidationError


class ResourceLimitError(RuntimeError):
    """A requested grid would exceed the configured cell budget."""


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Source prior, channel and the two distortion matrices."""

    p_u: Distribution
    channel: Kernel
    d_e: np.ndarray
    d_d: np.ndarray
    name: str = ""

    def __post_init__(self):
        if not isinstance(self.p_u, Distribution):
            object.__setattr__(self, "p_u", Distribution(self.p_u))
        if not isinstance(self.channel, Kernel):
            object.__setattr__(self, "channel", Kernel(self.channel))
        for attr in ("d_e", "d_d"):
            d = np.array(getattr(self, attr), dtype=float)
            if d.ndim != 2 or d.shape[0] != self.p_u.size:
                raise ValidationError(f"{attr} must be |U| x |V| with |U| = {self.p_u.size}, got shape {d.shape}")
            if not np.all(np.isfinite(d)):
                raise ValidationError(f"{attr} has non-finite entries")
            d.setflags(write=False)
            object.__setattr__(self, attr, d)
        if self.d_e.shape != self.d_d.shape:
            raise ValidationError(f"d_e {self.d_e.shape} and d_d {self.d_d.shape} disagree on |V|")

    @cached_property
    def capacity(self) -> float:
        return capacity(self.channel).capacity

    @property
    def n_u(self) -> int:
        return self.p_u.size

    @property
    def n_v(self) -> int:
        return self.d_e.shape[1]

    @property
    def n_w(self) -> int:
        return aux_size(self.n_u, self.n_v)

    @property
    def prior(self) -> np.ndarray:
        return np.asarray(self.p_u.probs)

    @property
    def d_e_bar(self) -> float:
        return float(self.d_e.max())

    @property
    def d_d_bar(self) -> float:
        return float(self.d_d.max())

    @property
    def d_abs_max(self) -> float:
        return float(max(np.abs(self.d_e).max(), np.abs(self.d_d).max()))

    def with_channel(self, channel) -> "ProblemInstance":
        return ProblemInstance(self.p_u, channel, self.d_e, self.d_d, self.name)


@dataclass(frozen=True)
class SolverGrid:
    """Grid search settings.

    ``resolution`` is the number of steps per unit on the coarse simplex
    grid; each refinement level shrinks the step by ``refine_factor`` around
    the ``top_k`` best cells found so far.
    """

    resolution: int = 50
    refine_depth: int = 2
    refine_factor: int = 5
    top_k: int = 4
    max_moves: int = 16
    tie_tol: float = DECODER_TIE_TOL
    encoder_tie_tol: float = ENCODER_TIE_TOL
    eps: float = 0.01
    max_cells: int = 5_000_000
    chunk: int = 4096
    workers: int = 1

    def __post_init__(self):
        if self.resolution < 2:
            raise ValidationError("resolution must be >= 2")
        if self.refine_depth < 0 or self.top_k < 1 or self.refine_factor < 2 or self.max_moves < 0:
            raise ValidationError("refine_depth >= 0, top_k >= 1, refine_factor >= 2 and max_moves >= 0 required")
        if self.eps < 0 or self.tie_tol < 0 or self.encoder_tie_tol < 0:
            raise ValidationError("tolerances must be nonnegative")
        if self.workers < 1 or self.chunk < 1:
            raise ValidationError("workers and chunk must be positive")

    @property
    def coarse_step(self) -> float:
        return 1.0 / self.resolution

    @property
    def final_step(self) -> float:
        return self.coarse_step / self.refine_factor ** self.refine_depth


@dataclass(frozen=True)
class Bracket:
    """``[lower, upper]``: ``upper`` is attained on the grid, ``lower`` subtracts the Lipschitz slack."""

    lower: float
    upper: float

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return self.lower - tol <= x <= self.upper + tol


@dataclass(frozen=True)
class DistortionPair:
    d_e: float
    d_d: float
    scenario: str
    witness: dict = field(default_factory=dict)
