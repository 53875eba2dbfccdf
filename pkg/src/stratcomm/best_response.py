"""Single-letter best responses of the decoder and the encoder.

The decoder reacts to a joint ``Q_UW`` by choosing, for each ``w``, an
action ``v`` minimizing the conditional expected ``d_d``. The encoder reacts
to a committed ``P_WV`` by choosing a coupling ``Q_UW`` with marginals
``(P_U, P_W)`` and ``I(U;W) <= C`` that minimizes the expected ``d_e``.
Argmin sets are approximated by tolerance bands (``tie_tol``).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import coupling
from .prob import Alphabet, Distribution, JointDistribution, Kernel, ValidationError, conditional_rows, mi_bits

DECODER_TIE_TOL = 1e-9
ENCODER_TIE_TOL = 1e-6
FEASIBILITY_TOL = 1e-9


def aux_size(n_u: int, n_v: int) -> int:
    """Cardinality of the auxiliary alphabet."""
    return min(n_u + 1, n_v)


@dataclass(frozen=True)
class AuxiliaryAlphabet:
    u: Alphabet
    v: Alphabet
    w: Alphabet

    def __post_init__(self):
        if self.w.size != aux_size(self.u.size, self.v.size):
            raise ValidationError(f"|W| must be min(|U|+1, |V|) = {aux_size(self.u.size, self.v.size)}, got {self.w.size}")

    @classmethod
    def for_sizes(cls, n_u: int, n_v: int) -> "AuxiliaryAlphabet":
        return cls(Alphabet("U", n_u), Alphabet("V", n_v), Alphabet("W", aux_size(n_u, n_v)))


@dataclass(frozen=True)
class DecoderBRSet:
    """Per-``w`` minimizing actions.

    ``values[w]`` is the conditional expected ``d_d`` of the listed actions;
    for a ``w`` of zero mass every action is listed, the tie flag is set and
    the value is reported as 0 since it carries no weight.
    """

    actions: tuple[tuple[int, ...], ...]
    values: np.ndarray
    ties: np.ndarray
    marginal: np.ndarray
    tie_tol: float

    @property
    def expected(self) -> float:
        return float(self.marginal @ self.values)


@dataclass(frozen=True)
class EncoderBRSet:
    value: float
    minimizers: list[np.ndarray]
    tie_tol: float
    gap: float
    worst_d: float | None = None  # max E[d_d] over the tie band
    best_d: float | None = None   # min E[d_d] over the tie band
    extremes: dict = field(default_factory=dict)


def expected_distortion(q_uw: np.ndarray, v_given_w: np.ndarray, d: np.ndarray) -> float:
    """``sum_{u,w,v} Q(u,w) P(v|w) d(u,v)``."""
    q_uw = np.asarray(q_uw, dtype=float)
    return float(np.einsum("uw,wv,uv->", q_uw, np.asarray(v_given_w, dtype=float), np.asarray(d, dtype=float)))


def _cond_costs(q_uw: np.ndarray, d: np.ndarray) -> np.ndarray:
    # cost[w, v] = sum_u Q(u, w) d(u, v), unnormalized
    return np.asarray(q_uw, dtype=float).T @ np.asarray(d, dtype=float)


def decoder_br(q_uw: JointDistribution | np.ndarray, d_d: np.ndarray,
               tie_tol: float = DECODER_TIE_TOL) -> DecoderBRSet:
    q = np.asarray(q_uw, dtype=float)
    d_d = np.asarray(d_d, dtype=float)
    if q.shape[0] != d_d.shape[0]:
        raise ValidationError("Q_UW and d_d disagree on |U|")
    mass = q.sum(axis=0)
    cond = conditional_rows(q.T) @ d_d  # [w, v], conditional expectation
    actions, values, ties = [], np.zeros(q.shape[1]), np.zeros(q.shape[1], dtype=bool)
    for w in range(q.shape[1]):
        if mass[w] <= 0:
            acts = tuple(range(d_d.shape[1]))
        else:
            m = cond[w].min()
            acts = tuple(int(v) for v in np.flatnonzero(cond[w] <= m + tie_tol))
            values[w] = m
        actions.append(acts)
        ties[w] = len(acts) > 1
    return DecoderBRSet(tuple(actions), values, ties, mass, tie_tol)


def worst_case_decoder_reply(q_uw: JointDistribution | np.ndarray, d_d: np.ndarray, d_e: np.ndarray,
                             tie_tol: float = DECODER_TIE_TOL) -> Kernel:
    """Deterministic decoder reply that is worst for the encoder among best responses.

    The encoder loss is linear in ``Q_{V|W}`` and separable across ``w``, so
    a vertex of the best-response polytope attains the maximum.
    """
    q = np.asarray(q_uw, dtype=float)
    br = decoder_br(q, d_d, tie_tol)
    enc = _cond_costs(q, d_e)
    rows = np.zeros((q.shape[1], np.asarray(d_d).shape[1]))
    for w, acts in enumerate(br.actions):
        # Zero-mass w: every action is equally harmless; take the first listed.
        v = acts[int(np.argmax(enc[w, list(acts)]))] if br.marginal[w] > 0 else acts[0]
        rows[w, v] = 1.0
    return Kernel(rows)


def _split_pwv(p_wv) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(p_wv, tuple):
        p_w, v_given_w = p_wv
        return np.asarray(p_w, dtype=float), np.asarray(v_given_w, dtype=float)
    m = np.asarray(p_wv, dtype=float)
    return m.sum(axis=1), conditional_rows(m)


def encoder_br(p_wv, d_e: np.ndarray, p_u: Distribution | np.ndarray, cap: float,
               tie_tol: float = ENCODER_TIE_TOL, d_d: np.ndarray | None = None) -> EncoderBRSet:
    """Encoder best response to a committed ``P_WV``.

    ``p_wv`` is either a joint matrix over ``W x V`` or a pair
    ``(P_W, P_{V|W})``. When ``d_d`` is given, the band of couplings within
    ``tie_tol`` of the minimum is also searched for the largest and smallest
    expected ``d_d``; those extreme couplings are added to ``minimizers``.
    """
    if cap < 0:
        raise ValidationError("capacity must be nonnegative")
    p_w, v_given_w = _split_pwv(p_wv)
    p_u = np.asarray(p_u, dtype=float)
    try:
        coupling.check_marginals(p_u, p_w)
    except coupling.InfeasibleMarginals as exc:
        raise ValidationError(str(exc)) from exc
    d_e = np.asarray(d_e, dtype=float)
    g = d_e @ v_given_w.T  # [u, w]
    h = None if d_d is None else np.asarray(d_d, dtype=float) @ v_given_w.T

    if g.shape == (2, 2):
        value, t, lo, hi = coupling.band_2x2(g, p_u[0], p_w[0], cap, tie_tol)
        mins = [coupling.coupling_from_t(t, p_u[0], p_w[0])]
        worst = best = None
        extremes = {}
        if h is not None:
            ends = [coupling.coupling_from_t(x, p_u[0], p_w[0]) for x in (lo, hi)]
            vals = [float(np.sum(h * q)) for q in ends]
            i_max = int(np.argmax(vals))
            worst, best = vals[i_max], vals[1 - i_max]
            extremes = {"worst_d": ends[i_max], "best_d": ends[1 - i_max]}
            mins += ends
        return EncoderBRSet(float(value), mins, tie_tol, 0.0, worst, best, extremes)

    sol = coupling.min_linear_coupling(g, p_u, p_w, cap)
    mins = [sol.coupling]
    worst = best = None
    extremes = {}
    if h is not None:
        worst, qw = coupling.extreme_in_band(g, h, p_u, p_w, cap, sol.value, tie_tol, maximize=True)
        best, qb = coupling.extreme_in_band(g, h, p_u, p_w, cap, sol.value, tie_tol, maximize=False)
        extremes = {"worst_d": qw, "best_d": qb}
        mins += [qw, qb]
    return EncoderBRSet(sol.value, mins, tie_tol, sol.gap, worst, best, extremes)


def decoder_slack(q_uw, q_v_given_w, d_d) -> float:
    """Excess expected ``d_d`` of a reply over the decoder's best response."""
    q = np.asarray(q_uw, dtype=float)
    return expected_distortion(q, q_v_given_w, d_d) - decoder_br(q, d_d).expected


def encoder_slack(q_wv, q_uw, d_e, cap: float) -> float:
    """Excess expected ``d_e`` of ``q_uw`` over the encoder's best response.

    Returns ``inf`` when ``q_uw`` is not in the feasible set (wrong ``W``
    marginal or information constraint violated).
    """
    q = np.asarray(q_uw, dtype=float)
    p_w, v_given_w = _split_pwv(q_wv)
    if np.abs(q.sum(axis=0) - p_w).max() > FEASIBILITY_TOL or mi_bits(q) > cap + FEASIBILITY_TOL:
        return float("inf")
    br = encoder_br((p_w, v_given_w), d_e, q.sum(axis=1), cap)
    return expected_distortion(q, v_given_w, d_e) - br.value


def is_eps_decoder_br(q_uw, q_v_given_w, d_d, eps: float) -> bool:
    return decoder_slack(q_uw, q_v_given_w, d_d) <= eps


def is_eps_encoder_br(q_wv, q_uw, d_e, cap: float, eps: float) -> bool:
    return encoder_slack(q_wv, q_uw, d_e, cap) <= eps
