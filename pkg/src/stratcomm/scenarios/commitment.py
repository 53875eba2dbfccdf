"""Leader-commitment values: encoder commits (persuasion) or decoder commits (mechanism).

Both are ``inf`` over the leader's single-letter strategy of the worst
follower best response, approximated by multi-resolution grid search. The
reported bracket is ``[best - slack, best]`` with
``slack = final step * max|d| * lipschitz_constant``; the upper end is a
value attained by an explicit feasible strategy.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .. import coupling
from ..best_response import encoder_br
from ..prob import ValidationError, mi_bits
from .cooperative import FEAS_TOL
from .grid import SearchResult, multires_search
from .instance import Bracket, ProblemInstance, SolverGrid


@dataclass
class CommitmentResult:
    value: float
    bracket: Bracket
    induced: float          # the follower-induced distortion of the other side
    q_uw: np.ndarray        # joint of source and auxiliary at the witness
    v_given_w: np.ndarray   # decoder kernel at the witness
    search: SearchResult

    @property
    def p_w(self) -> np.ndarray:
        return self.q_uw.sum(axis=0)


def lipschitz_constant(inst: ProblemInstance, scenario: str) -> float:
    """Coordinates moved per unit step: |W| for a kernel into W, |W| + |V| when P_W and P_{V|W} both move."""
    if scenario == "persuasion":
        return float(inst.n_w)
    if scenario == "mechanism":
        return float(inst.n_w + inst.n_v)
    raise ValueError(scenario)


def _bracket(inst, grid, scenario, value) -> Bracket:
    slack = grid.final_step * inst.d_abs_max * lipschitz_constant(inst, scenario)
    return Bracket(value - slack, value)


def worst_reply_batch(q: np.ndarray, d_d: np.ndarray, d_e: np.ndarray, tie_tol: float):
    """Vectorized worst-case decoder reply for joints ``q`` of shape ``(n, |U|, |W|)``.

    Returns ``(choice, e_val, d_val)``: the chosen action per ``w`` and the
    resulting expected ``d_e`` and ``d_d``.
    """
    cond_d = np.einsum("nuw,uv->nwv", q, d_d)
    cond_e = np.einsum("nuw,uv->nwv", q, d_e)
    mass = q.sum(axis=1)
    minc = cond_d.min(axis=2, keepdims=True)
    ties = cond_d <= minc + tie_tol * mass[..., None]
    # Largest encoder loss among tied actions; argmax keeps the first on equality.
    choice = np.argmax(np.where(ties, cond_e, -np.inf), axis=2)
    pick = lambda a: np.take_along_axis(a, choice[..., None], axis=2)[..., 0].sum(axis=1)
    return choice, pick(cond_e), pick(cond_d)


def persuasion_value(inst: ProblemInstance, grid: SolverGrid) -> CommitmentResult:
    """Encoder-commitment value: ``inf`` over feasible ``Q_{W|U}`` of the worst decoder best response."""
    p_u, cap = inst.prior, inst.capacity

    def evaluate(rows):
        q = p_u[None, :, None] * np.stack(rows, axis=1)
        feas = mi_bits(q) <= cap + FEAS_TOL
        _, e_val, d_val = worst_reply_batch(q, inst.d_d, inst.d_e, grid.tie_tol)
        return {"value": np.where(feas, e_val, np.inf), "induced": d_val}

    res = multires_search([inst.n_w] * inst.n_u, evaluate, grid)
    q = p_u[:, None] * np.stack(res.point)
    choice, _, _ = worst_reply_batch(q[None], inst.d_d, inst.d_e, grid.tie_tol)
    reply = np.eye(inst.n_v)[choice[0]]
    return CommitmentResult(res.value, _bracket(inst, grid, "persuasion", res.value),
                            float(res.extras["induced"]), q, reply, res)


def _mechanism_batch_2x2(p_u, p_w, v_given_w, inst, cap, tol):
    g = np.einsum("uv,nwv->nuw", inst.d_e, v_given_w)
    h = np.einsum("uv,nwv->nuw", inst.d_d, v_given_w)
    value, _, lo, hi = coupling.band_2x2(g, p_u[0], p_w[:, 0], cap, tol)
    # Worst E[d_d] over the band sits at one of its two ends.
    ends = np.stack([lo, hi], axis=-1)
    so, bo = coupling._slope(h), coupling._offset(h, p_u[0], p_w[:, 0])
    vals = bo[:, None] + so[:, None] * ends
    j = np.argmax(vals, axis=1)
    return value, vals[np.arange(len(j)), j], ends[np.arange(len(j)), j]


def mechanism_value(inst: ProblemInstance, grid: SolverGrid, eta0: float = 0.0) -> CommitmentResult:
    """Decoder-commitment value: ``inf`` over ``(P_W, P_{V|W})`` of the worst encoder best response.

    ``eta0 > 0`` tightens the encoder's information constraint to
    ``I(U;W) <= C - 2 eta0``.
    """
    if eta0 < 0:
        raise ValidationError("eta0 must be nonnegative")
    cap = inst.capacity - 2 * eta0
    if cap < 0:
        raise ValidationError(f"eta0 = {eta0} leaves a negative information budget (capacity {inst.capacity:.6g})")
    p_u, n_w = inst.prior, inst.n_w
    exact = inst.n_u == 2 and n_w == 2

    def evaluate(rows):
        p_w = rows[0]
        vgw = np.stack(rows[1:], axis=1)  # (n, |W|, |V|)
        if exact:
            e_val, d_val, t = _mechanism_batch_2x2(p_u, p_w, vgw, inst, cap, grid.encoder_tie_tol)
            return {"value": d_val, "induced": e_val, "t": t}
        e_val = np.empty(len(p_w))
        d_val = np.empty(len(p_w))
        for i in range(len(p_w)):
            br = encoder_br((p_w[i], vgw[i]), inst.d_e, p_u, cap, grid.encoder_tie_tol, d_d=inst.d_d)
            e_val[i], d_val[i] = br.value, br.worst_d
        return {"value": d_val, "induced": e_val}

    if not exact:
        # Every cell costs a convex solve; keep the budget in proportion.
        grid = _scaled_budget(grid, 1000)
    res = multires_search([n_w] + [inst.n_v] * n_w, evaluate, grid)
    p_w, vgw = res.point[0], np.stack(res.point[1:])
    if exact:
        q = coupling.coupling_from_t(res.extras["t"], p_u[0], p_w[0])
    else:
        br = encoder_br((p_w, vgw), inst.d_e, p_u, cap, grid.encoder_tie_tol, d_d=inst.d_d)
        q = br.extremes["worst_d"]
    return CommitmentResult(res.value, _bracket(inst, grid, "mechanism", res.value),
                            float(res.extras["induced"]), q, vgw, res)


def _scaled_budget(grid: SolverGrid, factor: int) -> SolverGrid:
    return replace(grid, max_cells=max(grid.max_cells // factor, 1), chunk=min(grid.chunk, 64))
