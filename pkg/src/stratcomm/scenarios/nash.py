"""Sampled inner approximation of the epsilon-Nash distortion set.

A triple ``P_U Q_{W|U} Q_{V|W}`` is kept when ``I(U;W) <= C`` and both
players are within ``eps`` of a best response: the decoder against
``Q_UW`` and the encoder against ``Q_{V|W}`` over couplings with the same
``W`` marginal. Candidates come from the coarse simplex grid and from
alternating best-response dynamics started at random points.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import coupling
from ..best_response import worst_case_decoder_reply
from ..prob import conditional_rows, mi_bits
from .cooperative import FEAS_TOL
from .grid import evaluate_product, simplex_points
from .instance import DistortionPair, ProblemInstance, ResourceLimitError, SolverGrid

# Certificates are issued only with this much room below eps, so that an
# independent re-check with different rounding cannot overturn them.
CERT_MARGIN = 1e-9


@dataclass
class NashSet:
    eps: float
    pairs: np.ndarray         # (n, 2): (E d_e, E d_d)
    slacks: np.ndarray        # (n, 2): (encoder slack, decoder slack), both <= eps
    w_given_u: np.ndarray     # (n, |U|, |W|)
    v_given_w: np.ndarray     # (n, |W|, |V|)
    source: np.ndarray        # (n,) "grid" | "dynamics" | "babbling"
    babbling: DistortionPair = None
    examined: int = 0
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.pairs)

    def distortion_pairs(self) -> list[DistortionPair]:
        return [DistortionPair(float(e), float(d), "nash",
                               {"encoder_slack": float(s[0]), "decoder_slack": float(s[1]), "source": str(src)})
                for (e, d), s, src in zip(self.pairs, self.slacks, self.source)]


def _encoder_min(p_u, p_w, g, cap, exact):
    """Certified lower bound on the encoder's best value for each cell."""
    if exact:
        value, *_ = coupling.band_2x2(g, p_u[0], p_w[:, 0], cap)
        return value
    out = np.empty(len(p_w))
    for i in range(len(p_w)):
        out[i] = coupling.min_linear_coupling(g[i], p_u, p_w[i], cap).lower_bound
    return out


def certify(inst: ProblemInstance, w_given_u: np.ndarray, v_given_w: np.ndarray, cap: float | None = None):
    """Slacks of a batch of triples: ``(feasible, E d_e, E d_d, enc_slack, dec_slack)``."""
    cap = inst.capacity if cap is None else cap
    p_u = inst.prior
    q = p_u[None, :, None] * w_given_u
    p_w = q.sum(axis=1)
    feas = mi_bits(q) <= cap + FEAS_TOL
    g = np.einsum("uv,nwv->nuw", inst.d_e, v_given_w)
    h = np.einsum("uv,nwv->nuw", inst.d_d, v_given_w)
    e_val = np.einsum("nuw,nuw->n", q, g)
    d_val = np.einsum("nuw,nuw->n", q, h)
    dec_best = np.einsum("nuw,uv->nwv", q, inst.d_d).min(axis=2).sum(axis=1)
    enc_best = _encoder_min(p_u, p_w, g, cap, inst.n_u == 2 and inst.n_w == 2)
    return feas, e_val, d_val, np.maximum(e_val - enc_best, 0.0), np.maximum(d_val - dec_best, 0.0)


def _babbling(inst: ProblemInstance, tie_tol: float):
    # W independent of U; the decoder plays the prior-optimal action, worst tie for the encoder.
    q = np.outer(inst.prior, np.eye(inst.n_w)[0])
    reply = worst_case_decoder_reply(q, inst.d_d, inst.d_e, tie_tol).rows
    v0 = int(np.argmax(reply[0]))
    pair = DistortionPair(float(inst.prior @ inst.d_e[:, v0]), float(inst.prior @ inst.d_d[:, v0]),
                          "nash", {"action": v0, "source": "babbling"})
    wgu = np.tile(np.eye(inst.n_w)[0], (inst.n_u, 1))
    vgw = np.tile(np.eye(inst.n_v)[v0], (inst.n_w, 1))
    return pair, wgu, vgw


def _dynamics(inst: ProblemInstance, grid: SolverGrid, eps: float, rng: np.random.Generator,
              starts: int, max_rounds: int):
    """Alternating best responses from random starts; returns the end points."""
    p_u, cap = inst.prior, inst.capacity
    ends = []
    for _ in range(starts):
        p_w = rng.dirichlet(np.ones(inst.n_w))
        q = np.outer(p_u, p_w)
        for _ in range(max_rounds):
            vgw = worst_case_decoder_reply(q, inst.d_d, inst.d_e, grid.tie_tol).rows
            g = inst.d_e @ vgw.T
            q = coupling.min_linear_coupling(g, p_u, p_w, cap).coupling
            wgu = conditional_rows(q)
            _, _, _, se, sd = certify(inst, wgu[None], vgw[None])
            if se[0] <= eps - CERT_MARGIN and sd[0] <= eps - CERT_MARGIN:
                break
        ends.append((wgu, vgw))
    return ends


def nash_set(inst: ProblemInstance, eps: float, grid: SolverGrid, seed: int = 0,
             dynamics_starts: int = 16, max_rounds: int = 30) -> NashSet:
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    n_u, n_w, n_v = inst.n_u, inst.n_w, inst.n_v
    blocks = [simplex_points(n_w, grid.resolution)] * n_u + [simplex_points(n_v, grid.resolution)] * n_w
    if not (n_u == 2 and n_w == 2):
        total = int(np.prod([len(b) for b in blocks]))
        if total > grid.max_cells // 1000:
            raise ResourceLimitError(f"nash grid has {total} cells needing a convex solve each; "
                                     f"limit is {grid.max_cells // 1000}")

    def evaluate(rows):
        wgu = np.stack(rows[:n_u], axis=1)
        vgw = np.stack(rows[n_u:], axis=1)
        feas, e, d, se, sd = certify(inst, wgu, vgw)
        ok = feas & (se <= eps - CERT_MARGIN) & (sd <= eps - CERT_MARGIN)
        return {"value": np.where(ok, 0.0, np.inf), "e": e, "d": d, "se": se, "sd": sd}

    out = evaluate_product(blocks, evaluate, grid)
    keep = np.flatnonzero(np.isfinite(out["value"]))
    sizes = [len(b) for b in blocks]
    sub = np.unravel_index(keep, sizes)
    wgu = np.stack([blocks[i][sub[i]] for i in range(n_u)], axis=1) if keep.size else np.zeros((0, n_u, n_w))
    vgw = np.stack([blocks[n_u + i][sub[n_u + i]] for i in range(n_w)], axis=1) if keep.size else np.zeros((0, n_w, n_v))
    pairs = [np.stack([out["e"][keep], out["d"][keep]], axis=1)]
    slacks = [np.stack([out["se"][keep], out["sd"][keep]], axis=1)]
    wgus, vgws, src = [wgu], [vgw], [np.full(keep.size, "grid", dtype=object)]

    babble, b_wgu, b_vgw = _babbling(inst, grid.tie_tol)
    extra_w, extra_v, extra_src = [b_wgu], [b_vgw], ["babbling"]
    for w, v in _dynamics(inst, grid, eps, np.random.default_rng(seed), dynamics_starts, max_rounds):
        extra_w.append(w)
        extra_v.append(v)
        extra_src.append("dynamics")
    ew, ev = np.stack(extra_w), np.stack(extra_v)
    feas, e, d, se, sd = certify(inst, ew, ev)
    ok = feas & (se <= eps - CERT_MARGIN) & (sd <= eps - CERT_MARGIN)
    # The babbling point is always an exact equilibrium; it is kept even at eps = 0.
    ok[0] = feas[0] and se[0] <= eps + CERT_MARGIN and sd[0] <= eps + CERT_MARGIN
    pairs.append(np.stack([e[ok], d[ok]], axis=1))
    slacks.append(np.stack([se[ok], sd[ok]], axis=1))
    wgus.append(ew[ok])
    vgws.append(ev[ok])
    src.append(np.array(extra_src, dtype=object)[ok])
    return NashSet(eps, np.concatenate(pairs), np.concatenate(slacks), np.concatenate(wgus),
                   np.concatenate(vgws), np.concatenate(src), babble, int(out["value"].size) + len(extra_src))
