"""Cooperative region: distortion pairs reachable when both sides share one goal."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..prob import mi_bits
from .grid import evaluate_product, simplex_points
from .instance import DistortionPair, ProblemInstance, SolverGrid

FEAS_TOL = 1e-12  # slack on I <= C that absorbs rounding in mi_bits


@dataclass(frozen=True)
class DistortionRatePoint:
    distortion: float
    rate: float
    kernel: np.ndarray  # Q_{V|U}
    slope: float


def _ba_fixed_slope(p_u: np.ndarray, d: np.ndarray, s: float,
                    tol: float = 1e-12, max_iter: int = 3000):
    # Rate-distortion Blahut-Arimoto at slope s. Rows are shifted by their
    # minimum so exp(-s d) stays representable for large s. Stops when the
    # optimality condition c_v <= 1 (equality on the support) holds to tol.
    # Near a flat piece of the curve convergence stalls; the iteration cap
    # is harmless since every returned kernel is scored by its own (I, D).
    shifted = d - d.min(axis=1, keepdims=True)
    expo = np.exp(-s * shifted)
    q_v = np.full(d.shape[1], 1.0 / d.shape[1])
    for _ in range(max_iter):
        c = (p_u / (expo @ q_v)) @ expo
        if c.max() - 1.0 < tol:
            break
        q_v = q_v * c
        q_v /= q_v.sum()
    a = q_v[None, :] * expo
    k = a / a.sum(axis=1, keepdims=True)
    joint = p_u[:, None] * k
    return float(mi_bits(joint)), float(np.sum(joint * d)), k


def _point(p_u, d, k, s) -> DistortionRatePoint:
    joint = p_u[:, None] * k
    return DistortionRatePoint(float(np.sum(joint * d)), float(mi_bits(joint)), k, s)


def _mix(p_u, d, feas: DistortionRatePoint, over: DistortionRatePoint, cap: float, iters: int = 100):
    # I(U;V) is convex in the kernel, so a mixture of a feasible kernel and
    # an infeasible one stays feasible up to the crossing; D is linear in it.
    lo, hi = 0.0, 1.0
    best = feas
    for _ in range(iters):
        a = 0.5 * (lo + hi)
        pt = _point(p_u, d, (1 - a) * feas.kernel + a * over.kernel, feas.slope)
        if pt.rate <= cap:
            lo = a
            if pt.distortion <= best.distortion:
                best = pt
        else:
            hi = a
    return best


def distortion_rate(p_u: np.ndarray, d: np.ndarray, cap: float, iters: int = 60) -> DistortionRatePoint:
    """``min E[d(U,V)]`` over ``Q_{V|U}`` with ``I(U;V) <= cap`` (bits).

    Traces the rate-distortion curve by its slope parameter and bisects the
    slope so the rate brackets ``cap``; the two bracketing kernels are then
    mixed, which also covers flat pieces of the curve. The returned kernel
    is always feasible.
    """
    p_u = np.asarray(p_u, dtype=float)
    d = np.asarray(d, dtype=float)
    prior_cost = p_u @ d
    v0 = int(np.argmin(prior_cost))
    rate0 = _point(p_u, d, np.tile(np.eye(d.shape[1])[v0], (p_u.size, 1)), 0.0)
    if cap <= FEAS_TOL:
        return rate0
    gap = float(np.ptp(d))
    if gap == 0.0:
        return rate0
    best, over = rate0, None
    s_lo, s_hi = 0.0, 1.0 / gap
    while True:
        rate, dist, k = _ba_fixed_slope(p_u, d, s_hi)
        if rate > cap:
            over = DistortionRatePoint(dist, rate, k, s_hi)
            break
        if dist <= best.distortion:
            best = DistortionRatePoint(dist, rate, k, s_hi)
        s_lo = s_hi
        if s_hi > 1e3 / gap:
            # Constraint inactive: the per-symbol minimum is reachable.
            k = np.eye(d.shape[1])[np.argmin(d, axis=1)]
            pt = _point(p_u, d, k, math.inf)
            return pt if pt.rate <= cap + FEAS_TOL else best
        s_hi *= 2.0
    for _ in range(iters):
        s = 0.5 * (s_lo + s_hi)
        rate, dist, k = _ba_fixed_slope(p_u, d, s)
        if rate <= cap:
            s_lo = s
            if dist <= best.distortion:
                best = DistortionRatePoint(dist, rate, k, s)
        else:
            s_hi = s
            over = DistortionRatePoint(dist, rate, k, s)
        if s_hi - s_lo < 1e-10 * s_hi:
            break
    return _mix(p_u, d, best, over, cap)


@dataclass
class CooperativeRegion:
    cloud: np.ndarray                 # (n, 2) feasible (D_e, D_d) pairs from the grid
    frontier: list[DistortionPair]    # Pareto-minimal pairs of the cloud
    envelope: np.ndarray              # (m, 2) rows (lambda, min lambda*D_e + (1-lambda)*D_d)
    envelope_points: list[DistortionPair]
    min_d_e: float
    min_d_d: float


def pareto_front(pairs: np.ndarray) -> np.ndarray:
    """Indices of pairs not dominated in both coordinates (minimization), sorted by the first."""
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    keep, best = [], math.inf
    for i in order:
        if pairs[i, 1] < best:
            keep.append(i)
            best = pairs[i, 1]
    return np.array(keep, dtype=np.int64)


def cooperative_region(inst: ProblemInstance, grid: SolverGrid, n_lambda: int = 21) -> CooperativeRegion:
    p_u, cap = inst.prior, inst.capacity

    def evaluate(rows):
        k = np.stack(rows, axis=1)  # (n, |U|, |V|)
        joint = p_u[None, :, None] * k
        feas = mi_bits(joint) <= cap + FEAS_TOL
        de = np.einsum("nuv,uv->n", joint, inst.d_e)
        dd = np.einsum("nuv,uv->n", joint, inst.d_d)
        return {"value": np.where(feas, 0.0, np.inf), "d_e": de, "d_d": dd}

    blocks = [simplex_points(inst.n_v, grid.resolution)] * inst.n_u
    out = evaluate_product(blocks, evaluate, grid)
    feas = np.isfinite(out["value"])
    cloud = np.stack([out["d_e"][feas], out["d_d"][feas]], axis=1)
    front = [DistortionPair(float(a), float(b), "cooperative") for a, b in cloud[pareto_front(cloud)]]

    lams = np.linspace(0.0, 1.0, n_lambda)
    env, env_pts = [], []
    for lam in lams:
        pt = distortion_rate(p_u, lam * inst.d_e + (1 - lam) * inst.d_d, cap)
        joint = p_u[:, None] * pt.kernel
        de, dd = float(np.sum(joint * inst.d_e)), float(np.sum(joint * inst.d_d))
        env.append((lam, pt.distortion))
        env_pts.append(DistortionPair(de, dd, "cooperative", {"kernel": pt.kernel, "lambda": float(lam)}))
    min_e = distortion_rate(p_u, inst.d_e, cap).distortion
    min_d = distortion_rate(p_u, inst.d_d, cap).distortion
    return CooperativeRegion(cloud, front, np.array(env), env_pts, min_e, min_d)
