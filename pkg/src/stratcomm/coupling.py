"""Linear objectives over couplings with an upper bound on mutual information.

The feasible set is ``{Q : Q 1 = a, Q^T 1 = b, I(Q) <= cap}``. Since
``I(Q) = KL(Q || a b^T)`` for couplings of ``a`` and ``b``, the Lagrangian
``<c, Q> + lam * (KL - cap)`` is minimized by an entropic transport plan
relative to the product measure, which log-domain Sinkhorn computes. The
multiplier is bisected until the dual bound meets the primal value.

Two routes are provided:

* ``min_linear_coupling`` handles any shape (LP + Lagrangian bisection);
* ``interval_2x2`` / ``min_linear_2x2`` solve the 2x2 case exactly and are
  vectorized over a batch, which the grid searches rely on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, linprog

from .prob import mi_bits

LN2 = math.log(2.0)
GAP_TOL = 1e-8
MI_TOL = 1e-12


class InfeasibleMarginals(ValueError):
    pass


@dataclass(frozen=True)
class CouplingSolution:
    value: float
    coupling: np.ndarray
    lower_bound: float
    multiplier: float  # Lagrange multiplier on the information constraint (nats per bit-scaled KL)

    @property
    def gap(self) -> float:
        return self.value - self.lower_bound


def check_marginals(a: np.ndarray, b: np.ndarray, tol: float = 1e-9) -> None:
    if abs(a.sum() - b.sum()) > tol:
        raise InfeasibleMarginals(f"marginal masses differ: {a.sum():.12g} vs {b.sum():.12g}")
    if a.min() < 0 or b.min() < 0:
        raise InfeasibleMarginals("negative marginal entry")


def _marginal_rows(m: int, k: int) -> np.ndarray:
    a_eq = np.zeros((m + k, m * k))
    for i in range(m):
        a_eq[i, i * k:(i + 1) * k] = 1.0
    for j in range(k):
        a_eq[m + j, j::k] = 1.0
    return a_eq


def transport_lp(cost: np.ndarray, a: np.ndarray, b: np.ndarray,
                 bound: tuple[np.ndarray, float] | None = None) -> tuple[float, np.ndarray]:
    """Exact optimal transport by linear programming (HiGHS).

    ``bound = (h, v)`` adds the constraint ``<h, Q> <= v``.
    """
    m, k = cost.shape
    a_ub = b_ub = None
    if bound is not None:
        a_ub, b_ub = np.asarray(bound[0], dtype=float).reshape(1, -1), [bound[1]]
    res = linprog(cost.ravel(), A_ub=a_ub, b_ub=b_ub, A_eq=_marginal_rows(m, k),
                  b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    if res.status != 0:
        raise InfeasibleMarginals(f"transport LP failed: {res.message}")
    q = np.clip(res.x.reshape(m, k), 0.0, None)
    return float(np.sum(cost * q)), q


def _lse(x: np.ndarray, axis: int) -> np.ndarray:
    m = x.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(x - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def sinkhorn_log(cost: np.ndarray, a: np.ndarray, b: np.ndarray, lam: float,
                 f: np.ndarray | None = None, g: np.ndarray | None = None,
                 tol: float = 1e-13, sweeps: int = 20, max_newton: int = 100):
    """Minimizer of ``<cost, Q> + lam * KL_nats(Q || a b^T)`` over couplings.

    The plan is ``Q = a_i b_j exp((f_i + g_j - cost_ij) / lam)``. A few
    log-domain Sinkhorn sweeps warm up the potentials, then Newton's method
    on the (convex, smooth) dual closes the marginal error to ``tol``;
    plain Sinkhorn mixes too slowly when ``lam`` is small. ``a`` and ``b``
    must be strictly positive. Returns ``(Q, f, g)`` for warm starts.
    """
    la, lb = np.log(a), np.log(b)
    m, k = cost.shape
    f = np.zeros(m) if f is None else f.copy()
    g = np.zeros(k) if g is None else g.copy()

    def plan(f, g):
        return np.exp(la[:, None] + lb[None, :] + (f[:, None] + g[None, :] - cost) / lam)

    def dual(f, g):
        # Convex dual objective; its gradient is the marginal residual.
        return lam * plan(f, g).sum() - a @ f - b @ g

    for _ in range(sweeps):
        f = -lam * _lse(lb[None, :] + (g[None, :] - cost) / lam, axis=1)
        g = -lam * _lse(la[:, None] + (f[:, None] - cost) / lam, axis=0)
    f, g = f + g[-1], g - g[-1]
    q = plan(f, g)
    for _ in range(max_newton):
        r_row, r_col = q.sum(axis=1) - a, q.sum(axis=0) - b
        if max(np.abs(r_row).max(), np.abs(r_col).max()) < tol:
            break
        # Gauge: g[-1] stays 0, so drop its row and column.
        h = np.zeros((m + k - 1, m + k - 1))
        h[:m, :m] = np.diag(q.sum(axis=1))
        h[m:, m:] = np.diag(q.sum(axis=0)[:-1])
        h[:m, m:] = q[:, :-1]
        h[m:, :m] = q[:, :-1].T
        grad = np.concatenate([r_row, r_col[:-1]])
        try:
            step = -lam * np.linalg.solve(h, grad)
        except np.linalg.LinAlgError:
            step = -lam * np.linalg.lstsq(h, grad, rcond=None)[0]
        df, dg = step[:m], np.append(step[m:], 0.0)
        t = 1.0
        if np.abs(grad).max() > 1e-6:
            # Close to the optimum the decrease is below rounding, so the
            # full Newton step is taken without a line search.
            base, slope = dual(f, g), float(grad @ step)
            while t > 1e-12 and dual(f + t * df, g + t * dg) > base + 1e-4 * t * slope:
                t *= 0.5
        f, g = f + t * df, g + t * dg
        q = plan(f, g)
    return q, f, g


def _embed(q_small: np.ndarray, rows: np.ndarray, cols: np.ndarray, shape) -> np.ndarray:
    q = np.zeros(shape)
    q[np.ix_(rows, cols)] = q_small
    return q


def min_linear_coupling(cost: np.ndarray, a: np.ndarray, b: np.ndarray, cap: float,
                        gap_tol: float = GAP_TOL) -> CouplingSolution:
    """Minimize ``<cost, Q>`` over couplings of ``a``, ``b`` with ``I(Q) <= cap`` bits."""
    cost = np.asarray(cost, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if cap < 0:
        raise ValueError("capacity must be nonnegative")
    check_marginals(a, b)
    rows, cols = np.flatnonzero(a > 0), np.flatnonzero(b > 0)
    c, aa, bb = cost[np.ix_(rows, cols)], a[rows], b[cols]
    product = np.outer(aa, bb)

    def pack(value, q_small, lower, lam):
        return CouplingSolution(value, _embed(q_small, rows, cols, cost.shape), lower, lam)

    if cap <= MI_TOL or len(rows) == 1 or len(cols) == 1:
        v = float(np.sum(c * product))
        return pack(v, product, v, math.inf)

    v_lp, q_lp = transport_lp(c, aa, bb)
    if mi_bits(q_lp) <= cap + MI_TOL:
        return pack(v_lp, q_lp, v_lp, 0.0)

    cap_n = cap * LN2
    scale = max(float(np.ptp(c)), 1e-300)
    if np.ptp(c) == 0.0:
        v = float(np.sum(c * product))
        return pack(v, product, v, math.inf)

    best_lower = v_lp
    f = g = None

    def solve(lam):
        nonlocal f, g, best_lower
        q, f, g = sinkhorn_log(c, aa, bb, lam, f, g)
        val = float(np.sum(c * q))
        kl = float(mi_bits(q)) * LN2
        best_lower = max(best_lower, val + lam * (kl - cap_n))
        return q, val, kl

    # Bracket the multiplier: large lam -> near product (feasible).
    lam_hi = scale
    q_hi, v_hi, kl_hi = solve(lam_hi)
    while kl_hi > cap_n:
        lam_hi *= 4.0
        q_hi, v_hi, kl_hi = solve(lam_hi)
    lam_lo = lam_hi
    lam_min = 1e-7 * scale
    while True:
        lam_lo /= 4.0
        q_lo, v_lo, kl_lo = solve(lam_lo)
        if kl_lo > cap_n:
            break
        lam_hi, q_hi, v_hi = lam_lo, q_lo, v_lo
        if lam_lo < lam_min:
            return pack(v_hi, q_hi, best_lower, lam_hi)

    # Brent on log(lam) for KL(lam) = cap; the feasible side is tracked
    # separately so the returned coupling always satisfies the constraint.
    state = {"lo": math.log(lam_lo), "hi": math.log(lam_hi), "q": q_hi, "v": v_hi}

    def excess(x):
        if state["v"] - best_lower < gap_tol:
            raise _Converged
        q, v, kl = solve(math.exp(x))
        if kl <= cap_n:
            if x < state["hi"]:
                state.update(hi=x, q=q, v=v)
        else:
            state["lo"] = max(state["lo"], x)
        return kl - cap_n

    try:
        brentq(excess, state["lo"], state["hi"], xtol=1e-14, rtol=1e-14, maxiter=100)
        # Close the remaining bracket from the feasible side.
        for _ in range(60):
            if state["v"] - best_lower < gap_tol or state["hi"] - state["lo"] < 1e-14:
                break
            excess(0.5 * (state["lo"] + state["hi"]))
    except (_Converged, RuntimeError):
        pass
    v_hi, q_hi, lam_hi = state["v"], state["q"], math.exp(state["hi"])
    return pack(v_hi, q_hi, min(best_lower, v_hi), lam_hi)


class _Converged(Exception):
    pass


def extreme_in_band(cost: np.ndarray, other: np.ndarray, a: np.ndarray, b: np.ndarray, cap: float,
                    v_min: float, tol: float, maximize: bool = True) -> tuple[float, np.ndarray]:
    """Extremize ``<other, Q>`` over feasible couplings with ``<cost, Q> <= v_min + tol``.

    Uses the parametric family ``argmin <cost -/+ k * other, Q>``: the cost
    value of the minimizer is nondecreasing in ``k``, so the largest ``k``
    that stays in the band gives the extreme. Returns ``(value, Q)``.
    """
    sign = -1.0 if maximize else 1.0
    base = min_linear_coupling(cost, a, b, cap)
    best_q = base.coupling
    spread = max(float(np.ptp(other)), 1e-300)
    if np.ptp(other) == 0.0:
        return float(np.sum(other * best_q)), best_q
    # When the information constraint is slack at the band extreme, the
    # extreme is an LP solution (possibly in the interior of an edge).
    try:
        _, q_lp = transport_lp(sign * other, a, b, bound=(cost, v_min + tol))
        if mi_bits(q_lp) <= cap + MI_TOL:
            return float(np.sum(other * q_lp)), q_lp
    except InfeasibleMarginals:
        pass

    unit = max(float(np.ptp(cost)), 1e-12) / spread

    def attempt(k):
        # Dividing by 1 + k/unit keeps the objective O(1); the minimizer is unchanged.
        sol = min_linear_coupling((cost + sign * k * other) / (1.0 + k / unit), a, b, cap)
        return sol.coupling, float(np.sum(cost * sol.coupling)) <= v_min + tol

    # Lexicographic tiebreak first, then grow k geometrically and bisect.
    k_ok, k_bad = 0.0, None
    k = 1e-9 * unit
    while k < 1e9 * unit:
        q, ok = attempt(k)
        if not ok:
            k_bad = k
            break
        k_ok, best_q = k, q
        k *= 8.0
    else:
        # The whole feasible set is in the band: optimize other alone.
        q = min_linear_coupling(sign * other + 1e-9 * cost / unit, a, b, cap).coupling
        if float(np.sum(cost * q)) <= v_min + tol:
            best_q = q
    if k_bad is not None and k_ok > 0:
        for _ in range(40):
            if k_bad / k_ok < 1 + 1e-3:
                break
            k = math.sqrt(k_ok * k_bad)
            q, ok = attempt(k)
            if ok:
                k_ok, best_q = k, q
            else:
                k_bad = k
    return float(np.sum(other * best_q)), best_q


# ---------------------------------------------------------------------------
# Exact 2x2 route, vectorized over leading batch axes.

def _mi_t(t, a0, b0):
    q = np.stack([t, a0 - t, b0 - t, 1.0 - a0 - b0 + t], axis=-1)
    q = np.clip(q, 0.0, None)
    pa = np.stack([a0, a0, 1 - a0, 1 - a0], axis=-1)
    pb = np.stack([b0, 1 - b0, b0, 1 - b0], axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(q > 0, q / np.where(pa * pb > 0, pa * pb, 1.0), 1.0)
        return np.maximum(np.where(q > 0, q * np.log2(r), 0.0).sum(axis=-1), 0.0)


def interval_2x2(a0, b0, cap, iters: int = 64):
    """Feasible range ``[t_lo, t_hi]`` of ``Q[0,0]`` for 2x2 couplings.

    ``a0 = P(first=0)``, ``b0 = P(second=0)``. ``I`` is convex in ``t`` with
    its zero at ``t = a0 * b0``, so each endpoint is found by bisection on the
    monotone side. Endpoints are always on the feasible side.
    """
    a0 = np.asarray(a0, dtype=float)
    b0 = np.asarray(b0, dtype=float)
    cap = np.broadcast_to(np.asarray(cap, dtype=float), np.broadcast(a0, b0).shape)
    a0, b0 = np.broadcast_arrays(a0, b0)
    t0 = a0 * b0
    if np.all(cap <= MI_TOL):
        return t0.copy(), t0.copy()
    lo_edge = np.maximum(0.0, a0 + b0 - 1.0)
    hi_edge = np.minimum(a0, b0)

    def side(edge):
        ok_edge = _mi_t(edge, a0, b0) <= cap + MI_TOL
        inner, outer = t0.copy(), edge.copy()
        for _ in range(iters):
            mid = 0.5 * (inner + outer)
            feas = _mi_t(mid, a0, b0) <= cap + MI_TOL
            inner = np.where(feas, mid, inner)
            outer = np.where(feas, outer, mid)
        return np.where(cap <= MI_TOL, t0, np.where(ok_edge, edge, inner))

    return side(lo_edge), side(hi_edge)


def coupling_from_t(t, a0, b0) -> np.ndarray:
    t, a0, b0 = np.broadcast_arrays(np.asarray(t, float), np.asarray(a0, float), np.asarray(b0, float))
    q = np.stack([np.stack([t, a0 - t], -1), np.stack([b0 - t, 1 - a0 - b0 + t], -1)], -2)
    return np.clip(q, 0.0, None)


def _slope(g):
    g = np.asarray(g, dtype=float)
    return g[..., 0, 0] - g[..., 0, 1] - g[..., 1, 0] + g[..., 1, 1]


def _offset(g, a0, b0):
    return g[..., 0, 1] * a0 + g[..., 1, 0] * b0 + g[..., 1, 1] * (1 - a0 - b0)


def band_2x2(cost, a0, b0, cap, tol: float = 0.0, t_range=None):
    """Exact batched 2x2 solve.

    Returns ``(value, t_star, band_lo, band_hi)``: the minimum of
    ``<cost, Q>``, a minimizing ``t = Q[0,0]`` and the range of ``t`` whose
    cost is within ``tol`` of the minimum.
    """
    cost = np.asarray(cost, dtype=float)
    a0 = np.asarray(a0, dtype=float)
    b0 = np.asarray(b0, dtype=float)
    t_lo, t_hi = interval_2x2(a0, b0, cap) if t_range is None else t_range
    s = _slope(cost)
    t_star = np.where(s > 0, t_lo, t_hi)
    value = _offset(cost, a0, b0) + s * t_star
    abs_s = np.abs(s)
    with np.errstate(divide="ignore"):
        reach = np.where(abs_s > 0, tol / np.where(abs_s > 0, abs_s, 1.0), np.inf)
    band_lo = np.where(s > 0, t_lo, np.maximum(t_lo, t_hi - reach))
    band_hi = np.where(s > 0, np.minimum(t_hi, t_lo + reach), t_hi)
    return value, t_star, band_lo, band_hi


def min_linear_2x2(cost, a0, b0, cap, other=None, tol: float = 0.0, t_range=None):
    """Batched 2x2 minimum, plus extremes of ``<other, Q>`` over the tie band.

    Returns ``(value, t_star, other_max, other_min)``; the last two are
    ``None`` when ``other`` is not given.
    """
    value, t_star, band_lo, band_hi = band_2x2(cost, a0, b0, cap, tol, t_range)
    if other is None:
        return value, t_star, None, None
    other = np.asarray(other, dtype=float)
    so = _slope(other)
    bo = _offset(other, a0, b0)
    e1, e2 = bo + so * band_lo, bo + so * band_hi
    return value, t_star, np.maximum(e1, e2), np.minimum(e1, e2)
