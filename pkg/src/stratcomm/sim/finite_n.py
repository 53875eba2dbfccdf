"""Exact finite-horizon leader values by enumeration.

Encoder leader: ``D_e^n = inf_sigma max_{tau in BR_d(sigma)} d_e^n``.
Decoder leader: ``D_d^n = inf_tau max_{sigma in BR_e(tau)} d_d^n``.

The follower's best response separates: the decoder chooses each letter
``v_t`` from the posterior of ``u_t`` given ``y^n``, and the encoder
chooses ``x^n`` separately for each ``u^n``. Among tied replies the
follower takes the one worst for the leader, as in the single-letter
solvers; a vertex choice attains the max over mixed replies.

Two strategy classes are offered for the leader:

* ``deterministic``: every map ``U^n -> X^n`` (or ``Y^n -> V^n``), enumerated
  with an odometer over a stack of partial sums so each step only redoes
  the levels that changed. The class is closed under concatenation, so
  its values are sub-additive in ``n``.
* ``mixed``: a multi-resolution grid over the leader's kernel rows, for
  ``n = 1`` only. The value is the best grid point, an upper bound on the
  infimum over all mixed strategies.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from ..prob import ValidationError
from ..scenarios.commitment import worst_reply_batch
from ..scenarios.grid import multires_search
from ..scenarios.instance import ProblemInstance, ResourceLimitError, SolverGrid
from .profiles import channel_power
from .types import all_sequences

MAX_STRATEGIES = 1 << 25
TIE_TOL = 1e-9
IMPROVE_TOL = 1e-12


@dataclass
class FiniteNValue:
    value: float              # leader's distortion at the best strategy found
    induced: float            # the follower's own distortion there
    leader: str
    n: int
    strategy_class: str       # "deterministic" or "mixed-grid"
    leader_table: np.ndarray  # sequence-level kernel of the leader
    follower_table: np.ndarray
    evaluated: int
    grid_step: float = 0.0


def _letter_costs(d: np.ndarray, us: np.ndarray) -> np.ndarray:
    # [u^n, t, v] = d(u_t, v) / n
    return d[us] / us.shape[1]


def _sequence_costs(d: np.ndarray, us: np.ndarray, vs: np.ndarray) -> np.ndarray:
    # [u^n, v^n] = (1/n) sum_t d(u_t, v_t)
    out = np.zeros((len(us), len(vs)))
    for t in range(us.shape[1]):
        out += d[us[:, t][:, None], vs[:, t][None, :]]
    return out / us.shape[1]


@numba.njit(cache=True)
def _enc_leaf(se, sd, mass, tol):
    ny, n, kv = se.shape
    total = 0.0
    for y in range(ny):
        for t in range(n):
            lo = sd[y, t, 0]
            for v in range(1, kv):
                lo = min(lo, sd[y, t, v])
            worst = -np.inf
            for v in range(kv):
                if sd[y, t, v] <= lo + tol * mass[y] and se[y, t, v] > worst:
                    worst = se[y, t, v]
            total += worst
    return total


@numba.njit(cache=True)
def _enc_level(k, x, p_un, tn, ce, cd, se, sd, mass):
    ny = tn.shape[1]
    n, kv = ce.shape[1], ce.shape[2]
    for y in range(ny):
        w = p_un[k] * tn[x, y]
        mass[k + 1, y] = mass[k, y] + w
        for t in range(n):
            for v in range(kv):
                se[k + 1, y, t, v] = se[k, y, t, v] + w * ce[k, t, v]
                sd[k + 1, y, t, v] = sd[k, y, t, v] + w * cd[k, t, v]


@numba.njit(cache=True)
def _encoder_leader_search(p_un, tn, ce, cd, tol, improve):
    nu = p_un.size
    nx, ny = tn.shape
    n, kv = ce.shape[1], ce.shape[2]
    se = np.zeros((nu + 1, ny, n, kv))
    sd = np.zeros((nu + 1, ny, n, kv))
    mass = np.zeros((nu + 1, ny))
    digits = np.zeros(nu, dtype=np.int64)
    best_digits = digits.copy()
    for k in range(nu):
        _enc_level(k, 0, p_un, tn, ce, cd, se, sd, mass)
    best = np.inf
    count = 0
    while True:
        val = _enc_leaf(se[nu], sd[nu], mass[nu], tol)
        count += 1
        if val < best - improve:
            best = val
            best_digits[:] = digits
        j = nu - 1
        while j >= 0:
            digits[j] += 1
            if digits[j] < nx:
                break
            digits[j] = 0
            j -= 1
        if j < 0:
            break
        for k in range(j, nu):
            _enc_level(k, digits[k], p_un, tn, ce, cd, se, sd, mass)
    return best, best_digits, count


@numba.njit(cache=True)
def _dec_leaf(se, sd, p_un, tol):
    nu, nx = se.shape
    total = 0.0
    for u in range(nu):
        lo = se[u, 0]
        for x in range(1, nx):
            lo = min(lo, se[u, x])
        worst = -np.inf
        for x in range(nx):
            if se[u, x] <= lo + tol and sd[u, x] > worst:
                worst = sd[u, x]
        total += p_un[u] * worst
    return total


@numba.njit(cache=True)
def _dec_level(k, v, tn, de, dd, se, sd):
    nu = de.shape[0]
    nx = tn.shape[0]
    for u in range(nu):
        for x in range(nx):
            se[k + 1, u, x] = se[k, u, x] + tn[x, k] * de[u, v]
            sd[k + 1, u, x] = sd[k, u, x] + tn[x, k] * dd[u, v]


@numba.njit(cache=True)
def _decoder_leader_search(p_un, tn, de, dd, tol, improve):
    nx, ny = tn.shape
    nu, nv = de.shape
    se = np.zeros((ny + 1, nu, nx))
    sd = np.zeros((ny + 1, nu, nx))
    digits = np.zeros(ny, dtype=np.int64)
    best_digits = digits.copy()
    for k in range(ny):
        _dec_level(k, 0, tn, de, dd, se, sd)
    best = np.inf
    count = 0
    while True:
        val = _dec_leaf(se[ny], sd[ny], p_un, tol)
        count += 1
        if val < best - improve:
            best = val
            best_digits[:] = digits
        j = ny - 1
        while j >= 0:
            digits[j] += 1
            if digits[j] < nv:
                break
            digits[j] = 0
            j -= 1
        if j < 0:
            break
        for k in range(j, ny):
            _dec_level(k, digits[k], tn, de, dd, se, sd)
    return best, best_digits, count


def decoder_reply(inst: ProblemInstance, n: int, encoder_table: np.ndarray, tol: float = TIE_TOL):
    """Worst-for-encoder decoder best response to a sequence-level encoder.

    Returns ``(reply, d_e^n, d_d^n)`` with ``reply`` a deterministic table
    ``Y^n -> V^n``.
    """
    us = all_sequences(inst.n_u, n)
    p_un = np.prod(inst.prior[us], axis=1)
    joint = (p_un[:, None] * encoder_table) @ channel_power(np.asarray(inst.channel.rows), n)  # [u^n, y^n]
    ce = np.einsum("uy,utv->ytv", joint, _letter_costs(inst.d_e, us))
    cd = np.einsum("uy,utv->ytv", joint, _letter_costs(inst.d_d, us))
    mass = joint.sum(axis=0)
    ties = cd <= cd.min(axis=2, keepdims=True) + tol * mass[:, None, None]
    choice = np.argmax(np.where(ties, ce, -np.inf), axis=2)  # [y^n, t]
    pick = lambda a: float(np.take_along_axis(a, choice[..., None], axis=2).sum())
    seq = choice @ (inst.n_v ** np.arange(n - 1, -1, -1))
    reply = np.zeros((len(mass), inst.n_v ** n))
    reply[np.arange(len(mass)), seq] = 1.0
    return reply, pick(ce), pick(cd)


def encoder_reply(inst: ProblemInstance, n: int, decoder_table: np.ndarray, tol: float = TIE_TOL):
    """Worst-for-decoder encoder best response to a sequence-level decoder.

    Returns ``(reply, d_e^n, d_d^n)`` with ``reply`` a deterministic table
    ``U^n -> X^n``.
    """
    us = all_sequences(inst.n_u, n)
    vs = all_sequences(inst.n_v, n)
    p_un = np.prod(inst.prior[us], axis=1)
    tn = channel_power(np.asarray(inst.channel.rows), n)
    se = _sequence_costs(inst.d_e, us, vs) @ decoder_table.T @ tn.T  # [u^n, x^n]
    sd = _sequence_costs(inst.d_d, us, vs) @ decoder_table.T @ tn.T
    ties = se <= se.min(axis=1, keepdims=True) + tol
    choice = np.argmax(np.where(ties, sd, -np.inf), axis=1)
    rows = np.arange(len(us))
    reply = np.zeros_like(se)
    reply[rows, choice] = 1.0
    return reply, float(p_un @ se[rows, choice]), float(p_un @ sd[rows, choice])


def _deterministic(inst: ProblemInstance, n: int, leader: str, tol: float) -> FiniteNValue:
    ku, kx = inst.n_u, inst.channel.shape[0]
    ky, kv = inst.channel.shape[1], inst.n_v
    digits_n, options = (ku ** n, kx ** n) if leader == "encoder" else (ky ** n, kv ** n)
    total = options ** digits_n
    if total > MAX_STRATEGIES:
        raise ResourceLimitError(f"{options}^{digits_n} deterministic strategies exceed the cap of {MAX_STRATEGIES}")
    us = all_sequences(ku, n)
    p_un = np.prod(inst.prior[us], axis=1)
    tn = channel_power(np.asarray(inst.channel.rows), n)
    if leader == "encoder":
        ce = np.ascontiguousarray(_letter_costs(inst.d_e, us))
        cd = np.ascontiguousarray(_letter_costs(inst.d_d, us))
        value, digits, count = _encoder_leader_search(p_un, tn, ce, cd, tol, IMPROVE_TOL)
        table = np.eye(options)[digits]
        follower, d_e, d_d = decoder_reply(inst, n, table, tol)
        induced = d_d
        check = d_e
    else:
        vs = all_sequences(kv, n)
        de = _sequence_costs(inst.d_e, us, vs)
        dd = _sequence_costs(inst.d_d, us, vs)
        value, digits, count = _decoder_leader_search(p_un, tn, de, dd, tol, IMPROVE_TOL)
        table = np.eye(options)[digits]
        follower, d_e, d_d = encoder_reply(inst, n, table, tol)
        induced = d_e
        check = d_d
    if abs(check - value) > 1e-9:
        raise RuntimeError(f"enumeration value {value} disagrees with the witness evaluation {check}")
    return FiniteNValue(float(value), induced, leader, n, "deterministic", table, follower, int(count))


def _mixed_n1(inst: ProblemInstance, leader: str, grid: SolverGrid, tol: float) -> FiniteNValue:
    p_u = inst.prior
    t = np.asarray(inst.channel.rows)
    kx, ky = t.shape
    if leader == "encoder":
        def evaluate(rows):
            q = p_u[None, :, None] * (np.stack(rows, axis=1) @ t)  # [batch, u, y]
            _, e_val, d_val = worst_reply_batch(q, inst.d_d, inst.d_e, tol)
            return {"value": e_val, "induced": d_val}

        res = multires_search([kx] * inst.n_u, evaluate, grid)
        table = np.stack(res.point)
        follower, d_e, d_d = decoder_reply(inst, 1, table, tol)
        value, induced = d_e, d_d
    else:
        def evaluate(rows):
            tau = np.stack(rows, axis=1)  # [batch, y, v]
            se = np.einsum("xy,byv,uv->bux", t, tau, inst.d_e)
            sd = np.einsum("xy,byv,uv->bux", t, tau, inst.d_d)
            ties = se <= se.min(axis=2, keepdims=True) + tol
            worst = np.where(ties, sd, -np.inf).max(axis=2)
            pick = np.argmax(np.where(ties, sd, -np.inf), axis=2)
            e_val = np.take_along_axis(se, pick[..., None], axis=2)[..., 0]
            return {"value": worst @ p_u, "induced": e_val @ p_u}

        res = multires_search([inst.n_v] * ky, evaluate, grid)
        table = np.stack(res.point)
        follower, d_e, d_d = encoder_reply(inst, 1, table, tol)
        value, induced = d_d, d_e
    return FiniteNValue(float(value), float(induced), leader, 1, "mixed-grid", table, follower,
                        res.evaluated, res.step)


def finite_n_game_value(inst: ProblemInstance, n: int, leader: str, strategies: str = "auto",
                        grid: SolverGrid | None = None, tol: float = TIE_TOL) -> FiniteNValue:
    """Leader value at blocklength ``n`` over the declared strategy class.

    ``strategies="auto"`` uses the mixed grid at ``n = 1`` and the
    deterministic class for ``n >= 2``.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    if leader not in ("encoder", "decoder"):
        raise ValidationError(f"leader must be 'encoder' or 'decoder', got {leader!r}")
    if strategies == "auto":
        strategies = "mixed" if n == 1 else "deterministic"
    if strategies == "mixed":
        if n != 1:
            raise ValidationError("the mixed-strategy grid is offered for n = 1 only")
        return _mixed_n1(inst, leader, grid or SolverGrid(), tol)
    if strategies != "deterministic":
        raise ValidationError(f"unknown strategy class {strategies!r}")
    return _deterministic(inst, n, leader, tol)
