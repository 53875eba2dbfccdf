"""Random-coding ensemble simulation for codebooks too large to store.

With ``ceil(2^(nR))`` entries far beyond memory, each trial draws a fresh
codebook from the ensemble lazily. Only a handful of entries are
materialized: the one the encoder sends, entry 1 (the fallback index), and
a few extra ones. Every other entry is handled through its exact law:

* the encoder's index ``M`` is the first entry whose ``w^n`` is typical
  with ``u^n``. Entries before ``M`` are conditioned to be non-typical,
  entries after it are unconstrained, and the sent ``w^n(M)`` is drawn
  from the law of ``w^n`` conditioned on typicality.
* given a channel output ``y^n``, each anonymous entry is jointly typical
  with ``y^n`` independently with a probability computed from the
  conditional type law. The decoder's outcome (unique typical entry, or
  the fallback index 1) is therefore exact given ``y^n``.

All probabilities over joint types come from ``ConditionalTypeLaw``, so
the only Monte Carlo error is over source and channel realizations.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..channel import capacity
from ..prob import ValidationError, mi_bits
from ..scenarios.commitment import mechanism_value
from ..scenarios.instance import ProblemInstance, SolverGrid
from .codebook import entry_count
from .rng import draw_iid, stream, through_kernel
from .types import joint_counts, realize, symbol_counts, type_law, within

TIE_TOL = 1e-12


@dataclass(frozen=True)
class SchemeDesign:
    """Single-letter design of the honest block scheme."""

    q_uw: np.ndarray
    v_given_w: np.ndarray
    p_x: np.ndarray
    rate: float
    eta0: float
    target_d_e: float   # E_Q[d_e], also the encoder's single-letter value
    target_d_d: float   # E_Q[d_d]

    @property
    def p_w(self) -> np.ndarray:
        return self.q_uw.sum(axis=0)

    @property
    def info(self) -> float:
        return float(mi_bits(self.q_uw))


def design_scheme(inst: ProblemInstance, rate: float, grid: SolverGrid | None = None,
                  eta0: float | None = None) -> SchemeDesign:
    """Decoder-commitment design for a block scheme at ``rate``.

    The auxiliary joint is the mechanism witness under the tightened
    constraint ``I(U;W) <= C - 2 eta0``; ``eta0`` defaults to ``C - rate``
    so that ``rate = (C - 2 eta0) + eta0`` leaves a margin ``eta0`` for
    both covering and channel decoding.
    """
    c = inst.capacity
    if not 0 <= rate < c:
        raise ValidationError(f"rate {rate} must lie in [0, C) with C = {c:.6g}")
    eta0 = c - rate if eta0 is None else float(eta0)
    res = mechanism_value(inst, grid or SolverGrid(), eta0=eta0)
    q = np.asarray(res.q_uw, dtype=float)
    vgw = np.asarray(res.v_given_w, dtype=float)
    e = float(np.einsum("uw,wv,uv->", q, vgw, inst.d_e))
    d = float(np.einsum("uw,wv,uv->", q, vgw, inst.d_d))
    p_x = np.asarray(capacity(inst.channel).optimal_input.probs)
    return SchemeDesign(q, vgw, p_x, float(rate), eta0, e, d)


@dataclass(frozen=True)
class TrialOutcome:
    covered: bool           # some entry was typical with u^n
    decoded_ok: bool        # honest run decoded the sent index
    d_e: float              # honest realized distortions
    d_d: float
    honest_objective: float
    honest_se: float
    strategic_objective: float
    strategic_se: float
    strategic_d_e: float    # realized distortions under the strategic input
    strategic_d_d: float
    strategic_kind: str     # "sent", "entry", or "flip"
    in_q: bool              # average empirical distribution in Q_delta(R + eta2, D + mu)
    in_plus: bool           # ... in Q_delta^+(R + eta2)
    marginals_off: bool     # ... marginals more than delta away


@dataclass
class EnsembleReport:
    trials: list[TrialOutcome]
    n: int
    rate: float
    search_space: str
    candidates: int
    summary: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(t, name) for t in self.trials])


class EnsembleSimulator:
    """Honest and strategic encoders against the typicality decoder, over the code ensemble."""

    def __init__(self, inst: ProblemInstance, design: SchemeDesign, n: int, delta: float = 0.1,
                 delta_channel: float = 0.16, extra_entries: int = 6, flips: bool = True,
                 y_samples: int = 32, eta2: float = 0.05):
        if n < 1:
            raise ValidationError("n must be >= 1")
        self.inst, self.design, self.n = inst, design, int(n)
        self.delta, self.delta_channel = float(delta), float(delta_channel)
        self.extra_entries, self.flips, self.y_samples = int(extra_entries), bool(flips), int(y_samples)
        self.eta2 = float(eta2)
        self.total = entry_count(design.rate, n)
        self.channel = np.asarray(inst.channel.rows)
        self.kx, self.ky = self.channel.shape
        self.ku, self.kw = design.q_uw.shape
        self.ref_xy = design.p_x[:, None] * self.channel
        self.g_e = inst.d_e @ design.v_given_w.T  # [u, w]
        self.g_d = inst.d_d @ design.v_given_w.T
        self._src: dict = {}
        self._chan: dict = {}

    @property
    def search_space(self) -> str:
        flips = " + radius-1 flips of the sent input" if self.flips else ""
        return f"{self.extra_entries + 2} materialized codewords{flips}"

    @property
    def candidates(self) -> int:
        return self.extra_entries + 2 + (self.n * (self.kx - 1) if self.flips else 0)

    # -- exact laws -------------------------------------------------------

    def _source(self, counts_u: tuple):
        hit = self._src.get(counts_u)
        if hit is None:
            law = type_law(counts_u, self.design.p_w)
            typ = within(law.types, self.design.q_uw, self.delta)
            p = law.probability(typ)
            cost = np.tensordot(law.types, self.g_e, axes=2)
            free_cost = law.expectation(cost)
            nontyp_cost = law.expectation(cost, ~typ) if p < 1 else free_cost
            free_type = law.expected_type()
            nontyp_type = law.expected_type(~typ) if p < 1 else free_type
            hit = (law, typ, p, free_cost, nontyp_cost, free_type, nontyp_type)
            self._src[counts_u] = hit
        return hit

    def _p_typical(self, counts_y: tuple) -> float:
        p = self._chan.get(counts_y)
        if p is None:
            law = type_law(counts_y, self.design.p_x)
            p = law.probability(within(law.types, self.ref_xy.T, self.delta_channel))
            self._chan[counts_y] = p
        return p

    # -- one trial --------------------------------------------------------

    def trial(self, seed: int, index: int) -> TrialOutcome:
        rng = stream(seed, "ensemble", index)
        n, inst, des = self.n, self.inst, self.design
        u = draw_iid(rng, inst.prior, n)
        law, typ, p, free_cost, nontyp_cost, free_type, nontyp_type = self._source(tuple(symbol_counts(u, self.ku)))
        big = float(self.total)
        log_q = math.log1p(-p) if p < 1 else -math.inf
        none_prob = math.exp(big * log_q) if p > 0 else 1.0
        covered = rng.random() >= none_prob
        if covered:
            if p >= 1:
                m = 1.0
            else:
                r = rng.random()
                m = 1.0 + math.floor(math.log1p(-r * (1.0 - none_prob)) / log_q)
                m = min(max(m, 1.0), big)
            w_sent = realize(u, law.sample(rng, typ), rng)
        else:
            m = 1.0
            w_sent = realize(u, law.sample(rng, ~typ), rng)

        def nontypical_w():
            return realize(u, law.sample(rng, ~typ), rng)

        # Materialized entries: the sent one first, then entry 1, then extras.
        ws, xs, kinds = [w_sent], [draw_iid(rng, des.p_x, n)], ["sent"]
        below, above = m - 1.0, big - m
        fallback_pos = 0
        if m > 1:
            ws.append(nontypical_w())
            xs.append(draw_iid(rng, des.p_x, n))
            kinds.append("entry")
            fallback_pos = 1
            below -= 1
        for _ in range(self.extra_entries):
            if below + above < 1:
                break
            is_below = rng.random() * (below + above) < below
            if is_below:
                below -= 1
            else:
                above -= 1
            ws.append(nontypical_w() if (is_below or not covered) else draw_iid(rng, des.p_w, n))
            xs.append(draw_iid(rng, des.p_x, n))
            kinds.append("entry")
        ws, xs = np.array(ws), np.array(xs)
        anon = below + above
        f_below = below / anon if anon > 0 else 0.0
        if not covered:
            f_below = 1.0
        anon_cost = f_below * nontyp_cost + (1 - f_below) * free_cost
        anon_type = f_below * nontyp_type + (1 - f_below) * free_type
        entry_e = self.g_e[u[None, :], ws].mean(axis=1)
        entry_types = joint_counts(u[None, :], ws, self.ku, self.kw) / n

        # Candidate inputs: materialized codewords, then flips of the sent one.
        cands, cand_kinds = [xs], list(kinds)
        if self.flips:
            for t in range(n):
                for s in range(1, self.kx):
                    f = xs[0].copy()
                    f[t] = (f[t] + s) % self.kx
                    cands.append(f[None, :])
                    cand_kinds.append("flip")
        cands = np.concatenate(cands)
        noise = rng.random((self.y_samples, n))
        probs = self._outcome_probs(cands, xs, noise, anon, fallback_pos)  # [C, S, J + 1], last = anonymous
        costs = np.append(entry_e, anon_cost)
        per_sample = probs @ costs  # [C, S]
        obj = per_sample.mean(axis=1)
        se = per_sample.std(axis=1, ddof=1) / math.sqrt(self.y_samples) if self.y_samples > 1 else np.zeros(len(obj))
        best = int(np.flatnonzero(obj <= obj.min() + TIE_TOL)[0])

        # Realized runs on a fresh channel draw.
        def realize_run(x):
            y_noise = rng.random((1, n))
            pr = self._outcome_probs(x[None, :], xs, y_noise, anon, fallback_pos)[0, 0]
            j = int(np.searchsorted(np.cumsum(pr), rng.random() * pr.sum(), side="right"))
            j = min(j, len(pr) - 1)
            if j < len(ws):
                w = ws[j]
            elif rng.random() < f_below:
                w = nontypical_w()
            else:
                w = draw_iid(rng, des.p_w, n)
            v = through_kernel(des.v_given_w, w, rng.random(n))
            return j, inst.d_e[u, v].mean(), inst.d_d[u, v].mean()

        j_h, de_h, dd_h = realize_run(xs[0])
        _, de_s, dd_s = realize_run(cands[best])

        # Average empirical distribution of the strategic input.
        types = np.concatenate([entry_types, anon_type[None]])
        q_avg = np.tensordot(probs[best].mean(axis=0), types, axes=1)
        marg_off = (np.abs(q_avg.sum(axis=1) - inst.prior).sum() > self.delta
                    or np.abs(q_avg.sum(axis=0) - des.p_w).sum() > self.delta)
        info = float(mi_bits(q_avg))
        e_avg = float(np.sum(q_avg * self.g_e))
        mu = self.delta * inst.d_e_bar
        in_plus = (not marg_off) and info >= des.rate + self.eta2
        in_q = (not marg_off) and info <= des.rate + self.eta2 and e_avg <= des.target_d_e + mu
        return TrialOutcome(bool(covered), j_h == 0, float(de_h), float(dd_h), float(obj[0]), float(se[0]),
                            float(obj[best]), float(se[best]), float(de_s), float(dd_s), cand_kinds[best],
                            bool(in_q), bool(in_plus), bool(marg_off))

    def _outcome_probs(self, cands: np.ndarray, xs: np.ndarray, noise: np.ndarray, anon: float,
                       fallback: int) -> np.ndarray:
        """Decoder outcome law per candidate and noise row: materialized entries, then one anonymous slot."""
        n = self.n
        y = through_kernel(self.channel, np.broadcast_to(cands[:, None, :], (len(cands), len(noise), n)),
                           np.broadcast_to(noise, (len(cands), len(noise), n)))
        jc = joint_counts(xs[None, None, :, :], y[:, :, None, :], self.kx, self.ky) / n
        typ = within(jc, self.ref_xy, self.delta_channel)  # [C, S, J]
        count = typ.sum(axis=-1)
        cy = symbol_counts(y, self.ky).reshape(-1, self.ky)
        p_y = np.array([self._p_typical(tuple(c)) for c in map(tuple, cy)]).reshape(count.shape)
        with np.errstate(divide="ignore"):
            log_q = np.where(p_y < 1, np.log1p(-np.minimum(p_y, 1.0)), -np.inf)
            p0 = np.where(p_y > 0, np.exp(anon * log_q), 1.0)
            p1 = np.where(p_y > 0, anon * p_y * np.exp(np.maximum(anon - 1, 0.0) * log_q), 0.0)
        p1 = np.where(anon >= 1, p1, 0.0)
        out = np.zeros(count.shape + (xs.shape[0] + 1,))
        one = count == 1
        idx = typ.argmax(axis=-1)
        # Unique materialized hit and no anonymous hit; everything else falls back to index 1.
        np.put_along_axis(out, idx[..., None], np.where(one, p0, 0.0)[..., None], axis=-1)
        out[..., -1] = np.where(count == 0, p1, 0.0)
        rest = 1.0 - out.sum(axis=-1)
        out[..., fallback] += rest
        return out


def run_ensemble(sim: EnsembleSimulator, trials: int, seed: int, workers: int = 1) -> EnsembleReport:
    """Run seeded trials; results are in trial order for any worker count."""
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(lambda i: sim.trial(seed, i), range(trials)))
    else:
        out = [sim.trial(seed, i) for i in range(trials)]
    rep = EnsembleReport(out, sim.n, sim.design.rate, sim.search_space, sim.candidates)

    def mean_se(name):
        col = rep.column(name).astype(float)
        se = col.std(ddof=1) / math.sqrt(len(col)) if len(col) > 1 else math.inf
        return float(col.mean()), float(se)

    d_d, d_d_se = mean_se("d_d")
    d_e, d_e_se = mean_se("d_e")
    eps1 = 1.0 - float(rep.column("decoded_ok").mean())
    eps3 = 1.0 - float(rep.column("covered").mean())
    eps2 = max(float(rep.column("in_plus").mean()), float(rep.column("marginals_off").mean()))
    excess = rep.column("strategic_objective") - rep.column("honest_objective")
    rep.summary = {
        "d_e": d_e, "d_e_se": d_e_se, "d_d": d_d, "d_d_se": d_d_se,
        "target_d_e": sim.design.target_d_e, "target_d_d": sim.design.target_d_d,
        "decode_error": eps1, "cover_failure": eps3, "packing": eps2,
        "in_q": float(rep.column("in_q").mean()), "composite_bound": 1.0 - (eps1 + 2 * eps2 + eps3),
        "strategic_violations": int(np.sum(excess > 0)),
        "strategic_gain": float(-excess.mean()),
    }
    return rep
