import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from stratcomm import coupling
from stratcomm.channel import bsc, h2
from stratcomm.prob import ValidationError, mi_bits
from stratcomm.scenarios import (
    ProblemInstance, ResourceLimitError, SolverGrid, certify, cooperative_region, distortion_rate,
    mechanism_value, nash_set, pareto_front, persuasion_value, subadditivity_check,
)
from stratcomm.scenarios.grid import local_points, multires_search, simplex_count, simplex_points

HAMMING = 1.0 - np.eye(2)
USELESS = np.full((2, 2), 0.5)
WANTS_1 = np.array([[1.0, 0.0], [1.0, 0.0]])  # encoder loses whenever the decoder plays 0
MIXED_E = np.array([[0.2, 0.9], [0.7, 0.1]])
MIXED_D = np.array([[0.0, 1.0], [0.8, 0.3]])


def crossover_for(cap):
    return 0.0 if cap >= 1 else brentq(lambda x: 1 - h2(x) - cap, 1e-12, 0.5)


def inst_of(p_u0, d_e, d_d, p):
    return ProblemInstance(np.array([p_u0, 1 - p_u0]), bsc(p).rows, d_e, d_d)


def prior_best(inst):
    """Closed form: decoder's prior-optimal action, ties broken against the encoder."""
    cost_d = inst.prior @ inst.d_d
    ties = np.flatnonzero(cost_d <= cost_d.min() + 1e-9)
    v = ties[np.argmax((inst.prior @ inst.d_e)[ties])]
    return float(inst.prior @ inst.d_e[:, v]), float(inst.prior @ inst.d_d[:, v])


def random_binary(rng, aligned=False):
    d_e = rng.random((2, 2))
    d_d = d_e if aligned else rng.random((2, 2))
    return inst_of(rng.uniform(0.05, 0.95), d_e, d_d, rng.uniform(0.0, 0.5))


# --- grid plumbing -----------------------------------------------------------

@pytest.mark.parametrize("k,res", [(1, 5), (2, 4), (3, 4), (4, 3)])
def test_simplex_points(k, res):
    pts = simplex_points(k, res)
    assert len(pts) == simplex_count(k, res) == len({tuple(p) for p in np.round(pts * res).astype(int)})
    np.testing.assert_allclose(pts.sum(axis=1), 1.0)
    assert pts.min() >= 0


def test_local_points_stay_on_simplex():
    pts = local_points(np.array([0.02, 0.5, 0.48]), 0.01, 3)
    np.testing.assert_allclose(pts.sum(axis=1), 1.0)
    assert pts.min() >= 0 and len(pts) < 49
    assert any(np.allclose(p, [0.02, 0.5, 0.48]) for p in pts)


def test_search_is_independent_of_worker_count():
    target = np.array([0.123, 0.456, 0.421])

    def evaluate(rows):
        return {"value": np.abs(rows[0] - target).sum(axis=1) + 0.1 * np.abs(rows[1][:, 0] - 0.3)}

    runs = [multires_search([3, 2], evaluate, SolverGrid(resolution=20, chunk=7, workers=w)) for w in (1, 2, 8)]
    for r in runs[1:]:
        assert r.value == runs[0].value and r.evaluated == runs[0].evaluated
        for a, b in zip(r.point, runs[0].point):
            np.testing.assert_array_equal(a, b)
    assert runs[0].value < 2e-3


def test_resource_limit():
    inst = ProblemInstance(np.full(3, 1 / 3), np.eye(3), 1 - np.eye(3), 1 - np.eye(3))
    with pytest.raises(ResourceLimitError):
        persuasion_value(inst, SolverGrid(resolution=50, max_cells=10_000))


def test_solver_grid_validation():
    with pytest.raises(ValidationError):
        SolverGrid(resolution=1)
    with pytest.raises(ValidationError):
        SolverGrid(refine_depth=-1)


def test_instance_validation():
    with pytest.raises(ValidationError):
        ProblemInstance(np.array([0.5, 0.5]), np.eye(2), np.ones((3, 2)), np.ones((3, 2)))
    with pytest.raises(ValidationError):
        ProblemInstance(np.array([0.5, 0.5]), np.eye(2), np.ones((2, 2)), np.ones((2, 3)))
    with pytest.raises(ValidationError):
        ProblemInstance(np.array([0.5, 0.5]), np.eye(2), np.array([[0, np.inf], [1, 1]]), np.ones((2, 2)))


# --- cooperative region --------------------------------------------------------

@pytest.mark.parametrize("cap", [0.05, 0.2, 0.531, 0.8, 0.99])
def test_distortion_rate_binary_hamming(cap):
    # Numeric inverse of the binary entropy as oracle: D = h2^{-1}(1 - R).
    expected = brentq(lambda x: h2(x) - (1 - cap), 1e-15, 0.5)
    assert distortion_rate(np.array([0.5, 0.5]), HAMMING, cap).distortion == pytest.approx(expected, abs=1e-8)


def test_distortion_rate_bsc01_example():
    # Rate 1 - h2(0.1) = 0.531 gives back crossover 0.1.
    cap = 1 - h2(0.1)
    assert distortion_rate(np.array([0.5, 0.5]), HAMMING, cap).distortion == pytest.approx(0.1, abs=1e-8)
    inst = inst_of(0.5, HAMMING, HAMMING, 0.1)
    assert cooperative_region(inst, SolverGrid(resolution=20)).min_d_d == pytest.approx(0.1, abs=1e-8)


@pytest.mark.parametrize("seed", range(3))
def test_distortion_rate_matches_coupling_route(seed):
    # Independent route: minimize over the output marginal on a fine grid,
    # solving the fixed-marginal problem exactly for each one.
    rng = np.random.default_rng(seed)
    p_u, d, cap = rng.dirichlet([2, 2]), rng.random((2, 3)), rng.uniform(0.05, 0.5)
    pv = simplex_points(3, 40)
    best = min(coupling.min_linear_coupling(d, p_u, q, cap).value for q in pv if q.min() > 0)
    got = distortion_rate(p_u, d, cap)
    assert got.distortion <= best + 1e-9
    assert got.distortion == pytest.approx(best, abs=0.02)
    assert mi_bits(p_u[:, None] * got.kernel) <= cap + 1e-9


def test_distortion_rate_zero_and_full_capacity():
    p_u, d = np.array([0.3, 0.7]), np.array([[0.1, 0.8], [0.6, 0.2]])
    assert distortion_rate(p_u, d, 0.0).distortion == pytest.approx(min(p_u @ d))
    assert distortion_rate(p_u, d, 1.0).distortion == pytest.approx(p_u @ d.min(axis=1))


def test_cooperative_zero_capacity_is_product_hull():
    inst = inst_of(0.3, MIXED_E, MIXED_D, 0.5)
    region = cooperative_region(inst, SolverGrid(resolution=20))
    cols = np.stack([inst.prior @ inst.d_e, inst.prior @ inst.d_d], axis=1)  # two vertices
    # Every feasible pair lies on the segment between the column expectations.
    for e, d in region.cloud:
        lam = (e - cols[1, 0]) / (cols[0, 0] - cols[1, 0])
        assert -1e-12 <= lam <= 1 + 1e-12
        assert d == pytest.approx(lam * cols[0, 1] + (1 - lam) * cols[1, 1], abs=1e-12)
    assert region.min_d_d == pytest.approx(cols[:, 1].min())


def test_cooperative_noiseless_contains_origin():
    region = cooperative_region(inst_of(0.5, HAMMING, HAMMING, 0.0), SolverGrid(resolution=10))
    assert np.any(np.all(np.abs(region.cloud) < 1e-12, axis=1))
    assert region.min_d_e == pytest.approx(0.0, abs=1e-12)


def test_cooperative_envelope_and_frontier():
    inst = inst_of(0.4, MIXED_E, MIXED_D, 0.15)
    region = cooperative_region(inst, SolverGrid(resolution=30))
    front = np.array([[p.d_e, p.d_d] for p in region.frontier])
    assert np.all(np.diff(front[:, 0]) >= 0) and np.all(np.diff(front[:, 1]) < 0)
    for lam, value in region.envelope:
        scal = lam * region.cloud[:, 0] + (1 - lam) * region.cloud[:, 1]
        assert value <= scal.min() + 1e-9
        assert value >= scal.min() - 0.05
    for p in region.envelope_points:
        assert mi_bits(inst.prior[:, None] * p.witness["kernel"]) <= inst.capacity + 1e-9


def test_pareto_front_example():
    pts = np.array([[0.0, 1.0], [0.5, 0.5], [0.6, 0.6], [1.0, 0.0], [0.5, 0.7]])
    assert pareto_front(pts).tolist() == [0, 1, 3]


# --- persuasion ---------------------------------------------------------------

# Brute-force split values at resolution 2e-4 from tests/oracles/persuasion_splits.py,
# keyed by (P(U=1), d_e, d_d, capacity as BSC crossover or 1 bit).
PERSUASION_ORACLE = [
    (0.5, WANTS_1, HAMMING, 1.0, 0.0003998400639744215),
    (0.3, WANTS_1, HAMMING, 1.0, 0.4002399040383846),
    (0.3, WANTS_1, HAMMING, 1 - h2(0.3), 0.5443175638934203),
    (0.6, np.eye(2), HAMMING, 1 - h2(0.1), 0.5999999999999999),
    (0.45, MIXED_E, MIXED_D, 1 - h2(0.2), 0.27995549368727746),
]


@pytest.mark.parametrize("mu1,d_e,d_d,cap,oracle", PERSUASION_ORACLE)
def test_persuasion_matches_split_oracle(mu1, d_e, d_d, cap, oracle):
    inst = inst_of(1 - mu1, d_e, d_d, crossover_for(cap))
    res = persuasion_value(inst, SolverGrid())
    assert abs(res.value - oracle) <= res.bracket.width


@pytest.mark.parametrize("mu1,cap,inf_value", [
    (0.5, 1.0, 0.0),
    (0.3, 1.0, 0.4),                      # split {0, 1/2}
    (0.3, 1 - h2(0.3), 0.5437224637781981),  # split {a, 1/2} with I(U;W) = C, a from brentq
])
def test_persuasion_brackets_known_infimum(mu1, cap, inf_value):
    res = persuasion_value(inst_of(1 - mu1, WANTS_1, HAMMING, crossover_for(cap)), SolverGrid())
    assert res.bracket.lower - 1e-12 <= inf_value <= res.bracket.upper + 1e-12


@pytest.mark.parametrize("seed", range(4))
def test_persuasion_zero_capacity_is_prior_best(seed):
    rng = np.random.default_rng(seed)
    inst = ProblemInstance(rng.dirichlet([1, 1]), USELESS, rng.random((2, 2)), rng.random((2, 2)))
    assert inst.capacity == 0.0
    res = persuasion_value(inst, SolverGrid(resolution=20, refine_depth=1))
    e0, d0 = prior_best(inst)
    assert res.value == pytest.approx(e0, abs=1e-9)
    assert res.induced == pytest.approx(d0, abs=1e-9)


def test_persuasion_zero_capacity_tie_goes_against_encoder():
    # Both actions tie for the decoder under the prior; the encoder gets the worse one.
    inst = ProblemInstance(np.array([0.5, 0.5]), USELESS, np.array([[0.0, 1.0], [0.0, 1.0]]), HAMMING)
    assert persuasion_value(inst, SolverGrid(resolution=10, refine_depth=0)).value == pytest.approx(1.0)


def test_persuasion_witness_is_consistent():
    from stratcomm.best_response import expected_distortion, worst_case_decoder_reply
    inst = inst_of(0.45, MIXED_E, MIXED_D, 0.2)
    res = persuasion_value(inst, SolverGrid())
    assert res.q_uw.shape == (2, inst.n_w)
    np.testing.assert_allclose(res.q_uw.sum(axis=1), inst.prior)
    assert mi_bits(res.q_uw) <= inst.capacity + 1e-12
    reply = worst_case_decoder_reply(res.q_uw, inst.d_d, inst.d_e).rows
    assert expected_distortion(res.q_uw, reply, inst.d_e) == pytest.approx(res.value, abs=1e-12)
    assert expected_distortion(res.q_uw, reply, inst.d_d) == pytest.approx(res.induced, abs=1e-12)


def test_persuasion_with_three_actions():
    inst = ProblemInstance(np.array([0.5, 0.5]), bsc(0.1).rows,
                           np.array([[0.0, 1.0, 0.3], [1.0, 0.0, 0.3]]), np.array([[0.0, 1.0, 0.2], [1.0, 0.0, 0.2]]))
    grid = SolverGrid(resolution=12, refine_depth=1, refine_factor=3)
    res = persuasion_value(inst, grid)
    assert res.q_uw.shape == (2, 3)
    coop = cooperative_region(inst, SolverGrid(resolution=12)).min_d_e
    assert res.value >= coop - res.bracket.width


# --- mechanism ----------------------------------------------------------------

# Exhaustive 0.01-grid values from tests/oracles/mechanism_grid.py.
MECHANISM_ORACLE = [
    (0.4, np.eye(2), HAMMING, 0.1, 0.4),
    (0.55, MIXED_E, MIXED_D, 0.2, 0.2530434491983023),
    (0.3, np.array([[0.0, 1.0], [0.0, 1.0]]), HAMMING, 0.05, 0.3),
]


@pytest.mark.parametrize("p_u0,d_e,d_d,p,oracle", MECHANISM_ORACLE)
def test_mechanism_matches_grid_oracle(p_u0, d_e, d_d, p, oracle):
    res = mechanism_value(inst_of(p_u0, d_e, d_d, p), SolverGrid())
    # Our refinement reaches at least the oracle's grid quality ...
    assert res.value <= oracle + res.bracket.width
    # ... and the oracle grid (step 0.01) is within its own Lipschitz slack of us.
    assert oracle <= res.value + 0.01 * 4 + 1e-12


@pytest.mark.parametrize("seed", range(4))
def test_mechanism_zero_capacity_is_prior_best(seed):
    rng = np.random.default_rng(10 + seed)
    inst = ProblemInstance(rng.dirichlet([1, 1]), USELESS, rng.random((2, 2)), rng.random((2, 2)))
    res = mechanism_value(inst, SolverGrid(resolution=20, refine_depth=1))
    assert res.value == pytest.approx(min(inst.prior @ inst.d_d), abs=1e-9)


def test_mechanism_eta0():
    inst = inst_of(0.55, MIXED_E, MIXED_D, 0.2)
    grid = SolverGrid(resolution=20, refine_depth=1)
    base = mechanism_value(inst, grid)
    tight = mechanism_value(inst, grid, eta0=0.05)
    assert mi_bits(tight.q_uw) <= inst.capacity - 0.1 + 1e-9
    assert tight.value >= base.value - base.bracket.width - tight.bracket.width - 0.05
    with pytest.raises(ValidationError):
        mechanism_value(inst, grid, eta0=inst.capacity)


def test_mechanism_witness_is_feasible():
    inst = inst_of(0.55, MIXED_E, MIXED_D, 0.2)
    res = mechanism_value(inst, SolverGrid())
    np.testing.assert_allclose(res.q_uw.sum(axis=1), inst.prior, atol=1e-12)
    assert mi_bits(res.q_uw) <= inst.capacity + 1e-9
    assert float(np.sum(res.q_uw * (inst.d_d @ res.v_given_w.T))) == pytest.approx(res.value, abs=1e-9)


def test_mechanism_general_route_small_grid():
    # |W| = 3 forces the per-cell convex solve; compare with the cooperative bound only.
    inst = ProblemInstance(np.array([0.5, 0.5]), bsc(0.1).rows,
                           np.array([[0.0, 1.0, 0.4], [1.0, 0.0, 0.4]]), np.array([[0.0, 1.0, 0.5], [1.0, 0.0, 0.5]]))
    grid = SolverGrid(resolution=2, refine_depth=0, max_cells=10_000_000)
    res = mechanism_value(inst, grid)
    coop = cooperative_region(inst, SolverGrid(resolution=10)).min_d_d
    assert res.value >= coop - 1e-9
    assert res.value <= min(inst.prior @ inst.d_d) + 1e-9


# --- aligned interests and leader dominance ---------------------------------

@pytest.mark.parametrize("seed", range(3))
def test_aligned_interests_collapse(seed):
    inst = random_binary(np.random.default_rng(100 + seed), aligned=True)
    grid = SolverGrid()
    coop = distortion_rate(inst.prior, inst.d_e, inst.capacity).distortion
    pv, mv = persuasion_value(inst, grid), mechanism_value(inst, grid)
    assert abs(pv.value - coop) <= pv.bracket.width
    assert abs(mv.value - coop) <= mv.bracket.width
    assert abs(pv.value - mv.value) <= pv.bracket.width + mv.bracket.width


@pytest.mark.parametrize("seed", range(3))
def test_leader_never_beats_cooperation(seed):
    inst = random_binary(np.random.default_rng(200 + seed))
    grid = SolverGrid(resolution=30, refine_depth=1)
    pv, mv = persuasion_value(inst, grid), mechanism_value(inst, grid)
    assert pv.value >= distortion_rate(inst.prior, inst.d_e, inst.capacity).distortion - pv.bracket.width
    assert mv.value >= distortion_rate(inst.prior, inst.d_d, inst.capacity).distortion - mv.bracket.width


# --- nash ---------------------------------------------------------------------

def independent_slacks(inst, wgu, vgw):
    """Re-verify with the general coupling solver's lower bound and explicit deterministic replies."""
    q = inst.prior[:, None] * wgu
    g, h = inst.d_e @ vgw.T, inst.d_d @ vgw.T
    e, d = float(np.sum(q * g)), float(np.sum(q * h))
    enc = coupling.min_linear_coupling(g, inst.prior, q.sum(axis=0), inst.capacity).lower_bound
    dec = min(float(np.sum(q * inst.d_d[:, list(r)])) for r in np.ndindex(*(inst.n_v,) * inst.n_w))
    return mi_bits(q), e - enc, d - dec


def test_nash_matches_exhaustive_oracle():
    # tests/oracles/nash_grid.py: 67 cells at resolution 10, eps 0.01, none within 1e-6 of eps.
    inst = inst_of(0.4, np.eye(2), HAMMING, 0.1)
    ns = nash_set(inst, 0.01, SolverGrid(resolution=10))
    grid_pts = ns.pairs[ns.source == "grid"]
    assert len(grid_pts) == 67
    np.testing.assert_allclose(grid_pts.min(axis=0), [0.592, 0.4], atol=1e-12)
    np.testing.assert_allclose(grid_pts.max(axis=0), [0.6, 0.408], atol=1e-12)


def test_nash_points_reverify():
    inst = inst_of(0.4, np.eye(2), HAMMING, 0.1)
    ns = nash_set(inst, 0.01, SolverGrid(resolution=8))
    assert len(ns) > 0 and np.all(ns.slacks <= 0.01)
    for wgu, vgw in zip(ns.w_given_u, ns.v_given_w):
        info, se, sd = independent_slacks(inst, wgu, vgw)
        assert info <= inst.capacity + 1e-9 and se <= 0.01 and sd <= 0.01


def test_babbling_is_exact_equilibrium():
    inst = inst_of(0.35, MIXED_E, MIXED_D, 0.2)
    ns = nash_set(inst, 0.0, SolverGrid(resolution=4), dynamics_starts=2)
    assert (ns.babbling.d_e, ns.babbling.d_d) == pytest.approx(prior_best(inst), abs=1e-12)
    assert "babbling" in set(ns.source)


def test_nash_zero_capacity_babbling():
    inst = ProblemInstance(np.array([0.3, 0.7]), USELESS, MIXED_E, MIXED_D)
    ns = nash_set(inst, 0.01, SolverGrid(resolution=6), dynamics_starts=2)
    assert (ns.babbling.d_e, ns.babbling.d_d) == pytest.approx(prior_best(inst), abs=1e-9)


def test_nash_aligned_contains_cooperative_optimum():
    inst = inst_of(0.5, HAMMING, HAMMING, 0.0)
    ns = nash_set(inst, 0.01, SolverGrid(resolution=10))
    assert np.any(np.all(np.abs(ns.pairs) < 1e-12, axis=1))


def test_certify_rejects_infeasible_information():
    inst = inst_of(0.5, HAMMING, HAMMING, 0.3)
    feas, *_ = certify(inst, np.eye(2)[None], np.eye(2)[None])
    assert not feas[0]


# --- sub-additivity -------------------------------------------------------------

def test_subadditivity_examples():
    assert subadditivity_check({1: 0.3, 2: 0.3, 3: 0.3, 4: 0.3})
    rep = subadditivity_check({1: 0.5, 2: 0.4})
    assert rep.ok and rep.checked == [(1, 1)]
    bad = subadditivity_check({1: 0.3, 2: 0.4})
    assert not bad.ok and bad.violations[0][:2] == (1, 1)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=4))
@settings(max_examples=50, deadline=None)
def test_subadditivity_holds_for_running_averages_of_minima(xs):
    # n * D^n = min over concatenations is sub-additive by construction.
    best = {1: xs[0]}
    for n in range(2, 6):
        best[n] = min((i * best[i] + (n - i) * best[n - i]) / n for i in range(1, n))
        if n - 1 < len(xs):
            best[n] = min(best[n], xs[n - 1])
    assert subadditivity_check(best)
