import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stratcomm.channel import CapacityError, bsc, capacity, h2, info_constraint_slack
from stratcomm.prob import JointDistribution, Kernel, mutual_information


def bsc_capacity(p):
    # closed form 1 - h2(p)
    return 1.0 if p in (0.0, 1.0) else 1 + p * math.log2(p) + (1 - p) * math.log2(1 - p)


def test_capacity_examples():
    r = capacity(Kernel.identity(2))
    assert r.capacity == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(r.optimal_input.probs, [0.5, 0.5])
    assert capacity(bsc(0.5)).capacity == 0.0
    assert round(bsc_capacity(0.1), 4) == 0.5310
    assert capacity(bsc(0.1), tol=1e-9).capacity == pytest.approx(bsc_capacity(0.1), abs=1e-9)


def test_asymmetric_channel_residual_and_bounds():
    z = Kernel([[1.0, 0.0], [0.3, 0.7]])  # Z channel
    r = capacity(z, tol=1e-10)
    assert r.residual < 1e-10
    assert r.lower <= r.capacity <= r.upper
    # optimal input re-evaluated by the MI routine
    joint = r.optimal_input.probs[:, None] * z.rows
    assert mutual_information(joint) == pytest.approx(r.capacity, abs=1e-9)


def test_zero_columns_are_dropped():
    t = np.array([[0.9, 0.0, 0.1], [0.2, 0.0, 0.8]])
    assert capacity(t).capacity == pytest.approx(capacity(t[:, [0, 2]]).capacity, abs=1e-12)


def test_nonconvergence_reports_bounds():
    with pytest.raises(CapacityError) as exc:
        capacity(Kernel([[1.0, 0.0], [0.3, 0.7]]), tol=1e-15, max_iter=5)
    assert exc.value.lower <= exc.value.upper


kernels = st.integers(2, 4).flatmap(lambda m: st.integers(2, 4).flatmap(
    lambda k: st.lists(st.lists(st.floats(0.01, 1), min_size=k, max_size=k), min_size=m, max_size=m)))


@given(kernels, st.randoms())
@settings(max_examples=40, deadline=None)
def test_capacity_permutation_invariance_and_range(rows, r):
    t = np.array(rows)
    t /= t.sum(1, keepdims=True)
    c = capacity(t).capacity
    pr = list(range(t.shape[0])); r.shuffle(pr)
    pc = list(range(t.shape[1])); r.shuffle(pc)
    assert capacity(t[np.ix_(pr, pc)]).capacity == pytest.approx(c, abs=2e-9)
    assert 0 <= c <= math.log2(min(t.shape)) + 1e-12


@given(st.floats(0, 0.5), st.floats(0, 0.5))
@settings(max_examples=30, deadline=None)
def test_cascade_never_exceeds_original(p, q):
    cascade = bsc(p).rows @ bsc(q).rows
    assert capacity(cascade).capacity <= capacity(bsc(p)).capacity + 1e-9


def test_slack_examples():
    prod = JointDistribution.product([0.3, 0.7], [0.5, 0.5])
    assert info_constraint_slack(prod, 0.42) == pytest.approx(0.42)
    ident = JointDistribution(np.diag([0.5, 0.5]))
    assert info_constraint_slack(ident, 1.0) == pytest.approx(0.0, abs=1e-15)
    c = round(bsc_capacity(0.1), 3)
    assert info_constraint_slack(ident, c) == pytest.approx(-0.469, abs=1e-12)
    assert h2(0.5) == 1.0
