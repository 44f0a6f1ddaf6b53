import math

import numpy as np
import pytest
from conftest import LN3, market
from hypothesis import given, settings
from hypothesis import strategies as st

from matchburn import (NotSmoothError, ShockSpec, ValidationError, demand_alpha, gen_instance,
                       make_provider, solve_constrained, solve_constrained_logit)


def one_by_one():
    return market([[0.0]], [[0.0]], [1.0], [1.0])


@pytest.mark.parametrize("solve", ["gs", "logit"])
def test_binding_capacity(solve):
    prov = make_provider(one_by_one(), "alpha")
    sol = (solve_constrained(prov, [[0.25]], tol=1e-13) if solve == "gs"
           else solve_constrained_logit(prov, [[0.25]]))
    assert sol.outside[0] == pytest.approx(0.75, abs=1e-12)
    assert sol.demand[0, 0] == pytest.approx(0.25, abs=1e-12)
    assert sol.tau[0, 0] == pytest.approx(LN3, abs=1e-10)
    assert sol.rho[0, 0] == 0.0


@pytest.mark.parametrize("solve", ["gs", "logit"])
def test_slack_capacity(solve):
    prov = make_provider(one_by_one(), "alpha")
    sol = (solve_constrained(prov, [[10.0]], tol=1e-13) if solve == "gs"
           else solve_constrained_logit(prov, [[10.0]]))
    assert sol.outside[0] == pytest.approx(0.5, abs=1e-12)
    assert sol.tau[0, 0] == 0.0
    assert sol.rho[0, 0] == pytest.approx(9.5, abs=1e-12)


def test_capacity_equal_to_free_demand():
    sol = solve_constrained(make_provider(one_by_one(), "alpha"), [[0.5]], tol=1e-13)
    assert abs(sol.theta[0, 0]) <= 1e-10


def test_exact_solve_is_exact_on_binding_example():
    sol = solve_constrained_logit(one_by_one(), [[0.25]])
    assert sol.outside[0] == 0.75


def test_no_binding_constraint_is_plain_logit():
    spec = gen_instance(3, 4, seed=3)
    sol = solve_constrained_logit(spec, np.full(spec.shape, 1e6))
    plain, outside = demand_alpha(spec, np.zeros(spec.shape))
    np.testing.assert_allclose(sol.outside, spec.n / (1 + np.exp(spec.alpha).sum(axis=1)),
                               rtol=1e-14)
    np.testing.assert_allclose(sol.demand, plain, rtol=1e-12)
    assert np.all(sol.tau == 0.0)


def test_two_segments_one_binding():
    spec = market([[0.0, 0.0]], [[0.0, 0.0]], [1.0], [1.0, 1.0])
    for sol in (solve_constrained_logit(spec, [[0.1, 10.0]]),
                solve_constrained(make_provider(spec, "alpha"), [[0.1, 10.0]], tol=1e-13)):
        assert sol.outside[0] == pytest.approx(0.45, abs=1e-12)
        np.testing.assert_allclose(sol.demand, [[0.1, 0.45]], atol=1e-12)
        assert sol.tau[0, 0] == pytest.approx(math.log(4.5), abs=1e-10)
        assert sol.tau[0, 1] == 0.0


def test_gamma_side_orientation():
    spec = gen_instance(3, 2, seed=9)
    cap = np.random.default_rng(0).uniform(0.05, 0.5, spec.shape)
    a = solve_constrained_logit(spec, cap, side="gamma")
    b = solve_constrained(make_provider(spec, "gamma"), cap, tol=1e-13)
    assert a.theta.shape == spec.shape
    np.testing.assert_allclose(a.demand, b.demand, atol=1e-10)
    np.testing.assert_allclose(a.theta, b.theta, atol=1e-8)


def test_capacity_must_be_positive():
    with pytest.raises(ValidationError, match="strictly positive"):
        solve_constrained_logit(one_by_one(), [[0.0]])
    with pytest.raises(ValidationError, match="shape"):
        solve_constrained_logit(one_by_one(), [[1.0, 1.0]])


def test_logit_solver_rejects_other_shocks():
    spec = one_by_one().with_shocks(ShockSpec("iid", family="normal"))
    with pytest.raises(ValidationError, match="logit"):
        solve_constrained_logit(spec, [[0.5]])


def test_sampled_shocks_rejected():
    spec = one_by_one().with_shocks(ShockSpec("montecarlo", family="gumbel", draws=10_000))
    with pytest.raises(NotSmoothError):
        solve_constrained(make_provider(spec, "alpha"), [[0.5]])


def test_trace_is_monotone():
    spec = gen_instance(3, 3, seed=12)
    cap = np.full(spec.shape, 0.2)
    sol = solve_constrained(make_provider(spec, "alpha"), cap, tol=1e-10, trace=True)
    tr = sol.diagnostics["trace"]
    assert len(tr) >= 2
    for a, b in zip(tr, tr[1:]):
        assert np.all(b >= a)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31),
       st.sampled_from(["alpha", "gamma"]))
def test_exact_and_iterative_agree(nx, ny, seed, side):
    spec = gen_instance(nx, ny, seed=seed)
    cap = np.random.default_rng(seed).uniform(0.02, 1.5, spec.shape)
    exact = solve_constrained_logit(spec, cap, side=side)
    gs = solve_constrained(make_provider(spec, side), cap, tol=1e-12)
    assert np.max(np.abs(exact.demand - gs.demand)) <= 1e-8
    # complementarity holds exactly
    assert np.all(np.minimum(exact.tau, exact.rho) == 0.0)
    assert np.all(np.minimum(gs.tau, gs.rho) == 0.0)
    np.testing.assert_allclose(exact.demand + exact.rho, cap, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**31))
def test_theta_decreasing_in_capacity(nx, ny, seed):
    spec = gen_instance(nx, ny, seed=seed)
    rng = np.random.default_rng(seed)
    cap = rng.uniform(0.05, 1.0, spec.shape)
    more = cap + rng.uniform(0.0, 0.5, spec.shape)
    lo = solve_constrained_logit(spec, cap)
    hi = solve_constrained_logit(spec, more)
    assert np.all(hi.theta <= lo.theta + 1e-12)


def test_normal_shocks_feasible():
    spec = gen_instance(3, 3, seed=4, shocks=ShockSpec("iid", family="normal"))
    cap = np.full(spec.shape, 0.15)
    sol = solve_constrained(make_provider(spec, "alpha"), cap, tol=1e-11)
    np.testing.assert_allclose(sol.demand + sol.rho, cap, atol=1e-9)
    assert np.all(sol.demand <= cap + 1e-9)
