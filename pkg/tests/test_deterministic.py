from fractions import Fraction

import numpy as np
import pytest
from conftest import market
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from matchburn import (DeterministicOutcome, IndividualMarket, IndividualMatching,
                       ValidationError, aggregate_outcome, burned_amounts,
                       check_aggregate_stability, check_classical_stability, classical_da,
                       disaggregate_outcome, gen_instance, sigma_limit)


def det(mu, u, v):
    return DeterministicOutcome(np.asarray(mu), u, v)


def test_intro_candidates(intro_deterministic):
    assert check_aggregate_stability(intro_deterministic, det([[1], [0]], (1, 0), (0,))).ok
    assert check_aggregate_stability(intro_deterministic, det([[0], [1]], (0, 0), (0,))).ok
    rep = check_aggregate_stability(intro_deterministic, det([[1], [0]], (2, 0), (1,)))
    assert not rep.ok
    assert "(iv)" in rep.conditions()
    assert "1 != 0" in str(rep)


def test_each_condition_detected(intro_deterministic):
    spec = intro_deterministic
    cases = {
        "(i)": det([[-1], [0]], (0, 0), (0,)),
        "(ii)": det([[2], [0]], (0, 0), (0,)),
        "(iii)": det([[1], [1]], (0, 0), (0,)),
        "(v)": det([[0], [0]], (1, 0), (0,)),
        "(vi)": det([[0], [0]], (0, 0), (-1,)),
    }
    for cond, cand in cases.items():
        assert cond in check_aggregate_stability(spec, cand).conditions(), cond
    assert check_aggregate_stability(spec, cases["(v)"]).conditions() == ["(v)"]


def test_exact_fractions_and_eps(intro_deterministic):
    assert check_aggregate_stability(intro_deterministic,
                                     det([[1], [0]], (Fraction(1, 3), 0), (0,))).ok
    rep = check_aggregate_stability(intro_deterministic, det([[1], [0]], (Fraction(7, 3), 0), (0,)))
    assert rep.conditions() == ["(iv)"]
    near = det([[1], [0]], (2 + 1e-9, 0), (0,))
    assert not check_aggregate_stability(intro_deterministic, near).ok
    assert check_aggregate_stability(intro_deterministic, near, eps=1e-7).ok


def test_dimension_mismatch(intro_deterministic):
    with pytest.raises(ValidationError, match="dimension"):
        check_aggregate_stability(intro_deterministic, det([[1, 0]], (0,), (0, 0)))


def two_passengers_one_taxi():
    spec = market([[2]], [[0]], [2], [1], shocks=None)
    return spec, IndividualMarket.from_spec(spec)


def test_classical_one_served():
    _, mk = two_passengers_one_taxi()
    pi = IndividualMatching([[1], [0]])
    assert check_classical_stability(mk, pi).ok


def test_classical_empty_is_blocked():
    spec = market([[1]], [[1]], [1], [1], shocks=None)
    mk = IndividualMarket.from_spec(spec)
    rep = check_classical_stability(mk, IndividualMatching([[0]]))
    assert rep.conditions() == ["(iv)"]
    assert rep.violations[0]["where"] == ("x1#0", "y1#0")


def test_classical_negative_payoff():
    spec = market([[-1]], [[1]], [1], [1], shocks=None)
    rep = check_classical_stability(IndividualMarket.from_spec(spec), IndividualMatching([[1]]))
    assert "(v)" in rep.conditions()


def test_classical_da_singletons():
    good = IndividualMarket.from_spec(market([[1]], [[1]], [1], [1], shocks=None))
    assert classical_da(good).pi[0, 0] == 1
    bad = IndividualMarket.from_spec(market([[-1]], [[1]], [1], [1], shocks=None))
    assert classical_da(bad).pi[0, 0] == 0


@pytest.mark.parametrize("proposer", ["passengers", "taxis"])
def test_classical_da_intro(proposer):
    spec = market([[2], [1]], [[1], [1]], [1, 1], [1], shocks=None)
    mk = IndividualMarket.from_spec(spec)
    pi = classical_da(mk, proposer, seed=3)
    assert pi.pi.sum() == 1
    assert check_classical_stability(mk, pi).ok
    assert pi.meta["seed"] == 3


def test_classical_da_reproducible():
    spec = gen_instance(4, 4, utility_range=(-3, 3), mass_range=(1, 4), seed=2, integer=True)
    mk = IndividualMarket.from_spec(spec)
    np.testing.assert_array_equal(classical_da(mk, seed=5).pi, classical_da(mk, seed=5).pi)


def test_aggregate_outcome_with_burning():
    _, mk = two_passengers_one_taxi()
    pi = IndividualMatching([[1], [0]])
    out = aggregate_outcome(mk, pi)
    assert out.mu.tolist() == [[1]] and out.u == (0,) and out.v == (0,)
    tau_p, tau_t = burned_amounts(mk, pi, out)
    assert tau_p == {"x1#0": 2, "x1#1": 0} and tau_t == {"y1#0": 0}


def test_aggregate_outcome_singletons_burn_nothing():
    spec = market([[3, 1], [1, 2]], [[1, 2], [2, 1]], [1, 1], [1, 1], shocks=None)
    mk = IndividualMarket.from_spec(spec)
    pi = classical_da(mk)
    out = aggregate_outcome(mk, pi)
    tau_p, tau_t = burned_amounts(mk, pi, out)
    assert set(tau_p.values()) == {0} and set(tau_t.values()) == {0}


def test_aggregate_of_empty_matching():
    spec = market([[1]], [[-1]], [1], [1], shocks=None)
    mk = IndividualMarket.from_spec(spec)
    out = aggregate_outcome(mk, IndividualMatching([[0]]))
    assert out.mu.tolist() == [[0]] and check_aggregate_stability(spec, out).ok


def test_aggregate_rejects_unstable():
    spec = market([[1]], [[1]], [1], [1], shocks=None)
    with pytest.raises(ValidationError, match="not stable"):
        aggregate_outcome(IndividualMarket.from_spec(spec), IndividualMatching([[0]]))


def test_disaggregate_either_passenger():
    spec, _ = two_passengers_one_taxi()
    out = det([[1]], (0,), (0,))
    seen = set()
    for seed in range(8):
        pi = disaggregate_outcome(spec, out, seed=seed)
        assert check_classical_stability(pi.meta["market"], pi).ok
        seen.add(int(np.argmax(pi.pi[:, 0])))
    assert seen == {0, 1}


def test_disaggregate_empty_and_intro(intro_deterministic):
    spec = market([[-1]], [[-1]], [2], [2], shocks=None)
    pi = disaggregate_outcome(spec, det([[0]], (0,), (0,)))
    assert pi.pi.sum() == 0
    pi = disaggregate_outcome(intro_deterministic, det([[1], [0]], (1, 0), (0,)))
    assert pi.pi.tolist() == [[1], [0]]


def test_disaggregate_rejects_unstable(intro_deterministic):
    with pytest.raises(ValidationError, match="not aggregate stable"):
        disaggregate_outcome(intro_deterministic, det([[1], [0]], (2, 0), (1,)))


def test_sigma_limit_intro(intro_deterministic):
    sched, out = sigma_limit(intro_deterministic, K=20)
    assert sched.cauchy_gaps()[-1] <= 1e-4
    np.testing.assert_allclose(sched.mu[-1], [[1 / 3], [1 / 3]], atol=1e-9)
    assert out.mu.sum() == 1
    assert out.u == (0.0, 0.0) and out.v == (0.0,)
    assert check_aggregate_stability(intro_deterministic, out).ok
    assert sched.eps_used == 0.0
    assert len(sched.rows()) == 21 and len(sched.rows()[0]) == 1 + 2 + 1 + 1


def test_sigma_limit_mutual_gain():
    spec = market([[1]], [[1]], [1], [1], shocks=None)
    sched, out = sigma_limit(spec, K=20)
    gaps = sched.cauchy_gaps()
    assert gaps[-1] <= 1e-4 and gaps[-1] <= gaps[5]
    assert sched.mu[-1][0, 0] > 0.999
    assert out.mu.tolist() == [[1]]
    assert check_aggregate_stability(spec, out).ok


def test_sigma_limit_outside_dominates():
    spec = market([[-1, -1], [-1, -1]], [[-1, -1], [-1, -1]], [1, 1], [1, 1], shocks=None)
    _, out = sigma_limit(spec, K=12)
    assert out.mu.sum() == 0 and out.u == (0.0, 0.0) and out.v == (0.0, 0.0)


def test_sigma_limit_bad_schedule(intro_deterministic):
    with pytest.raises(ValidationError, match="decreasing"):
        sigma_limit(intro_deterministic, sigmas=[0.5, 1.0])


def test_sigma_limit_needs_integer_masses():
    with pytest.raises(ValidationError):
        sigma_limit(market([[1]], [[1]], [1.5], [1], shocks=None))


integer_markets = st.builds(
    lambda nx, ny, seed: gen_instance(nx, ny, utility_range=(-3, 3), mass_range=(1, 4),
                                      seed=seed, integer=True),
    st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**31))


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(integer_markets, st.sampled_from(["passengers", "taxis"]), st.integers(0, 100))
def test_bridge_round_trip(spec, proposer, seed):
    mk = IndividualMarket.from_spec(spec)
    pi = classical_da(mk, proposer, seed=seed)
    assert check_classical_stability(mk, pi).ok
    agg = aggregate_outcome(mk, pi)
    assert check_aggregate_stability(spec, agg).ok
    tau_p, tau_t = burned_amounts(mk, pi, agg)
    assert min(tau_p.values()) >= 0 and min(tau_t.values()) >= 0
    back = disaggregate_outcome(spec, agg, seed=seed)
    assert check_classical_stability(back.meta["market"], back).ok
    assert aggregate_outcome(back.meta["market"], back).mu.tolist() == agg.mu.tolist()


@settings(max_examples=15, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**31))
def test_sigma_limit_always_stable(nx, ny, seed):
    spec = gen_instance(nx, ny, utility_range=(-3, 3), mass_range=(1, 4), seed=seed,
                        integer=True)
    _, out = sigma_limit(spec, K=16)
    assert check_aggregate_stability(spec, out).ok
