from dataclasses import replace

import numpy as np
import pytest
from conftest import LN3, market
from hypothesis import given, settings
from hypothesis import strategies as st

from matchburn import (ConvergenceError, DAState, InvariantError, ShockSpec, da_init, da_run,
                       da_step, gen_instance, solve_equilibrium_logit)
from matchburn.deferred_acceptance import _skippable

NORMAL = ShockSpec("iid", family="normal")


def test_init_is_componentwise_min(intro_market, excess_market):
    np.testing.assert_array_equal(da_init(intro_market).available, [[1.0], [1.0]])
    np.testing.assert_array_equal(da_init(excess_market).available, [[1.0]])
    sym = market(np.zeros((3, 3)), np.zeros((3, 3)), np.ones(3), np.ones(3))
    np.testing.assert_array_equal(da_init(sym).available, np.ones((3, 3)))


def test_first_two_rounds_by_hand(excess_market):
    s1 = da_step(da_init(excess_market), excess_market)
    assert s1.proposed[0, 0] == pytest.approx(1.0, abs=1e-15)
    assert s1.kept[0, 0] == pytest.approx(0.5, abs=1e-15)
    assert s1.available[0, 0] == pytest.approx(0.5, abs=1e-15)
    assert s1.tau_alpha[0, 0] == 0.0
    s2 = da_step(s1, excess_market)
    assert s2.proposed[0, 0] == pytest.approx(0.5, abs=1e-15)
    assert s2.kept[0, 0] == pytest.approx(0.5, abs=1e-15)
    assert s2.residual == pytest.approx(0.0, abs=1e-15)
    assert s2.tau_alpha[0, 0] == pytest.approx(LN3, abs=1e-12)
    assert not s2.violations


def test_run_excess_market(excess_market):
    out = da_run(excess_market, tol=1e-12)
    assert out.mu[0, 0] == pytest.approx(0.5, abs=1e-10)
    assert out.tau_alpha[0, 0] == pytest.approx(LN3, abs=1e-9)
    assert out.tau_gamma[0, 0] == 0.0


@pytest.mark.parametrize("proposer", ["passengers", "taxis"])
def test_run_intro_market(intro_market, proposer):
    out = da_run(intro_market, tol=1e-12, proposer=proposer)
    np.testing.assert_allclose(out.mu, [[1 / 3], [1 / 3]], atol=1e-9)
    assert out.diagnostics["proposer"] == proposer
    assert out.diagnostics["equilibrium_residual"] <= 1e-9


def test_strict_mode_raises_on_violation(excess_market):
    bad = DAState(available=np.ones((1, 1)), proposed=np.ones((1, 1)), kept=np.full((1, 1), 5.0),
                  tau_alpha=np.zeros((1, 1)), tau_gamma=np.zeros((1, 1)), t=1)
    with pytest.raises(InvariantError, match="not re-proposed"):
        da_step(bad, excess_market, strict=True)
    lenient = da_step(bad, excess_market)
    assert any("not re-proposed" in v["what"] for v in lenient.violations)


def test_round_cap(intro_market):
    with pytest.raises(ConvergenceError) as err:
        da_run(gen_instance(5, 5, seed=1), tol=1e-14, max_rounds=2)
    assert err.value.iterations == 2


def test_bad_proposer(intro_market):
    with pytest.raises(ValueError, match="proposer"):
        da_run(intro_market, proposer="drivers")


def test_trace_rows(intro_market):
    out = da_run(intro_market)
    d = out.diagnostics
    assert len(d["trace"]) == d["iterations"] - d["skipped_rounds"]
    assert d["trace"][-1][0] == d["iterations"]


def test_repeat_round_jump_is_exact():
    from matchburn import gen_batch
    spec = gen_batch(50, seed=2024, max_types=8)[8]
    fast = da_run(spec, tol=1e-10)
    slow = da_run(spec, tol=1e-10, skip=False)
    assert fast.diagnostics["skipped_rounds"] > 1000
    assert slow.diagnostics["skipped_rounds"] == 0
    assert fast.diagnostics["iterations"] == slow.diagnostics["iterations"]
    np.testing.assert_array_equal(fast.mu, slow.mu)


def test_normal_shocks_agree_with_general():
    from matchburn import solve_equilibrium
    spec = gen_instance(2, 3, seed=4, shocks=NORMAL)
    out = da_run(spec, tol=1e-10)
    ref = solve_equilibrium(spec, tol=1e-11)
    assert np.max(np.abs(out.mu - ref.mu)) <= 1e-8
    assert not out.diagnostics["violations"]


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31))
def test_claims_hold_every_round(nx, ny, seed):
    spec = gen_instance(nx, ny, seed=seed)
    state = da_init(spec)
    for _ in range(5000):
        nxt = da_step(state, spec, strict=True)
        jump = _skippable(state, nxt)
        assert np.all(nxt.kept <= nxt.proposed + 1e-9)
        assert np.all(nxt.available <= state.available + 1e-9)
        assert np.all(nxt.available > 0)
        assert np.all(np.minimum(nxt.tau_alpha, nxt.tau_gamma) == 0.0)
        if state.kept is not None:
            assert np.all(state.kept <= nxt.proposed + 1e-9)
            assert np.all(nxt.tau_alpha >= state.tau_alpha - 1e-9)
            assert np.all(nxt.tau_gamma <= state.tau_gamma + 1e-9)
        if nxt.residual <= 1e-9:
            state = nxt
            break
        state = replace(nxt, available=nxt.available - jump * (nxt.proposed - nxt.kept),
                        t=nxt.t + jump)
    ref = solve_equilibrium_logit(spec)
    assert np.max(np.abs(state.proposed - ref.mu)) <= 1e-6


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31))
def test_proposing_side_irrelevant(nx, ny, seed):
    spec = gen_instance(nx, ny, seed=seed)
    a = da_run(spec, tol=1e-10)
    b = da_run(spec, tol=1e-10, proposer="taxis")
    assert np.max(np.abs(a.mu - b.mu)) <= 1e-8
