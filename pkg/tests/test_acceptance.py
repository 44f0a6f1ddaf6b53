"""Acceptance criteria, one test per criterion.

Each test records a ``PASS``/``FAIL`` line that is printed in the pytest
terminal summary; ``python3 tests/test_acceptance.py`` runs them standalone.
"""

import math
import sys
import time
from functools import lru_cache

import numpy as np
import pytest

from matchburn import (DeterministicOutcome, IndividualMarket, MarketSpec, ShockSpec,
                       aggregate_outcome, check_aggregate_stability, check_classical_stability,
                       check_mfunction, classical_da, da_run, disaggregate_outcome, gen_batch,
                       gen_instance, make_provider, matching_functions, sigma_limit,
                       solve_constrained, solve_constrained_logit, solve_equilibrium,
                       solve_equilibrium_logit)
from matchburn.queue_sim import WAIT_MAPS, sim_run

RESULTS = []


def record(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    assert ok, line


def single(n, m, shocks=ShockSpec()):
    return MarketSpec(["x"], ["y"], [n], [m], [[0.0]], [[0.0]], shocks)


def intro(shocks=ShockSpec()):
    return MarketSpec(["x1", "x2"], ["y"], [1, 1], [1], [[2.0], [1.0]], [[0.0], [0.0]], shocks)


@lru_cache(maxsize=None)
def criterion3_runs():
    """Four solver routes on the 50 seeded instances, cached for criteria 3, 4 and 11."""
    t0 = time.perf_counter()
    runs = []
    for spec in gen_batch(50, seed=2024, max_types=8):
        runs.append(dict(spec=spec,
                         general=solve_equilibrium(spec, tol=1e-10),
                         logit=solve_equilibrium_logit(spec),
                         da=da_run(spec, tol=1e-10),
                         da_swapped=da_run(spec, tol=1e-10, proposer="taxis")))
    return runs, time.perf_counter() - t0


def test_criterion_01_excess_passenger_market():
    errs = []
    for solve in (lambda s: solve_equilibrium(s, tol=1e-12), solve_equilibrium_logit):
        out = solve(single(2.0, 1.0))
        errs += [abs(out.mu[0, 0] - 0.5), abs(out.matching.mu_x0[0] - 1.5),
                 abs(out.matching.mu_0y[0] - 0.5), abs(out.tau_alpha[0, 0] - math.log(3)),
                 abs(out.tau_gamma[0, 0])]
    worst = max(errs)
    record(1, worst <= 1e-8, f"max error {worst:.2e} (tol 1e-8)")


def test_criterion_02_intro_market():
    out = solve_equilibrium_logit(intro())
    ln2 = math.log(2)
    worst = max(np.max(np.abs(out.mu - 1 / 3)), abs(out.matching.mu_0y[0] - 1 / 3),
                np.max(np.abs(out.tau_alpha - [[2 + ln2], [1 + ln2]])),
                np.max(np.abs(out.tau_gamma)))
    mx, my = out.matching.mu_x0, out.matching.mu_0y
    alpha, gamma = intro().alpha, intro().gamma
    pair = np.minimum(mx[:, None] * np.exp(alpha), my[None, :] * np.exp(gamma))
    residual = max(np.max(np.abs(mx + pair.sum(axis=1) - 1.0)),
                   np.max(np.abs(my + pair.sum(axis=0) - 1.0)))
    record(2, worst <= 1e-8 and residual <= 1e-10,
           f"max error {worst:.2e} (tol 1e-8), min-system residual {residual:.2e} (tol 1e-10)")


def test_criterion_03_cross_solver_equivalence():
    runs, seconds = criterion3_runs()
    dev = swap = 0.0
    for r in runs:
        mus = [r["general"].mu, r["logit"].mu, r["da"].mu]
        dev = max(dev, max(np.max(np.abs(a - b)) for a in mus for b in mus))
        swap = max(swap, np.max(np.abs(r["da"].mu - r["da_swapped"].mu)))
    sizes = max(max(r["spec"].shape) for r in runs)
    record(3, dev <= 1e-6 and swap <= 1e-6 and seconds <= 60,
           f"{len(runs)} instances up to {sizes}x{sizes}: solver gap {dev:.2e}, "
           f"swapped-DA gap {swap:.2e} (tol 1e-6), {seconds:.1f}s (limit 60s)")


def test_criterion_04_deferred_acceptance_claims():
    runs, _ = criterion3_runs()
    rounds = violations = 0
    t0 = time.perf_counter()
    for r in runs:
        for proposer in ("passengers", "taxis"):
            out = da_run(r["spec"], tol=1e-10, proposer=proposer, skip=False)
            rounds += out.diagnostics["iterations"]
            violations += len(out.diagnostics["violations"])
    record(4, violations == 0, f"{violations} violations over {rounds} rounds, every round "
                               f"solved explicitly ({time.perf_counter() - t0:.1f}s)")


def test_criterion_05_m_function():
    total = bad = 0
    for name, shocks in (("logit", ShockSpec()), ("iid-normal", ShockSpec("iid", family="normal"))):
        rep = check_mfunction(gen_instance(4, 3, seed=5, shocks=shocks), trials=200, seed=11)
        total += rep.trials
        bad += len(rep.violations)
    record(5, bad == 0, f"{bad} violations in {total} trials (logit and iid-normal)")


def test_criterion_06_individual_aggregate_bridge():
    rng = np.random.default_rng(6)
    failures = 0
    for k in range(100):
        nx, ny = (int(v) for v in rng.integers(1, 6, 2))
        spec = gen_instance(nx, ny, utility_range=(-3, 3), mass_range=(1, 4), seed=[6, k],
                            integer=True)
        market = IndividualMarket.from_spec(spec)
        pi = classical_da(market, "passengers" if k % 2 else "taxis", seed=k)
        agg = aggregate_outcome(market, pi)
        back = disaggregate_outcome(spec, agg, seed=k)
        if not (check_aggregate_stability(spec, agg).ok
                and check_classical_stability(back.meta["market"], back).ok):
            failures += 1
    record(6, failures == 0, f"{failures} failures on 100 integer markets")


def test_criterion_07_multiplicity():
    spec = intro(shocks=None)
    first = check_aggregate_stability(spec, DeterministicOutcome([[1], [0]], (1, 0), (0,)))
    second = check_aggregate_stability(spec, DeterministicOutcome([[0], [1]], (0, 0), (0,)))
    third = check_aggregate_stability(spec, DeterministicOutcome([[1], [0]], (2, 0), (1,)))
    ok = first.ok and second.ok and not third.ok and "(iv)" in third.conditions()
    record(7, ok, f"accepted {first.ok}/{second.ok}, third rejected citing "
                  f"{','.join(third.conditions()) or 'nothing'}")


def test_criterion_08_sigma_limit():
    spec = intro(shocks=None)
    sched, out = sigma_limit(spec, K=20)
    gap = float(sched.cauchy_gaps()[-1])
    exact = check_aggregate_stability(spec, out)
    record(8, gap <= 1e-4 and exact.ok and sched.eps_used == 0,
           f"final Cauchy gap {gap:.2e} (tol 1e-4), rounded mu={out.mu.ravel().tolist()} "
           f"u={list(out.u)} v={list(out.v)} exact check {'ok' if exact.ok else 'failed'}")


def test_criterion_09_stationary_dynamics():
    worst_gap, worst_t, one_sided = 0.0, 0, 0
    ok = True
    for spec in (single(2.0, 1.0), intro()):
        for wait_map in WAIT_MAPS:
            traj, rep = sim_run(spec, wait_map, T=5000, stat_tol=1e-6)
            ok &= rep.stationary
            worst_t = max(worst_t, rep.t_stationary or 5000)
            worst_gap = max(worst_gap, rep.gap_mu, rep.gap_tau)
            one_sided += sum(int(np.any(np.minimum(s.Q_alpha, s.Q_gamma) != 0)) for s in traj)
    ok = ok and worst_gap <= 1e-5 and one_sided == 0
    record(9, ok, f"stationary by t={worst_t}, gap to static {worst_gap:.2e} (tol 1e-5), "
                  f"{one_sided} one-sided violations")


def test_criterion_10_constrained_choice():
    rng = np.random.default_rng(10)
    worst = 0.0
    for k in range(100):
        nx, ny = (int(v) for v in rng.integers(1, 7, 2))
        spec = gen_instance(nx, ny, seed=[10, k])
        side = "alpha" if k % 2 == 0 else "gamma"
        cap = rng.uniform(0.02, 1.5, spec.shape)
        exact = solve_constrained_logit(spec, cap, side=side)
        gs = solve_constrained(make_provider(spec, side), cap, tol=1e-12)
        worst = max(worst, np.max(np.abs(exact.demand - gs.demand)))
    hand = solve_constrained_logit(single(1.0, 1.0), [[0.25]])
    hand_err = abs(hand.tau[0, 0] - math.log(3))
    record(10, worst <= 1e-8 and hand_err <= 1e-10,
           f"100 instances max gap {worst:.2e} (tol 1e-8), hand example error {hand_err:.2e}")


def test_criterion_11_matching_functions():
    exact = matching_functions(4, 1, 0, 0) == (4.0, 2.0, 1.0)
    runs, _ = criterion3_runs()
    worst = 0.0
    for r in runs:
        spec, out = r["spec"], r["logit"]
        _, _, leo = matching_functions(out.matching.mu_x0[:, None], out.matching.mu_0y[None, :],
                                       spec.alpha, spec.gamma)
        worst = max(worst, np.max(np.abs(leo - out.mu)))
    record(11, exact and worst <= 1e-8,
           f"(4,1,0,0) -> (4,2,1) {'exact' if exact else 'wrong'}, Leontief gap {worst:.2e} "
           f"on {len(runs)} instances")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
