"""Run every equilibrium route on one market and compare the matchings."""

from __future__ import annotations

import itertools
import time

import numpy as np

from .deferred_acceptance import da_run
from .equilibrium import solve_equilibrium, solve_equilibrium_logit
from .model import ConvergenceError
from .queue_sim import sim_run

SIM_STAT_TOL = 1e-10
SIM_PERIODS = 50_000


def cross_check(spec, tol=1e-9, da_tol=1e-9, simulate=True, sim_stat_tol=SIM_STAT_TOL,
                sim_periods=SIM_PERIODS):
    """Matchings from all solvers and their largest pairwise sup-norm gap.

    Returns a dict with ``mu`` (solver name -> matrix), ``max_dev``,
    ``failures`` (solver name -> message) and ``seconds``.
    """
    t0 = time.perf_counter()
    runs = {"general": lambda: solve_equilibrium(spec, tol=tol).mu,
            "da-passengers": lambda: da_run(spec, tol=da_tol).mu,
            "da-taxis": lambda: da_run(spec, tol=da_tol, proposer="taxis").mu}
    if spec.is_logit:
        runs["logit"] = lambda: solve_equilibrium_logit(spec).mu
    if simulate:
        def sim():
            _, rep = sim_run(spec, "relaxation", T=sim_periods, stat_tol=sim_stat_tol,
                             compare=False)
            if not rep.stationary:
                raise ConvergenceError(str(rep))
            return rep.outcome.mu
        runs["simulation"] = sim
    mus, failures = {}, {}
    for name, fn in runs.items():
        try:
            mus[name] = np.asarray(fn())
        except ConvergenceError as exc:
            failures[name] = str(exc)
    dev = 0.0
    for a, b in itertools.combinations(mus.values(), 2):
        dev = max(dev, float(np.max(np.abs(a - b))))
    return {"mu": mus, "max_dev": dev, "failures": failures,
            "seconds": time.perf_counter() - t0}
