"""Aggregate stable matching with money burning under random utility.

The unknown is a single matrix ``tau`` whose positive part is the passenger
wait and whose negative part is the taxi wait, so at most one side of each
segment waits by construction. The equilibrium is the zero of the excess
demand ``e(tau) = taxi_demand(tau^-) - passenger_demand(tau^+)``, an
M-function: off-diagonally antitone with strictly increasing aggregate.
"""

from __future__ import annotations

import numpy as np

from . import _kernels as K
from ._jit import backend
from .demand import PropertyReport, make_provider
from .model import (ConvergenceError, EquilibriumOutcome, Matching, NotSmoothError,
                    ValidationError, validate_market)

CBAR_CLIP = 1e6


def _providers(spec):
    validate_market(spec)
    pa, pg = make_provider(spec, "alpha"), make_provider(spec, "gamma")
    if not (pa.smooth and pg.smooth):
        raise NotSmoothError("provider not smooth: equilibrium solvers need continuous demand")
    return pa, pg


def _excess(pa, pg, tau):
    out = np.empty(tau.shape)
    K.excess_demand(*pa.arrays, *pg.arrays, np.ascontiguousarray(tau, dtype=float), out)
    return out


def excess_demand_eval(spec, tau):
    """Excess demand ``taxi_demand(tau^-) - passenger_demand(tau^+)`` at ``tau``."""
    pa, pg = _providers(spec)
    tau = np.asarray(tau, dtype=float)
    if tau.shape != spec.shape:
        raise ValidationError(f"tau has shape {tau.shape}, expected {spec.shape}")
    return _excess(pa, pg, tau)


def wait_bracket(pa, pg, shape, tol=1e-9):
    """Constant ``c`` with e(c) >= 0 and e(-c) <= 0 componentwise, verified numerically."""
    spread = max(np.max(np.abs(pa.util)), np.max(np.abs(pg.util)))
    scale = max(np.max(pa.sigma), np.max(pg.sigma))
    mass = max(np.max(pa.mass), np.max(pg.mass))
    c = max(1.0, spread + scale * (np.log(mass * (sum(shape) + 1) / tol) + 2.0))
    while c < CBAR_CLIP:
        if (np.all(_excess(pa, pg, np.full(shape, c)) >= 0.0)
                and np.all(_excess(pa, pg, np.full(shape, -c)) <= 0.0)):
            return c
        c *= 2.0
    return CBAR_CLIP


def _outcome(pa, pg, tau, diagnostics):
    tau_a = np.maximum(tau, 0.0)
    tau_g = np.maximum(-tau, 0.0)
    mu, _ = pa.demand(tau_a)
    return EquilibriumOutcome(Matching(mu, pa.mass, pg.mass), tau_a, tau_g, diagnostics)


def solve_equilibrium(spec, tol=1e-9, max_iter=100_000, order=None, trace=False):
    """Unique equilibrium for any smooth shock distribution.

    Monotone Gauss-Seidel from ``tau = -cbar``: each coordinate is raised to
    the root of its own excess-demand entry, found by bisection on
    ``[tau_xy, cbar]``. Iterates never decrease and stay below ``cbar``.
    ``order`` optionally permutes the flat coordinate sweep order; with
    ``trace=True`` every post-sweep iterate is stored in
    ``diagnostics["trace"]``.
    """
    pa, pg = _providers(spec)
    shape = spec.shape
    cbar = wait_bracket(pa, pg, shape, tol)
    tau = np.full(shape, -cbar)
    flat = np.arange(tau.size, dtype=np.int64) if order is None else np.asarray(order, dtype=np.int64)
    if sorted(flat.tolist()) != list(range(tau.size)):
        raise ValueError("order must be a permutation of range(X * Y)")
    history = []
    if trace:
        history.append(tau.copy())
        sweeps, residual = 0, np.inf
        while sweeps < max_iter:
            s, residual = K.gs_equilibrium(*pa.arrays, *pg.arrays, tau, cbar, tol, 1, flat)
            if s == 0:
                break
            sweeps += s
            history.append(tau.copy())
    else:
        sweeps, residual = K.gs_equilibrium(*pa.arrays, *pg.arrays, tau, cbar, tol, max_iter, flat)
    if residual > tol:
        raise ConvergenceError(
            f"equilibrium did not converge: residual {residual:.3e} after {sweeps} sweeps",
            residual=residual, iterations=sweeps,
        )
    diag = {"solver": "general", "iterations": int(sweeps), "residual": float(residual),
            "cbar": float(cbar), "backend": backend()}
    if trace:
        diag["trace"] = history
    return _outcome(pa, pg, tau, diag)


def solve_equilibrium_logit(spec, tol=1e-12, max_iter=100_000):
    """Equilibrium for logit shocks via the closed-form min-system.

    With logit shocks the equilibrium matching is
    ``mu_xy = min(mu_x0 exp(alpha_xy / s_x), mu_0y exp(gamma_xy / s_y))``, and
    the margins solve the two accounting identities. Rows and columns are
    solved exactly in turn (each is a piecewise-linear scalar equation)
    until the row identities hold within ``tol``. Works in log margins so it
    stays finite for very small shock scales.
    """
    validate_market(spec)
    if not spec.is_logit:
        raise ValidationError("solve_equilibrium_logit requires logit shocks")
    sx, sy = spec.sigmas("alpha"), spec.sigmas("gamma")
    la = np.ascontiguousarray(spec.alpha / sx[:, None])
    lg = np.ascontiguousarray(spec.gamma / sy[None, :])
    n = np.asarray(spec.n, dtype=float)
    m = np.asarray(spec.m, dtype=float)
    a = np.empty(n.size)
    b = np.log(m)
    iters, residual, status = K.logit_min_system(la, lg, n, m, a, b, tol, max_iter)
    if status != 0:
        why = "iteration cap" if status == 1 else "non-monotone residual"
        raise ConvergenceError(
            f"logit min-system stopped ({why}): residual {residual:.3e} after {iters} iterations",
            residual=residual, iterations=iters,
        )
    log_free_a = a[:, None] + la
    log_free_g = b[None, :] + lg
    log_mu = np.minimum(log_free_a, log_free_g)
    tau_a = sx[:, None] * (log_free_a - log_mu)
    tau_g = sy[None, :] * (log_free_g - log_mu)
    diag = {"solver": "logit", "iterations": int(iters), "residual": float(residual),
            "log_mu_x0": a.copy(), "log_mu_0y": b.copy()}
    return EquilibriumOutcome(Matching(np.exp(log_mu), n, m), tau_a, tau_g, diag)


def equilibrium_residual(spec, outcome):
    """Largest violation of market clearing and one-sided waiting at an outcome."""
    da, _ = make_provider(spec, "alpha").demand(outcome.tau_alpha)
    dg, _ = make_provider(spec, "gamma").demand(outcome.tau_gamma)
    clearing = max(np.max(np.abs(da - outcome.mu)), np.max(np.abs(dg - outcome.mu)))
    one_sided = np.max(np.minimum(outcome.tau_alpha, outcome.tau_gamma))
    return float(max(clearing, one_sided))


def check_mfunction(spec, trials=200, seed=0, tau_scale=2.0, slack=1e-13):
    """Randomized check that the excess demand behaves as an M-function.

    Per trial: (a) bumping one coordinate up weakly lowers every other entry
    of e; (b) the bump strictly raises the aggregate sum of e; (c) for a
    random tau' >= tau with tau' != tau, e(tau) >= e(tau') must fail
    (inverse isotonicity). Equal pairs pass vacuously.
    """
    pa, pg = _providers(spec)
    rng = np.random.default_rng(seed)
    X, Y = spec.shape
    report = PropertyReport("mfunction", trials)
    for t in range(trials):
        tau = rng.uniform(-tau_scale, tau_scale, size=(X, Y))
        e0 = _excess(pa, pg, tau)
        x, y = int(rng.integers(X)), int(rng.integers(Y))
        d = rng.uniform(0.05, 1.0)
        bumped = tau.copy()
        bumped[x, y] += d
        e1 = _excess(pa, pg, bumped)
        others = np.ones((X, Y), dtype=bool)
        others[x, y] = False
        if np.any(e1[others] > e0[others] + slack):
            report.violations.append(dict(trial=t, what="off-diagonal antitonicity", tau=tau,
                                          coord=(x, y), delta=d))
        if not e1.sum() > e0.sum():
            report.violations.append(dict(trial=t, what="aggregate not strictly increasing",
                                          tau=tau, coord=(x, y), delta=d))
        step = rng.uniform(0.0, 1.0, size=(X, Y)) * (rng.random((X, Y)) < 0.5)
        if not np.any(step > 0):
            step[rng.integers(X), rng.integers(Y)] = rng.uniform(0.05, 1.0)
        e2 = _excess(pa, pg, tau + step)
        if np.all(e0 >= e2):
            report.violations.append(dict(trial=t, what="inverse isotonicity", tau=tau, step=step))
    return report


def matching_functions(mu_x0, mu_0y, alpha_xy, gamma_xy, sigma=1.0):
    """Three aggregate matching functions evaluated at given margins.

    Returns ``(menzel, choo_siow, leontief)``:
    ``mu_x0 mu_0y exp(a + g)``, its square root, and
    ``min(mu_x0 exp(a), mu_0y exp(g))`` with ``a = alpha / sigma``,
    ``g = gamma / sigma``. Inputs broadcast.
    """
    mu_x0 = np.asarray(mu_x0, dtype=float)
    mu_0y = np.asarray(mu_0y, dtype=float)
    if np.any(mu_x0 <= 0) or np.any(mu_0y <= 0):
        raise ValidationError("nonpositive margins")
    a = np.asarray(alpha_xy, dtype=float) / sigma
    g = np.asarray(gamma_xy, dtype=float) / sigma
    menzel = mu_x0 * mu_0y * np.exp(a + g)
    choo_siow = np.sqrt(menzel)
    leontief = np.minimum(mu_x0 * np.exp(a), mu_0y * np.exp(g))
    if menzel.ndim == 0:
        return float(menzel), float(choo_siow), float(leontief)
    return menzel, choo_siow, leontief
