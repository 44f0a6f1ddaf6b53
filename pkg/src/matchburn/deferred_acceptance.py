"""Generalized deferred acceptance with constrained choice on both sides.

Each round passengers choose under the still-available offers (proposal),
taxis choose among the proposals they received (disposal), and rejected
offers leave the available pool. The monotonicity facts that drive
convergence are re-checked on every round:

* kept offers are proposed again next round (``kept_t <= proposed_{t+1}``);
* passenger waits never fall, taxi waits never rise;
* no segment has both sides waiting (exactly zero for logit shocks).

When a round reproduces the previous proposals and kept offers exactly,
the only thing that changes is availability on segments whose cap is
slack, which falls by the same amount every round. Those repeat rounds
are applied in one jump (as many as keep every cap at or above its
proposal), so the result is the one the plain loop would reach.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .constrained import solve_constrained, solve_constrained_logit
from .demand import make_provider
from .equilibrium import equilibrium_residual
from .model import (ConvergenceError, EquilibriumOutcome, Matching, MatchburnError,
                    NotSmoothError, validate_market)

INVARIANT_SLACK = 1e-9


class InvariantError(MatchburnError, AssertionError):
    """A round broke one of the algorithm's monotonicity invariants (strict mode)."""


@dataclass(frozen=True)
class DAState:
    """Algorithm state after round ``t`` (matrices are X-by-Y)."""

    available: np.ndarray
    proposed: np.ndarray = None
    kept: np.ndarray = None
    tau_alpha: np.ndarray = None
    tau_gamma: np.ndarray = None
    t: int = 0
    history: tuple = ()
    violations: tuple = ()

    @property
    def residual(self):
        return self.history[-1] if self.history else np.inf


def da_init(spec):
    """Round-zero state: every segment starts with ``min(n_x, m_y)`` available offers."""
    validate_market(spec)
    return DAState(available=np.minimum.outer(np.asarray(spec.n, float), np.asarray(spec.m, float)))


class _Sides:
    """Constrained-demand maps of both sides, exact for logit, Gauss-Seidel otherwise."""

    def __init__(self, spec, tol):
        self.pa = make_provider(spec, "alpha")
        self.pg = make_provider(spec, "gamma")
        if not (self.pa.smooth and self.pg.smooth):
            raise NotSmoothError("provider not smooth: deferred acceptance needs continuous demand")
        # waits are only as accurate as demand / slope, so solve well below tol
        self.exact = self.pa.is_logit and self.pg.is_logit
        self.inner_tol = min(tol / 100.0, 1e-13)

    def choose(self, provider, cap):
        if provider.is_logit:
            return solve_constrained_logit(provider, cap)
        return solve_constrained(provider, cap, tol=self.inner_tol)


def da_step(state, spec, tol=1e-8, strict=False, _sides=None):
    """One proposal / disposal / update round."""
    sides = _sides or _Sides(spec, tol)
    prop = sides.choose(sides.pa, state.available)
    proposed = prop.demand
    disp = sides.choose(sides.pg, proposed)
    kept = disp.demand
    available = state.available - (proposed - kept)
    tau_a, tau_g = prop.tau, disp.tau
    t = state.t + 1

    found = []

    def flag(what, mask):
        if np.any(mask):
            x, y = np.argwhere(mask)[0]
            found.append(dict(round=t, what=what, segment=(int(x), int(y))))

    if state.kept is not None:
        flag("kept offers not re-proposed", state.kept > proposed + INVARIANT_SLACK)
        flag("passenger wait decreased", tau_a < state.tau_alpha - INVARIANT_SLACK)
        flag("taxi wait increased", tau_g > state.tau_gamma + INVARIANT_SLACK)
    # exact for the closed-form logit solves, bisection resolution otherwise
    floor = 0.0 if sides.exact else INVARIANT_SLACK
    flag("both sides waiting", np.minimum(tau_a, tau_g) > floor)
    flag("kept exceeds proposed", kept > proposed + INVARIANT_SLACK)
    flag("availability grew", available > state.available + INVARIANT_SLACK)
    flag("nonpositive availability", available <= 0.0)
    flag("nonpositive proposals", proposed <= 0.0)
    flag("nonpositive kept offers", kept <= 0.0)
    if found and strict:
        v = found[0]
        raise InvariantError(f"round {v['round']}: {v['what']} at segment {v['segment']}")

    residual = float(np.max(np.abs(proposed - kept)))
    return replace(state, available=available, proposed=proposed, kept=kept, tau_alpha=tau_a,
                   tau_gamma=tau_g, t=t, history=state.history + (residual,),
                   violations=state.violations + tuple(found))


def _skippable(prev, state):
    """Number of further rounds identical to the last one except for slack availability."""
    if prev.proposed is None or not (np.array_equal(prev.proposed, state.proposed)
                                     and np.array_equal(prev.kept, state.kept)):
        return 0
    drop = state.proposed - state.kept
    moving = drop > 0
    if not np.any(moving):
        return 0
    room = (state.available[moving] - state.proposed[moving]) / drop[moving]
    return max(int(np.floor(room.min())), 0)


def da_run(spec, tol=1e-8, max_rounds=100_000, proposer="passengers", strict=False, skip=True):
    """Run rounds until ``max |proposed - kept| <= tol`` and return the limit outcome.

    ``proposer="taxis"`` runs the mirror-image algorithm with the sides
    swapped. ``skip=False`` disables the repeat-round jump, so every round
    is solved explicitly; skipped rounds still count towards ``max_rounds``. Waits are those of the last round's two constrained solves.
    ``diagnostics["trace"]`` holds one row per round: (round, residual,
    min available, max passenger wait, max taxi wait).
    """
    if proposer not in ("passengers", "taxis"):
        raise ValueError(f"proposer must be 'passengers' or 'taxis', got {proposer!r}")
    market = spec.transposed() if proposer == "taxis" else spec
    sides = _Sides(market, tol)
    state = da_init(market)
    trace = []
    skipped = 0
    while state.t < max_rounds:
        prev, state = state, da_step(state, market, tol, strict, _sides=sides)
        trace.append((state.t, state.residual, float(state.available.min()),
                      float(state.tau_alpha.max()), float(state.tau_gamma.max())))
        if state.residual <= tol:
            break
        jump = min(_skippable(prev, state), max_rounds - state.t) if skip else 0
        if jump > 0:
            skipped += jump
            avail = state.available - jump * (state.proposed - state.kept)
            state = replace(state, available=avail, t=state.t + jump)
    if state.residual > tol:
        raise ConvergenceError(
            f"deferred acceptance did not converge: residual {state.residual:.3e} "
            f"after {state.t} rounds",
            residual=state.residual, iterations=state.t, history=list(state.history),
        )
    mu, tau_a, tau_g = state.proposed, state.tau_alpha, state.tau_gamma
    if proposer == "taxis":
        mu, tau_a, tau_g = mu.T, tau_g.T, tau_a.T
    diag = {"solver": "deferred-acceptance", "proposer": proposer, "iterations": state.t,
            "residual": state.residual, "skipped_rounds": skipped,
            "history": list(state.history),
            "violations": list(state.violations), "trace": trace}
    out = EquilibriumOutcome(Matching(mu, spec.n, spec.m), tau_a, tau_g, diag)
    diag["equilibrium_residual"] = equilibrium_residual(spec, out)
    return out
