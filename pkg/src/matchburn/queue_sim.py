"""Discrete-time fluid market with queues as the money-burning device.

Every period a fresh cohort of ``n`` passengers and ``m`` taxis arrives and
chooses myopically given the current waits; each segment clears the shorter
of its two queues. Waits are positive exactly on the side with a nonempty
queue. How queue length translates into waiting time is a modelling choice;
two maps are provided:

``little``
    ``tau = Q / rate`` where ``rate`` is the arrival mass of the queue's type
    (``n_x`` for passengers, ``m_y`` for taxis): the wait of a queue served
    at that rate.
``relaxation``
    ``tau_next = (1 - kappa) tau + kappa Q / rate`` on nonempty queues and
    zero otherwise, a damped version of the above.

Using the realized inflow as the rate instead is unstable: a longer wait
lowers the inflow, which lengthens the wait further.

At a stationary point inflows on both sides equal the cleared mass and at
most one side waits, which is the static equilibrium.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .demand import make_provider
from .equilibrium import equilibrium_residual, solve_equilibrium, solve_equilibrium_logit
from .model import EquilibriumOutcome, Matching, NotSmoothError, validate_market

WAIT_MAPS = ("relaxation", "little")
KAPPA = 0.5


@dataclass(frozen=True)
class QueueState:
    """Queues and perceived waits at the start of period ``t`` (X-by-Y each).

    ``matched``, ``inflow_alpha`` and ``inflow_gamma`` describe the period
    that produced this state (zeros initially).
    """

    Q_alpha: np.ndarray
    Q_gamma: np.ndarray
    tau_alpha: np.ndarray
    tau_gamma: np.ndarray
    t: int = 0
    matched: np.ndarray = None
    inflow_alpha: np.ndarray = None
    inflow_gamma: np.ndarray = None

    @classmethod
    def empty(cls, shape):
        z = np.zeros(shape)
        return cls(z, z, z, z, 0, z, z, z)


class _Market:
    def __init__(self, spec):
        validate_market(spec)
        self.spec = spec
        self.pa = make_provider(spec, "alpha")
        self.pg = make_provider(spec, "gamma")
        if not (self.pa.smooth and self.pg.smooth):
            raise NotSmoothError("provider not smooth: simulation needs choice probabilities")
        X, Y = spec.shape
        self.rate_a = np.broadcast_to(np.asarray(spec.n, float)[:, None], (X, Y))
        self.rate_g = np.broadcast_to(np.asarray(spec.m, float)[None, :], (X, Y))


def _next_wait(wait_map, tau, Q, rate, kappa):
    target = Q / rate
    if wait_map == "little":
        return target
    return np.where(Q > 0, (1.0 - kappa) * tau + kappa * target, 0.0)


def sim_step(state, spec, wait_map="relaxation", kappa=KAPPA, _market=None):
    """Advance one period: arrivals choose, the shorter queue clears, waits update."""
    if wait_map not in WAIT_MAPS:
        raise ValueError(f"wait_map must be one of {WAIT_MAPS}, got {wait_map!r}")
    mk = _market or _Market(spec)
    in_a, _ = mk.pa.demand(state.tau_alpha)
    in_g, _ = mk.pg.demand(state.tau_gamma)
    line_a = state.Q_alpha + in_a
    line_g = state.Q_gamma + in_g
    cleared = np.minimum(line_a, line_g)
    # the shorter line empties exactly: x - min(x, y) is 0.0 when x <= y
    Q_a = line_a - cleared
    Q_g = line_g - cleared
    tau_a = _next_wait(wait_map, state.tau_alpha, Q_a, mk.rate_a, kappa)
    tau_g = _next_wait(wait_map, state.tau_gamma, Q_g, mk.rate_g, kappa)
    return QueueState(Q_a, Q_g, tau_a, tau_g, state.t + 1, cleared, in_a, in_g)


@dataclass
class SimReport:
    """Outcome of a simulation run."""

    stationary: bool
    periods: int
    t_stationary: int = None
    step_size: float = np.inf
    outcome: EquilibriumOutcome = None
    equilibrium_residual: float = np.inf
    static: EquilibriumOutcome = None
    gap_mu: float = np.inf
    gap_tau: float = np.inf
    one_sided_violations: int = 0
    details: dict = field(default_factory=dict)

    def __str__(self):
        if not self.stationary:
            return (f"not stationary after {self.periods} periods "
                    f"(last step {self.step_size:.3e})")
        return (f"stationary at t={self.t_stationary}: equilibrium residual "
                f"{self.equilibrium_residual:.3e}, |mu - static| {self.gap_mu:.3e}, "
                f"|tau - static| {self.gap_tau:.3e}")


def sim_run(spec, wait_map="relaxation", T=5000, stat_tol=1e-6, kappa=KAPPA, initial=None,
            compare=True):
    """Simulate up to ``T`` periods, stopping at the first stationary period.

    A period is stationary when queues and waits move by at most ``stat_tol``
    in sup-norm. Returns ``(trajectory, report)``; the trajectory lists every
    state starting with the initial one. With ``compare=True`` the stationary
    point is compared with the static equilibrium solver.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    mk = _Market(spec)
    state = initial or QueueState.empty(spec.shape)
    traj = [state]
    report = SimReport(False, 0)
    for _ in range(T):
        nxt = sim_step(state, spec, wait_map, kappa, _market=mk)
        traj.append(nxt)
        if np.any(np.minimum(nxt.Q_alpha, nxt.Q_gamma) != 0.0):
            report.one_sided_violations += 1
        step = max(np.max(np.abs(nxt.Q_alpha - state.Q_alpha)),
                   np.max(np.abs(nxt.Q_gamma - state.Q_gamma)),
                   np.max(np.abs(nxt.tau_alpha - state.tau_alpha)),
                   np.max(np.abs(nxt.tau_gamma - state.tau_gamma)))
        state = nxt
        report.step_size = float(step)
        if step <= stat_tol:
            report.stationary = True
            report.t_stationary = state.t
            break
    report.periods = state.t
    # waits in force during the last period and the mass they cleared
    prev = traj[-2]
    out = EquilibriumOutcome(Matching(state.matched, spec.n, spec.m), prev.tau_alpha,
                             prev.tau_gamma, {"solver": "simulation", "wait_map": wait_map})
    report.outcome = out
    report.equilibrium_residual = equilibrium_residual(spec, out)
    report.details["equilibrium_ok"] = report.equilibrium_residual <= 10 * stat_tol
    if compare:
        static = solve_equilibrium_logit(spec) if spec.is_logit else solve_equilibrium(spec)
        report.static = static
        report.gap_mu = float(np.max(np.abs(out.mu - static.mu)))
        report.gap_tau = float(max(np.max(np.abs(out.tau_alpha - static.tau_alpha)),
                                   np.max(np.abs(out.tau_gamma - static.tau_gamma))))
    return traj, report


def conservation_error(trajectory):
    """Largest gap in ``cumulative inflow = cumulative cleared + queue`` over a run, per side."""
    cum_a = cum_g = cum_c = 0.0
    worst = 0.0
    start = trajectory[0]
    for s in trajectory[1:]:
        cum_a = cum_a + s.inflow_alpha
        cum_g = cum_g + s.inflow_gamma
        cum_c = cum_c + s.matched
        worst = max(worst,
                    float(np.max(np.abs(start.Q_alpha + cum_a - cum_c - s.Q_alpha))),
                    float(np.max(np.abs(start.Q_gamma + cum_g - cum_c - s.Q_gamma))))
    return worst


def trace_rows(trajectory):
    """CSV rows: t, then per-segment Q_alpha, Q_gamma, tau_alpha, tau_gamma, cleared."""
    return [[s.t, *s.Q_alpha.ravel(), *s.Q_gamma.ravel(), *s.tau_alpha.ravel(),
             *s.tau_gamma.ravel(), *s.matched.ravel()] for s in trajectory]


def trace_header(spec):
    cols = ["t"]
    for name in ("Q_alpha", "Q_gamma", "tau_alpha", "tau_gamma", "cleared"):
        cols += [f"{name}[{x}|{y}]" for x in spec.passenger_types for y in spec.taxi_types]
    return cols
