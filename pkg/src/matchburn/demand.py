"""Discrete-choice demand systems for each side of the market.

A :class:`DemandProvider` maps a wait matrix on one side to the X-by-Y
demand matrix and the outside-option demands of that side. Built-in shock
distributions are i.i.d. across alternatives, which reduces every choice
probability to a one-dimensional integral:

* logit (Gumbel shocks): closed form;
* normal: Gauss-Hermite quadrature;
* logistic: Gauss-Legendre quadrature on [-12, 12];
* Monte Carlo: a fixed set of common random draws, so demand is a
  deterministic (but piecewise-constant) function of the waits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .model import NotSmoothError, ShockSpec, ValidationError

LOGISTIC_HALF_WIDTH = 12.0

_FAMILY_CODE = {"gumbel": K.FAM_LOGIT, "normal": K.FAM_NORMAL, "logistic": K.FAM_LOGISTIC}


def quadrature_rule(family, order):
    """Nodes and density-weighted weights for E[g(e)] with e from the standard ``family``."""
    if family == "normal":
        x, w = np.polynomial.hermite.hermgauss(order)
        return np.sqrt(2.0) * x, w / np.sqrt(np.pi)
    if family == "logistic":
        x, w = np.polynomial.legendre.leggauss(order)
        e = LOGISTIC_HALF_WIDTH * x
        dens = np.exp(-np.abs(e)) / (1.0 + np.exp(-np.abs(e))) ** 2
        return e, LOGISTIC_HALF_WIDTH * w * dens
    raise ValidationError(f"no quadrature rule for family {family!r}")


@dataclass
class DemandProvider:
    """Demand map of one side of one market.

    ``side`` is ``"alpha"`` (passengers choose taxis) or ``"gamma"`` (taxis
    choose passengers). Internally rows are the choosing types; :meth:`demand`
    takes and returns X-by-Y matrices regardless of side.
    """

    side: str
    util: np.ndarray
    mass: np.ndarray
    sigma: np.ndarray
    fam: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    exactness: str
    shocks: list = field(default_factory=list)
    _draws: list = field(default=None, repr=False)

    @property
    def smooth(self):
        return self.exactness != "sampled"

    @property
    def is_logit(self):
        return self.exactness == "closed-form"

    @property
    def arrays(self):
        """Positional kernel arguments (util, mass, sigma, fam, nodes, weights)."""
        return self.util, self.mass, self.sigma, self.fam, self.nodes, self.weights

    def _orient(self, mat):
        mat = np.asarray(mat, dtype=float)
        return np.ascontiguousarray(mat if self.side == "alpha" else mat.T)

    def demand(self, tau):
        """Return ``(demand, outside)`` at the wait matrix ``tau`` (X-by-Y)."""
        t = self._orient(tau)
        if t.shape != self.util.shape:
            raise ValidationError(f"wait matrix has shape {np.shape(tau)}, expected "
                                  f"{self.util.shape if self.side == 'alpha' else self.util.T.shape}")
        if not np.all(np.isfinite(t)):
            raise ValidationError("non-finite wait time")
        if self.exactness == "sampled":
            dem, outside = self._sampled_demand(t)
        else:
            dem = np.empty_like(t)
            outside = np.empty(t.shape[0])
            K.side_demand(*self.arrays, t, dem, outside)
        return (dem if self.side == "alpha" else dem.T), outside

    def _sampled_demand(self, t):
        R, Kn = t.shape
        dem = np.empty((R, Kn))
        outside = np.empty(R)
        for r in range(R):
            v = np.append((self.util[r] - t[r]) / self.sigma[r], 0.0)
            choice = np.argmax(self._draws[r] + v, axis=1)
            freq = np.bincount(choice, minlength=Kn + 1) / choice.size
            dem[r] = self.mass[r] * freq[:Kn]
            outside[r] = self.mass[r] * freq[Kn]
        return dem, outside


def _draws(spec: ShockSpec, side_code, row, size):
    rng = np.random.default_rng([spec.seed, side_code, row])
    if spec.family == "gumbel":
        return rng.gumbel(size=size)
    if spec.family == "normal":
        return rng.standard_normal(size)
    return rng.logistic(size=size)


def make_provider(spec, side):
    """Build the demand provider of ``side`` ('alpha' or 'gamma') for a market."""
    if side not in ("alpha", "gamma"):
        raise ValueError(f"side must be 'alpha' or 'gamma', got {side!r}")
    shocks = spec.side_shocks(side)
    if any(s is None for s in shocks):
        raise ValidationError("market has no shock distribution (deterministic mode)")
    util = np.ascontiguousarray(spec.alpha if side == "alpha" else spec.gamma.T, dtype=float)
    mass = np.asarray(spec.n if side == "alpha" else spec.m, dtype=float)
    R, Kn = util.shape
    sampled = [s.kind == "montecarlo" for s in shocks]
    if any(sampled) and not all(sampled):
        raise ValidationError("cannot mix sampled and integrated shocks on one side")

    sigma = np.array([s.sigma for s in shocks], dtype=float)
    fam = np.array([_FAMILY_CODE[s.family] if s.kind == "iid" else K.FAM_LOGIT for s in shocks],
                   dtype=np.int64)
    rules = [quadrature_rule(s.family, s.order) if s.kind == "iid" and s.family != "gumbel"
             else (np.zeros(1), np.zeros(1)) for s in shocks]
    Q = max(len(r[0]) for r in rules)
    nodes = np.zeros((R, Q))
    weights = np.zeros((R, Q))
    for r, (x, w) in enumerate(rules):
        nodes[r, : len(x)] = x
        weights[r, : len(w)] = w

    if all(sampled):
        exactness = "sampled"
    elif np.all(fam == K.FAM_LOGIT):
        exactness = "closed-form"
    else:
        exactness = "quadrature"
    prov = DemandProvider(side, util, mass, sigma, fam, nodes, weights, exactness, list(shocks))
    if exactness == "sampled":
        code = 0 if side == "alpha" else 1
        prov._draws = [_draws(s, code, r, (s.draws, Kn + 1)) for r, s in enumerate(shocks)]
    return prov


def demand_alpha(spec, tau):
    """Passenger demand for taxis: ``(X-by-Y demand, outside vector over X)``."""
    return make_provider(spec, "alpha").demand(tau)


def demand_gamma(spec, tau):
    """Taxi demand for passengers: ``(X-by-Y demand, outside vector over Y)``."""
    return make_provider(spec, "gamma").demand(tau)


@dataclass
class PropertyReport:
    """Outcome of a randomized property check."""

    name: str
    trials: int
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def __str__(self):
        status = "ok" if self.ok else f"{len(self.violations)} violation(s)"
        return f"{self.name}: {self.trials} trials, {status}"


def check_demand_properties(provider, trials=100, seed=0, tau_scale=2.0, delta=None, slack=1e-13):
    """Randomized check of the comparative statics a smooth demand system must have.

    Each trial draws waits uniformly in ``[-tau_scale, tau_scale]``, bumps one
    coordinate (x, y) by ``delta`` (random in (0.05, 1] when ``None``) and
    verifies: own demand strictly decreases, other alternatives of the same
    chooser weakly increase, the outside option strictly increases, and every
    other chooser is unaffected. With ``delta == 0`` only the weak
    statements are meaningful and nothing may change.
    """
    if not provider.smooth:
        raise NotSmoothError("provider not smooth: sampled demand is a step function")
    rng = np.random.default_rng(seed)
    X, Y = provider.util.shape if provider.side == "alpha" else provider.util.T.shape
    report = PropertyReport("demand-properties/" + provider.side, trials)
    for t in range(trials):
        tau = rng.uniform(-tau_scale, tau_scale, size=(X, Y))
        x, y = int(rng.integers(X)), int(rng.integers(Y))
        d = rng.uniform(0.05, 1.0) if delta is None else float(delta)
        bumped = tau.copy()
        bumped[x, y] += d
        d0, o0 = provider.demand(tau)
        d1, o1 = provider.demand(bumped)
        # row index of the chooser owning coordinate (x, y)
        r = x if provider.side == "alpha" else y
        own0, own1 = d0[x, y], d1[x, y]
        witness = dict(trial=t, tau=tau, coord=(x, y), delta=d)
        if d > 0:
            if not own1 < own0:
                report.violations.append(dict(witness, what="own demand not strictly decreasing"))
            if not o1[r] > o0[r]:
                report.violations.append(dict(witness, what="outside demand not strictly increasing"))
        elif not (own1 == own0 and o1[r] == o0[r]):
            report.violations.append(dict(witness, what="zero bump changed demand"))
        if provider.side == "alpha":
            cross0, cross1 = np.delete(d0[x], y), np.delete(d1[x], y)
            rest0, rest1 = np.delete(d0, x, axis=0), np.delete(d1, x, axis=0)
            out_rest0, out_rest1 = np.delete(o0, x), np.delete(o1, x)
        else:
            cross0, cross1 = np.delete(d0[:, y], x), np.delete(d1[:, y], x)
            rest0, rest1 = np.delete(d0, y, axis=1), np.delete(d1, y, axis=1)
            out_rest0, out_rest1 = np.delete(o0, y), np.delete(o1, y)
        if np.any(cross1 < cross0 - slack):
            report.violations.append(dict(witness, what="cross demand decreased"))
        if not (np.array_equal(rest0, rest1) and np.array_equal(out_rest0, out_rest1)):
            report.violations.append(dict(witness, what="other choosers affected"))
    return report
