"""Capacity-constrained discrete choice on one side of the market.

Given capacities ``mu_bar > 0`` we look for waits ``tau >= 0`` such that
demand never exceeds capacity and waits are positive only on saturated
segments. Writing ``tau = theta^+`` and the slack ``rho = theta^-`` turns this
into the single equation ``demand(theta^+) + theta^- = mu_bar`` in an
unconstrained matrix ``theta``, which has exactly one solution for smooth
shocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .demand import DemandProvider, make_provider
from .model import ConvergenceError, MarketSpec, NotSmoothError, ValidationError

MIN_CAPACITY = 1e-12
# waits below sigma * WAIT_FLOOR are roundoff from a segment sitting exactly at capacity
WAIT_FLOOR = 1e-12
CBAR_CLIP = 1e6


@dataclass(frozen=True)
class ConstrainedSolution:
    """Solution of the constrained choice problem, all matrices X-by-Y.

    ``tau = max(theta, 0)`` are the shadow waits, ``rho = max(-theta, 0)`` the
    unused capacity and ``demand`` the constrained demand.
    """

    theta: np.ndarray
    demand: np.ndarray
    outside: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def tau(self):
        return np.maximum(self.theta, 0.0)

    @property
    def rho(self):
        return np.maximum(-self.theta, 0.0)


def _check_capacity(mu_bar, shape):
    cap = np.asarray(mu_bar, dtype=float)
    if cap.shape != shape:
        raise ValidationError(f"capacity has shape {cap.shape}, expected {shape}")
    if not np.all(np.isfinite(cap)):
        raise ValidationError("non-finite capacity")
    if np.any(cap < MIN_CAPACITY):
        x, y = np.argwhere(cap < MIN_CAPACITY)[0]
        raise ValidationError(f"capacity must be strictly positive, got {cap[x, y]} at ({x}, {y})")
    return cap


def upper_wait_bound(provider, cap_min, tol):
    """A wait level at which every demand entry is below ``cap_min``.

    Starts from a utility-spread estimate and doubles until the bound is
    verified numerically on the provider itself.
    """
    util, mass, sigma = provider.util, provider.mass, provider.sigma
    spread = np.max(np.abs(util))
    c = spread + np.max(sigma) * (np.log(np.max(mass) * (util.shape[1] + 1) / min(cap_min, tol)) + 2.0)
    c = max(c, 1.0)
    X, Y = util.shape if provider.side == "alpha" else util.T.shape
    while c < CBAR_CLIP:
        dem, _ = provider.demand(np.full((X, Y), c))
        if np.all(dem < cap_min):
            return c
        c *= 2.0
    return CBAR_CLIP


def solve_constrained(provider, mu_bar, tol=1e-10, max_iter=100_000, order=None, trace=False):
    """Solve ``demand(theta^+) + theta^- = mu_bar`` by monotone Gauss-Seidel.

    Sweeps start at ``theta = -mu_bar`` and visit coordinates in row-major
    order (or the permutation ``order`` of flat X-by-Y indices). With
    ``trace=True`` the iterate after every sweep is kept in
    ``diagnostics["trace"]``.
    """
    if not provider.smooth:
        raise NotSmoothError("provider not smooth: constrained choice needs continuous demand")
    shape = provider.util.shape if provider.side == "alpha" else provider.util.T.shape
    cap = _check_capacity(mu_bar, shape)
    capo = provider._orient(cap)
    theta = -capo.copy()
    cbar = upper_wait_bound(provider, float(cap.min()), tol)
    R, Kn = capo.shape
    flat = _flat_order(order, shape, provider.side)

    history = []
    if trace:
        sweeps, residual = 0, np.inf
        history.append(theta.copy())
        while sweeps < max_iter:
            s, residual = K.gs_constrained(*provider.arrays, capo, theta, cbar, tol, 1, flat)
            if s == 0:
                break
            sweeps += s
            history.append(theta.copy())
    else:
        sweeps, residual = K.gs_constrained(*provider.arrays, capo, theta, cbar, tol, max_iter, flat)
    if residual > tol:
        raise ConvergenceError(
            f"constrained choice did not converge: residual {residual:.3e} after {sweeps} sweeps",
            residual=residual, iterations=sweeps,
        )
    th = theta if provider.side == "alpha" else theta.T
    dem, outside = provider.demand(np.maximum(th, 0.0))
    diag = {"solver": "gauss-seidel", "iterations": int(sweeps), "residual": float(residual),
            "cbar": float(cbar)}
    if trace:
        diag["trace"] = [h if provider.side == "alpha" else h.T for h in history]
    return ConstrainedSolution(np.array(th), dem, outside, diag)


def _flat_order(order, shape, side):
    """Translate a permutation of X-by-Y flat indices into chooser orientation."""
    X, Y = shape
    if order is None:
        idx = np.arange(X * Y)
    else:
        idx = np.asarray(order, dtype=np.int64)
        if sorted(idx.tolist()) != list(range(X * Y)):
            raise ValueError("order must be a permutation of range(X * Y)")
    if side == "alpha":
        return idx.astype(np.int64)
    x, y = np.divmod(idx, Y)
    return (y * X + x).astype(np.int64)


def solve_constrained_logit(market, mu_bar, side="alpha"):
    """Exact constrained choice for logit shocks.

    For each chooser the outside share ``t`` solves the piecewise-linear
    equation ``t + sum_k min(t * exp(util_k / sigma), mu_bar_k) = mass``;
    waits follow from the saturated segments. ``market`` is a MarketSpec
    (with ``side``) or a logit DemandProvider.
    """
    provider = market if isinstance(market, DemandProvider) else make_provider(market, side)
    if not provider.is_logit:
        raise ValidationError("exact constrained solve requires logit shocks")
    shape = provider.util.shape if provider.side == "alpha" else provider.util.T.shape
    cap = provider._orient(_check_capacity(mu_bar, shape))
    log_scale = provider.util / provider.sigma[:, None]
    log_cap = np.log(cap)
    log_t = np.empty(cap.shape[0])
    K.logit_capped_rows(log_scale, log_cap, provider.mass, log_t)
    theta, dem = logit_theta(log_scale, log_cap, log_t, provider.sigma)
    outside = np.exp(log_t)
    if provider.side == "gamma":
        theta, dem = theta.T, dem.T
    return ConstrainedSolution(theta, dem, outside, {"solver": "logit-exact", "iterations": 1,
                                                     "residual": 0.0})


def logit_theta(log_scale, log_cap, log_t, sigma):
    """Waits and slack from the outside shares of an exact logit solve (chooser orientation)."""
    log_free = log_t[:, None] + log_scale
    log_dem = np.minimum(log_free, log_cap)
    dem = np.exp(log_dem)
    tau = sigma[:, None] * (log_free - log_dem)
    tau[tau <= sigma[:, None] * WAIT_FLOOR] = 0.0
    rho = np.exp(log_cap) - dem
    rho[tau > 0.0] = 0.0
    theta = np.where(tau > 0.0, tau, -rho)
    return theta, dem
