"""Shared data model: markets, matchings, outcomes.

All numeric fields are dense numpy arrays indexed by position in
``passenger_types`` (rows, the set X) and ``taxi_types`` (columns, the set
Y). Arrays are copied and frozen on construction, so instances can be shared
freely between threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

FEAS_EPS = 1e-9

SHOCK_KINDS = ("logit", "iid", "montecarlo")
SHOCK_FAMILIES = ("gumbel", "normal", "logistic")


class MatchburnError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(MatchburnError, ValueError):
    """Malformed input: bad shapes, masses, utilities or file contents."""


class ConvergenceError(MatchburnError, RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, residual=None, iterations=None, history=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
        self.history = history


class NotSmoothError(MatchburnError, ValueError):
    """A solver or property check was handed a sampled (step-function) provider."""


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    if arr.dtype == object:
        arr = arr.astype(float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ShockSpec:
    """Distribution of the idiosyncratic taste shocks on one side.

    ``kind`` is ``"logit"`` (closed form), ``"iid"`` (i.i.d. shocks of the
    given ``family``, integrated by quadrature of ``order`` nodes) or
    ``"montecarlo"`` (``draws`` common random draws generated from ``seed``).
    Shocks are multiplied by ``sigma``.
    """

    kind: str = "logit"
    sigma: float = 1.0
    family: Optional[str] = None
    order: int = 64
    draws: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SHOCK_KINDS:
            raise ValidationError(f"unknown shock kind {self.kind!r}")
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValidationError(f"shock scale must be positive, got {self.sigma}")
        if self.kind == "logit":
            object.__setattr__(self, "family", "gumbel")
        elif self.family not in SHOCK_FAMILIES:
            raise ValidationError(f"unknown shock family {self.family!r}")
        if self.kind == "iid" and self.order < 16:
            raise ValidationError(f"quadrature order must be >= 16, got {self.order}")
        if self.kind == "montecarlo":
            if self.draws < 10_000:
                raise ValidationError(f"draw count must be >= 1e4, got {self.draws}")
            if not 0 <= self.seed < 2**64:
                raise ValidationError("seed must be a 64-bit unsigned integer")

    @property
    def smooth(self):
        return self.kind != "montecarlo"

    @property
    def is_logit(self):
        return self.kind == "logit" or (self.kind == "iid" and self.family == "gumbel")

    def to_dict(self):
        d = {"kind": self.kind, "sigma": self.sigma}
        if self.kind != "logit":
            d["family"] = self.family
        if self.kind == "iid":
            d["order"] = self.order
        if self.kind == "montecarlo":
            d["draws"] = self.draws
            d["seed"] = self.seed
        return d


@dataclass(frozen=True)
class MarketSpec:
    """A two-sided market instance.

    ``alpha[x, y]`` is what a type-x passenger gets from a type-y taxi and
    ``gamma[x, y]`` what the taxi gets; both are measured in time units. The
    outside option has utility zero on both sides. ``shocks`` is ``None`` for
    a deterministic market; ``passenger_shocks`` / ``taxi_shocks`` optionally
    override it for individual types.
    """

    passenger_types: tuple
    taxi_types: tuple
    n: np.ndarray
    m: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray
    shocks: Optional[ShockSpec] = None
    passenger_shocks: dict = field(default_factory=dict)
    taxi_shocks: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "passenger_types", tuple(str(t) for t in self.passenger_types))
        object.__setattr__(self, "taxi_types", tuple(str(t) for t in self.taxi_types))
        for name in ("n", "m", "alpha", "gamma"):
            try:
                object.__setattr__(self, name, _frozen(getattr(self, name)))
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"field {name!r} is not numeric: {exc}") from None

    @property
    def shape(self):
        return len(self.passenger_types), len(self.taxi_types)

    def shock_for(self, side, index):
        """Shock spec of passenger type ``index`` (side 'alpha') or taxi type (side 'gamma')."""
        if side == "alpha":
            return self.passenger_shocks.get(self.passenger_types[index], self.shocks)
        return self.taxi_shocks.get(self.taxi_types[index], self.shocks)

    def side_shocks(self, side):
        count = self.shape[0] if side == "alpha" else self.shape[1]
        return [self.shock_for(side, i) for i in range(count)]

    @property
    def is_logit(self):
        specs = self.side_shocks("alpha") + self.side_shocks("gamma")
        return all(s is not None and s.is_logit for s in specs)

    @property
    def smooth(self):
        specs = self.side_shocks("alpha") + self.side_shocks("gamma")
        return all(s is not None and s.smooth for s in specs)

    def sigmas(self, side):
        """Per-type shock scales on one side (1.0 where no shocks are set)."""
        return np.array([s.sigma if s is not None else 1.0 for s in self.side_shocks(side)])

    def transposed(self):
        """The same market with the roles of passengers and taxis swapped."""
        return MarketSpec(
            passenger_types=self.taxi_types,
            taxi_types=self.passenger_types,
            n=self.m,
            m=self.n,
            alpha=self.gamma.T,
            gamma=self.alpha.T,
            shocks=self.shocks,
            passenger_shocks=dict(self.taxi_shocks),
            taxi_shocks=dict(self.passenger_shocks),
        )

    def with_shocks(self, shocks):
        return MarketSpec(
            self.passenger_types, self.taxi_types, self.n, self.m, self.alpha, self.gamma,
            shocks=shocks,
        )


def validate_market(spec, integer=False):
    """Check every structural invariant of ``spec`` and return it.

    With ``integer=True`` the masses must also be whole numbers
    (deterministic mode).
    """
    nx, ny = spec.shape
    if nx < 1 or ny < 1:
        raise ValidationError("dimension mismatch: market needs at least one type per side")
    if len(set(spec.passenger_types)) != nx:
        raise ValidationError("duplicate passenger type identifier")
    if len(set(spec.taxi_types)) != ny:
        raise ValidationError("duplicate taxi type identifier")
    for name, arr, size in (("n", spec.n, nx), ("m", spec.m, ny)):
        if arr.shape != (size,):
            raise ValidationError(
                f"dimension mismatch: {name} has shape {arr.shape}, expected ({size},)"
            )
        bad = np.flatnonzero(~(np.isfinite(arr) & (arr > 0)))
        if bad.size:
            raise ValidationError(f"nonpositive mass: {name}[{bad[0]}] = {arr[bad[0]]}")
        if integer and np.any(arr != np.round(arr)):
            i = int(np.flatnonzero(arr != np.round(arr))[0])
            raise ValidationError(f"non-integer mass in deterministic mode: {name}[{i}] = {arr[i]}")
    for name in ("alpha", "gamma"):
        arr = getattr(spec, name)
        if arr.shape != (nx, ny):
            raise ValidationError(
                f"dimension mismatch: {name} has shape {arr.shape}, expected ({nx}, {ny})"
            )
        bad = np.argwhere(~np.isfinite(arr))
        if bad.size:
            x, y = bad[0]
            raise ValidationError(f"non-finite utility: {name}[{x}][{y}] = {arr[x, y]}")
    for ident in spec.passenger_shocks:
        if ident not in spec.passenger_types:
            raise ValidationError(f"shock override for unknown passenger type {ident!r}")
    for ident in spec.taxi_shocks:
        if ident not in spec.taxi_types:
            raise ValidationError(f"shock override for unknown taxi type {ident!r}")
    return spec


@dataclass(frozen=True)
class Matching:
    """Match masses ``mu[x, y]``; unmatched margins are derived, never stored."""

    mu: np.ndarray
    n: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        for name in ("mu", "n", "m"):
            object.__setattr__(self, name, _frozen(getattr(self, name), None))

    @property
    def mu_x0(self):
        return self.n - self.mu.sum(axis=1)

    @property
    def mu_0y(self):
        return self.m - self.mu.sum(axis=0)

    def check(self, eps=FEAS_EPS):
        """Raise ValidationError unless the matching is nonnegative and feasible within ``eps``."""
        if self.mu.shape != (self.n.size, self.m.size):
            raise ValidationError(f"dimension mismatch: mu has shape {self.mu.shape}")
        if np.any(self.mu < -eps):
            x, y = np.argwhere(self.mu < -eps)[0]
            raise ValidationError(f"negative match mass at ({x}, {y})")
        if np.any(self.mu_x0 < -eps):
            raise ValidationError(f"row capacity exceeded at x={int(np.argmin(self.mu_x0))}")
        if np.any(self.mu_0y < -eps):
            raise ValidationError(f"column capacity exceeded at y={int(np.argmin(self.mu_0y))}")
        return self


@dataclass(frozen=True)
class EquilibriumOutcome:
    """Result of a random-utility solver: matching, one wait matrix per side, diagnostics."""

    matching: Matching
    tau_alpha: np.ndarray
    tau_gamma: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "tau_alpha", _frozen(self.tau_alpha))
        object.__setattr__(self, "tau_gamma", _frozen(self.tau_gamma))

    @property
    def mu(self):
        return self.matching.mu


@dataclass(frozen=True)
class DeterministicOutcome:
    """Integral matching with type-level payoffs ``u`` (passengers) and ``v`` (taxis).

    Payoffs are kept as plain Python sequences so exact values (ints,
    Fractions) survive; use ``np.asarray`` for float work.
    """

    mu: np.ndarray
    u: tuple
    v: tuple

    def __post_init__(self):
        mu = np.array(self.mu, copy=True)
        if mu.dtype.kind == "f":
            if np.any(mu != np.round(mu)):
                raise ValidationError("deterministic matching must be integral")
            mu = mu.astype(np.int64)
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "u", tuple(self.u))
        object.__setattr__(self, "v", tuple(self.v))


def recover_waits(out, spec):
    """Waiting times compatible with a deterministic outcome.

    Returns ``(tau_alpha, tau_gamma)`` with ``tau_alpha[x, y] = max(alpha - u_x, 0)``
    and ``tau_gamma[x, y] = max(gamma - v_y, 0)``.
    """
    u = np.asarray([float(a) for a in out.u])
    v = np.asarray([float(b) for b in out.v])
    tau_a = np.maximum(spec.alpha - u[:, None], 0.0)
    tau_g = np.maximum(spec.gamma - v[None, :], 0.0)
    return tau_a, tau_g


@dataclass(frozen=True)
class IndividualMarket:
    """Individual agents, each tagged with a type index into a MarketSpec."""

    spec: MarketSpec
    passengers: tuple  # (id, type index)
    taxis: tuple

    @classmethod
    def from_spec(cls, spec):
        """One individual per unit of integer mass, ids ``"<type>#<k>"``."""
        validate_market(spec, integer=True)
        passengers = tuple(
            (f"{t}#{k}", x) for x, t in enumerate(spec.passenger_types) for k in range(int(spec.n[x]))
        )
        taxis = tuple(
            (f"{t}#{k}", y) for y, t in enumerate(spec.taxi_types) for k in range(int(spec.m[y]))
        )
        return cls(spec, passengers, taxis)

    def __post_init__(self):
        nx, ny = self.spec.shape
        cx = np.bincount([x for _, x in self.passengers], minlength=nx)
        cy = np.bincount([y for _, y in self.taxis], minlength=ny)
        if len(cx) != nx or np.any(cx != self.spec.n):
            raise ValidationError("passenger counts per type do not match n")
        if len(cy) != ny or np.any(cy != self.spec.m):
            raise ValidationError("taxi counts per type do not match m")

    @property
    def passenger_type(self):
        return np.array([x for _, x in self.passengers], dtype=np.int64)

    @property
    def taxi_type(self):
        return np.array([y for _, y in self.taxis], dtype=np.int64)

    @property
    def alpha(self):
        """Individual-level utilities: alpha_ij = alpha[x_i, y_j]."""
        return self.spec.alpha[np.ix_(self.passenger_type, self.taxi_type)]

    @property
    def gamma(self):
        return self.spec.gamma[np.ix_(self.passenger_type, self.taxi_type)]


@dataclass(frozen=True)
class IndividualMatching:
    """Binary assignment ``pi[i, j]`` between individual passengers and taxis."""

    pi: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pi = np.array(self.pi, dtype=np.int64, copy=True)
        if np.any((pi != 0) & (pi != 1)):
            raise ValidationError("individual matching must be binary")
        if np.any(pi.sum(axis=1) > 1) or np.any(pi.sum(axis=0) > 1):
            raise ValidationError("individual matching is not one-to-one")
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)
