"""Deterministic-utility matching: stability checkers, the individual/type bridge
and the vanishing-noise limit of the logit model.

Both checkers work in exact rational arithmetic. Float utilities are
converted with :class:`fractions.Fraction`, which represents a binary float
exactly, so ``eps=0`` really means zero tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .equilibrium import solve_equilibrium_logit
from .model import (DeterministicOutcome, IndividualMarket, IndividualMatching, ShockSpec,
                    ValidationError, validate_market)

LIMIT_EPS = 1e-7


def _q(value):
    return value if isinstance(value, Fraction) else Fraction(value)


def _qmat(arr):
    arr = np.asarray(arr)
    return [[_q(a.item() if hasattr(a, "item") else a) for a in row] for row in arr]


@dataclass
class StabilityReport:
    """Verdict of a stability check; ``violations`` lists every failed condition."""

    kind: str
    eps: Fraction
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def conditions(self):
        """Sorted set of the condition labels that failed, e.g. ``['(iv)']``."""
        return sorted({v["condition"] for v in self.violations})

    def add(self, condition, where, detail):
        self.violations.append({"condition": condition, "where": where, "detail": detail})

    def __str__(self):
        if self.ok:
            return f"{self.kind}: stable (eps={float(self.eps):g})"
        lines = [f"{self.kind}: NOT stable, {len(self.violations)} violation(s)"]
        lines += [f"  {v['condition']} at {v['where']}: {v['detail']}" for v in self.violations]
        return "\n".join(lines)


def check_aggregate_stability(spec, candidate, eps=0):
    """Check the six type-level stability conditions for ``(mu, u, v)``.

    (i) integral, nonnegative matching; (ii)/(iii) row and column capacities;
    (iv) ``max(u_x - alpha_xy, v_y - gamma_xy) >= 0`` with equality where
    ``mu_xy > 0``; (v)/(vi) nonnegative payoffs, zero for types with
    unmatched members. Every violation is reported with its indices.
    """
    X, Y = spec.shape
    eps = _q(eps)
    rep = StabilityReport("aggregate", eps)
    mu = np.asarray(candidate.mu)
    if mu.shape != (X, Y) or len(candidate.u) != X or len(candidate.v) != Y:
        raise ValidationError(
            f"dimension mismatch: outcome has mu {mu.shape}, |u|={len(candidate.u)}, "
            f"|v|={len(candidate.v)} for a {X}x{Y} market"
        )
    u = [_q(a) for a in candidate.u]
    v = [_q(b) for b in candidate.v]
    alpha, gamma = _qmat(spec.alpha), _qmat(spec.gamma)
    n = [_q(float(a)) for a in spec.n]
    m = [_q(float(b)) for b in spec.m]
    mu_q = _qmat(mu)

    for x in range(X):
        for y in range(Y):
            if mu_q[x][y].denominator != 1 or mu_q[x][y] < 0:
                rep.add("(i)", (x, y), f"mu = {mu_q[x][y]} is not a nonnegative integer")
    row = [sum(mu_q[x]) for x in range(X)]
    col = [sum(mu_q[x][y] for x in range(X)) for y in range(Y)]
    for x in range(X):
        if row[x] > n[x]:
            rep.add("(ii)", (x,), f"sum_y mu = {row[x]} > n = {n[x]}")
    for y in range(Y):
        if col[y] > m[y]:
            rep.add("(iii)", (y,), f"sum_x mu = {col[y]} > m = {m[y]}")
    for x in range(X):
        for y in range(Y):
            slack = max(u[x] - alpha[x][y], v[y] - gamma[x][y])
            if slack < -eps:
                rep.add("(iv)", (x, y), f"max(u - alpha, v - gamma) = {float(slack):.12g} < 0")
            elif mu_q[x][y] > 0 and slack > eps:
                rep.add("(iv)", (x, y),
                        f"matched segment has max(u - alpha, v - gamma) = {float(slack):.12g} != 0")
    for label, pay, margin, who in (("(v)", u, [n[x] - row[x] for x in range(X)], "passenger"),
                                    ("(vi)", v, [m[y] - col[y] for y in range(Y)], "taxi")):
        for k, (p, free) in enumerate(zip(pay, margin)):
            if p < -eps:
                rep.add(label, (k,), f"{who} payoff {float(p):.12g} < 0")
            elif free > 0 and p > eps:
                rep.add(label, (k,), f"{who} type has {free} unmatched but payoff {float(p):.12g} != 0")
    return rep


def _individual_payoffs(market, pi):
    alpha, gamma = _qmat(market.alpha), _qmat(market.gamma)
    I, J = pi.shape
    u = [sum((alpha[i][j] for j in range(J) if pi[i, j]), Fraction(0)) for i in range(I)]
    v = [sum((gamma[i][j] for i in range(I) if pi[i, j]), Fraction(0)) for j in range(J)]
    return u, v, alpha, gamma


def check_classical_stability(market, pi):
    """Check individual-level stability of a one-to-one matching ``pi``.

    Payoffs are ``u_i = sum_j pi_ij alpha_ij`` and ``v_j = sum_i pi_ij gamma_ij``.
    A blocking pair ``(i, j)`` has ``alpha_ij > u_i`` and ``gamma_ij > v_j``;
    a blocking agent has a negative payoff.
    """
    p = np.asarray(pi.pi if isinstance(pi, IndividualMatching) else pi)
    I, J = len(market.passengers), len(market.taxis)
    rep = StabilityReport("classical", Fraction(0))
    if p.shape != (I, J):
        raise ValidationError(f"dimension mismatch: pi has shape {p.shape}, expected ({I}, {J})")
    if np.any((p != 0) & (p != 1)):
        rep.add("(i)", None, "pi is not binary")
    for i in np.flatnonzero(p.sum(axis=1) > 1):
        rep.add("(ii)", (market.passengers[i][0],), "passenger matched more than once")
    for j in np.flatnonzero(p.sum(axis=0) > 1):
        rep.add("(iii)", (market.taxis[j][0],), "taxi matched more than once")
    u, v, alpha, gamma = _individual_payoffs(market, p)
    for i in range(I):
        for j in range(J):
            if max(u[i] - alpha[i][j], v[j] - gamma[i][j]) < 0:
                rep.add("(iv)", (market.passengers[i][0], market.taxis[j][0]), "blocking pair")
    for i in range(I):
        if u[i] < 0:
            rep.add("(v)", (market.passengers[i][0],), f"payoff {float(u[i]):.12g} < 0")
    for j in range(J):
        if v[j] < 0:
            rep.add("(vi)", (market.taxis[j][0],), f"payoff {float(v[j]):.12g} < 0")
    return rep


def classical_da(market, proposer="passengers", seed=0):
    """Gale-Shapley over individuals with seeded tie-breaking.

    Type-level preferences have ties, so each agent's ranking is completed
    by uniform random perturbation ranks drawn from ``seed``; a partner is
    acceptable iff its utility is strictly positive. The result is stable for
    the completed strict preferences and therefore stable with ties.
    """
    if proposer not in ("passengers", "taxis"):
        raise ValueError(f"proposer must be 'passengers' or 'taxis', got {proposer!r}")
    alpha, gamma = market.alpha, market.gamma
    I, J = alpha.shape
    rng = np.random.default_rng(seed)
    tie_p = rng.permutation(I * J).reshape(I, J)
    tie_t = rng.permutation(I * J).reshape(I, J)
    # rank keys: higher utility first, then higher perturbation rank
    pref_p = [sorted((j for j in range(J) if alpha[i, j] > 0),
                     key=lambda j, i=i: (-alpha[i, j], -tie_p[i, j])) for i in range(I)]
    score_t = {(i, j): (gamma[i, j], tie_t[i, j]) for i in range(I) for j in range(J)}
    pref_t = [sorted((i for i in range(I) if gamma[i, j] > 0),
                     key=lambda i, j=j: (-gamma[i, j], -tie_t[i, j])) for j in range(J)]
    score_p = {(i, j): (alpha[i, j], tie_p[i, j]) for i in range(I) for j in range(J)}

    if proposer == "passengers":
        prefs, accept = pref_p, lambda j, i: gamma[i, j] > 0
        better = lambda j, new, old: score_t[(new, j)] > score_t[(old, j)]
    else:
        prefs, accept = pref_t, lambda i, j: alpha[i, j] > 0
        better = lambda i, new, old: score_p[(i, new)] > score_p[(i, old)]

    nprop = len(prefs)
    held = {}  # receiver -> proposer
    nxt = [0] * nprop
    free = list(range(nprop))[::-1]
    while free:
        a = free.pop()
        while nxt[a] < len(prefs[a]):
            b = prefs[a][nxt[a]]
            nxt[a] += 1
            if not accept(b, a):
                continue
            cur = held.get(b)
            if cur is None:
                held[b] = a
                break
            if better(b, a, cur):
                held[b] = a
                free.append(cur)
                break
    pi = np.zeros((I, J), dtype=np.int64)
    for b, a in held.items():
        i, j = (a, b) if proposer == "passengers" else (b, a)
        pi[i, j] = 1
    meta = {"proposer": proposer, "seed": seed, "tie_break_passengers": tie_p,
            "tie_break_taxis": tie_t}
    return IndividualMatching(pi, meta)


def aggregate_outcome(market, pi):
    """Type-level outcome of an individually stable matching.

    ``mu`` counts matched pairs per segment and ``u_x`` (``v_y``) is the worst
    payoff among type-x passengers (type-y taxis).
    """
    p = np.asarray(pi.pi if isinstance(pi, IndividualMatching) else pi)
    rep = check_classical_stability(market, p)
    if not rep.ok:
        raise ValidationError(f"matching is not stable in the classical sense:\n{rep}")
    X, Y = market.spec.shape
    tx, ty = market.passenger_type, market.taxi_type
    mu = np.zeros((X, Y), dtype=np.int64)
    for i, j in np.argwhere(p == 1):
        mu[tx[i], ty[j]] += 1
    u_ind, v_ind, _, _ = _individual_payoffs(market, p)
    u = tuple(min(u_ind[i] for i in np.flatnonzero(tx == x)) for x in range(X))
    v = tuple(min(v_ind[j] for j in np.flatnonzero(ty == y)) for y in range(Y))
    return DeterministicOutcome(mu, u, v)


def burned_amounts(market, pi, outcome):
    """Per-individual burned utility ``u_i - u_{x_i}`` and ``v_j - v_{y_j}`` (all >= 0)."""
    p = np.asarray(pi.pi if isinstance(pi, IndividualMatching) else pi)
    u_ind, v_ind, _, _ = _individual_payoffs(market, p)
    tx, ty = market.passenger_type, market.taxi_type
    tau_p = {market.passengers[i][0]: u_ind[i] - _q(outcome.u[tx[i]]) for i in range(len(u_ind))}
    tau_t = {market.taxis[j][0]: v_ind[j] - _q(outcome.v[ty[j]]) for j in range(len(v_ind))}
    return tau_p, tau_t


def disaggregate_outcome(spec, out, seed=0):
    """Individual matching reproducing an aggregate-stable ``mu``.

    Individuals are shuffled within their type (seeded) and each segment
    ``(x, y)`` takes the next ``mu_xy`` unused passengers and taxis.
    Returns an IndividualMatching whose ``meta["market"]`` is the individual
    market it refers to.
    """
    validate_market(spec, integer=True)
    rep = check_aggregate_stability(spec, out)
    if not rep.ok:
        raise ValidationError(f"outcome is not aggregate stable:\n{rep}")
    market = IndividualMarket.from_spec(spec)
    rng = np.random.default_rng(seed)
    X, Y = spec.shape
    tx, ty = market.passenger_type, market.taxi_type
    pools_p = [list(rng.permutation(np.flatnonzero(tx == x))) for x in range(X)]
    pools_t = [list(rng.permutation(np.flatnonzero(ty == y))) for y in range(Y)]
    pi = np.zeros((len(tx), len(ty)), dtype=np.int64)
    for x in range(X):
        for y in range(Y):
            for _ in range(int(out.mu[x, y])):
                pi[pools_p[x].pop(), pools_t[y].pop()] = 1
    return IndividualMatching(pi, {"seed": seed, "market": market})


@dataclass
class SigmaSchedule:
    """Trajectory of logit equilibria along a decreasing sequence of shock scales."""

    sigmas: np.ndarray
    mu_x0: list = field(default_factory=list)
    mu_0y: list = field(default_factory=list)
    mu: list = field(default_factory=list)
    u: list = field(default_factory=list)
    v: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    u_limit: np.ndarray = None
    v_limit: np.ndarray = None
    eps_used: float = 0.0
    method: str = ""
    report: StabilityReport = None

    def cauchy_gaps(self):
        """``max(|u_k+1 - u_k|, |v_k+1 - v_k|)`` for consecutive scales."""
        u, v = np.asarray(self.u), np.asarray(self.v)
        return np.maximum(np.abs(np.diff(u, axis=0)).max(axis=1), np.abs(np.diff(v, axis=0)).max(axis=1))

    def rows(self):
        """CSV rows: sigma, u_x..., v_y..., residual."""
        return [[s, *uk, *vk, r] for s, uk, vk, r in zip(self.sigmas, self.u, self.v, self.residuals)]


def _snap(values, candidates, tol):
    out = np.array(values, dtype=float)
    cand = np.asarray(sorted(set(candidates)))
    for k, val in enumerate(out):
        j = np.argmin(np.abs(cand - val))
        if abs(cand[j] - val) <= tol:
            out[k] = cand[j]
    return out


def _round_matching(mu_frac, u, v, spec, tol):
    """Integral matching near ``mu_frac`` consistent with the limit payoffs.

    Entries are bounded by floor/ceil of the fractional values (zero off the
    support), only segments where the stability condition binds may be used,
    and types with positive payoff must be fully matched. Among these the
    total selected fractional mass is maximized, ties broken
    lexicographically toward low ``(x, y)`` indices.
    """
    X, Y = spec.shape
    n, m = np.asarray(spec.n), np.asarray(spec.m)
    tight = np.abs(np.maximum(u[:, None] - spec.alpha, v[None, :] - spec.gamma)) <= tol
    lo = np.floor(mu_frac + tol)
    hi = np.ceil(mu_frac - tol)
    lo[mu_frac <= tol] = 0.0
    hi[mu_frac <= tol] = 0.0
    hi[~tight] = 0.0
    lo = np.minimum(lo, hi)
    A_row = np.kron(np.eye(X), np.ones(Y))
    A_col = np.kron(np.ones(X), np.eye(Y))
    row_lo = np.where(u > tol, n, 0.0)
    col_lo = np.where(v > tol, m, 0.0)
    cons = [LinearConstraint(A_row, row_lo, n), LinearConstraint(A_col, col_lo, m)]
    bounds = Bounds(lo.ravel(), hi.ravel())
    integrality = np.ones(X * Y)
    # integer-scaled weights make near-equal fractional masses tie exactly
    w = np.round(mu_frac.ravel() * 2**20)
    res = milp(-w, constraints=cons, bounds=bounds, integrality=integrality)
    if not res.success:
        return None
    best = -res.fun
    cons.append(LinearConstraint(w[None, :], best - 0.5, np.inf))
    fixed_lo, fixed_hi = lo.ravel().copy(), hi.ravel().copy()
    for k in range(X * Y):
        if fixed_lo[k] == fixed_hi[k]:
            continue
        c = np.zeros(X * Y)
        c[k] = -1.0
        r = milp(c, constraints=cons, bounds=Bounds(fixed_lo, fixed_hi), integrality=integrality)
        val = np.round(r.x[k])
        fixed_lo[k] = fixed_hi[k] = val
    return np.round(fixed_lo).astype(np.int64).reshape(X, Y)


def sigma_limit(spec, K=20, tol=LIMIT_EPS, sigmas=None, solver_tol=1e-12):
    """Deterministic outcome as the vanishing-noise limit of logit equilibria.

    Solves the logit model at ``sigma_k = 2**-k`` (k = 0..K, or the given
    decreasing ``sigmas``), records ``u = -sigma ln mu_x0`` and
    ``v = -sigma ln mu_0y``, extrapolates the last two points linearly to
    ``sigma = 0`` (the payoffs are affine in sigma to leading order), snaps
    payoffs to nearby utility values, rounds the matching to an integral one
    and checks it exactly. If the exact check fails the check is repeated at
    ``eps = tol``; ``schedule.eps_used`` records which one passed.

    Returns ``(schedule, outcome)``. Raises ValidationError when no integral
    outcome passes even at ``eps = tol``.
    """
    validate_market(spec, integer=True)
    if sigmas is None:
        sigmas = 2.0 ** -np.arange(K + 1)
    sigmas = np.asarray(sigmas, dtype=float)
    if sigmas.size < 2 or np.any(sigmas <= 0) or np.any(np.diff(sigmas) >= 0):
        raise ValidationError("sigmas must be positive and strictly decreasing (at least two)")
    sched = SigmaSchedule(sigmas)
    base = spec.with_shocks(None)
    for s in sigmas:
        out = solve_equilibrium_logit(base.with_shocks(ShockSpec("logit", sigma=float(s))), tol=solver_tol)
        a, b = out.diagnostics["log_mu_x0"], out.diagnostics["log_mu_0y"]
        sched.mu_x0.append(np.exp(a))
        sched.mu_0y.append(np.exp(b))
        sched.mu.append(np.array(out.mu))
        sched.u.append(-s * a)
        sched.v.append(-s * b)
        sched.residuals.append(out.diagnostics["residual"])

    s1, s0 = sigmas[-1], sigmas[-2]
    lam = s1 / (s0 - s1)
    u_ext = sched.u[-1] + lam * (sched.u[-1] - sched.u[-2])
    v_ext = sched.v[-1] + lam * (sched.v[-1] - sched.v[-2])
    snap_tol = max(tol, 4.0 * s1)
    u_lim = np.maximum(_snap(u_ext, [0.0, *spec.alpha.ravel()], snap_tol), 0.0)
    v_lim = np.maximum(_snap(v_ext, [0.0, *spec.gamma.ravel()], snap_tol), 0.0)
    sched.u_limit, sched.v_limit = u_lim, v_lim

    sched.method = "extrapolated"
    mu_int = _round_matching(sched.mu[-1], u_lim, v_lim, spec, snap_tol)
    outcome = None
    if mu_int is not None:
        outcome = DeterministicOutcome(mu_int, tuple(u_lim.tolist()), tuple(v_lim.tolist()))
        rep = check_aggregate_stability(spec, outcome, eps=0)
        if not rep.ok:
            rep = check_aggregate_stability(spec, outcome, eps=tol)
            sched.eps_used = tol
    if outcome is None or not rep.ok:
        # payoffs of fully matched types are ill-conditioned at tiny sigma
        outcome = _repair(spec, sched.mu[-1], u_ext, v_ext, snap_tol)
        sched.method = "repaired"
        sched.eps_used = 0.0
        if outcome is None:
            raise ValidationError("sigma limit: no stable integral outcome near the limit estimate")
        rep = check_aggregate_stability(spec, outcome, eps=0)
    sched.report = rep
    if not rep.ok:
        raise ValidationError(f"sigma limit: rounded outcome is not stable within {tol:g}:\n{rep}")
    return sched, outcome


def _repair(spec, mu_frac, u_hat, v_hat, tol):
    """Stable integral outcome nearest to the payoff estimates ``(u_hat, v_hat)``.

    For a fixed integral matching every stability condition bounds a single
    payoff from one side by 0 or a utility value, so stable payoffs can be
    chosen among ``{0} U {alpha_x.}`` (passengers) and ``{0} U {gamma_.y}``
    (taxis). The matching (within floor/ceil of ``mu_frac``) and the payoff
    choice are solved jointly as a small MILP minimizing the L1 distance to
    the estimates, then the selected mass as secondary objective.
    """
    X, Y = spec.shape
    n, m = np.asarray(spec.n), np.asarray(spec.m)
    alpha, gamma = spec.alpha, spec.gamma
    cu = [np.unique(np.concatenate([[0.0], alpha[x][alpha[x] > 0]])) for x in range(X)]
    cv = [np.unique(np.concatenate([[0.0], gamma[:, y][gamma[:, y] > 0]])) for y in range(Y)]
    M = 2.0 * (np.max(np.abs(alpha)) + np.max(np.abs(gamma))) + 1.0
    lo = np.floor(mu_frac + tol)
    hi = np.ceil(mu_frac - tol)
    lo[mu_frac <= tol] = 0.0
    hi[mu_frac <= tol] = 0.0
    lo = np.minimum(lo, hi)

    # variable layout: z (XY), delta (XY), w (XY), b_u (sum |cu|), b_v (sum |cv|)
    nz = X * Y
    iz, idl, iw = 0, nz, 2 * nz
    ibu = 3 * nz
    off_u = np.cumsum([0] + [len(c) for c in cu])
    ibv = ibu + off_u[-1]
    off_v = np.cumsum([0] + [len(c) for c in cv])
    nv = ibv + off_v[-1]
    rows, lb, ub = [], [], []

    def add(coef, low, high):
        r = np.zeros(nv)
        for k, c in coef:
            r[k] += c
        rows.append(r)
        lb.append(low)
        ub.append(high)

    def u_terms(x, scale=1.0):
        return [(ibu + off_u[x] + k, scale * c) for k, c in enumerate(cu[x])]

    def v_terms(y, scale=1.0):
        return [(ibv + off_v[y] + k, scale * c) for k, c in enumerate(cv[y])]

    for x in range(X):
        add([(ibu + off_u[x] + k, 1.0) for k in range(len(cu[x]))], 1, 1)
    for y in range(Y):
        add([(ibv + off_v[y] + k, 1.0) for k in range(len(cv[y]))], 1, 1)
    for x in range(X):
        for y in range(Y):
            k = x * Y + y
            add([(iz + k, 1.0), (idl + k, -max(hi[x, y], 1.0))], -np.inf, 0)
            add([(iz + k, 1.0), (idl + k, -1.0)], 0, np.inf)
            # max(u - alpha, v - gamma) >= 0 via the selector w
            add(u_terms(x) + [(iw + k, -M)], alpha[x, y] - M, np.inf)
            add(v_terms(y) + [(iw + k, M)], gamma[x, y], np.inf)
            # equality on used segments
            add(u_terms(x) + [(idl + k, M)], -np.inf, alpha[x, y] + M)
            add(v_terms(y) + [(idl + k, M)], -np.inf, gamma[x, y] + M)
    for x in range(X):
        zrow = [(iz + x * Y + y, 1.0) for y in range(Y)]
        add(zrow, 0, n[x])
        # positive payoff forces a full row: sum_y z >= n_x (1 - b_zero)
        add(zrow + [(ibu + off_u[x], n[x])], n[x], np.inf)
    for y in range(Y):
        zcol = [(iz + x * Y + y, 1.0) for x in range(X)]
        add(zcol, 0, m[y])
        add(zcol + [(ibv + off_v[y], m[y])], m[y], np.inf)

    cost = np.zeros(nv)
    for x in range(X):
        cost[ibu + off_u[x]: ibu + off_u[x + 1]] = np.abs(cu[x] - u_hat[x])
    for y in range(Y):
        cost[ibv + off_v[y]: ibv + off_v[y + 1]] = np.abs(cv[y] - v_hat[y])
    cost[iz: iz + nz] = -1e-6 * mu_frac.ravel()
    lower = np.zeros(nv)
    upper = np.ones(nv)
    lower[iz: iz + nz], upper[iz: iz + nz] = lo.ravel(), hi.ravel()
    res = milp(cost, constraints=LinearConstraint(np.array(rows), lb, ub),
               bounds=Bounds(lower, upper), integrality=np.ones(nv))
    if not res.success:
        return None
    sol = np.round(res.x)
    mu = sol[iz: iz + nz].astype(np.int64).reshape(X, Y)
    u = tuple(float(cu[x][np.argmax(sol[ibu + off_u[x]: ibu + off_u[x + 1]])]) for x in range(X))
    v = tuple(float(cv[y][np.argmax(sol[ibv + off_v[y]: ibv + off_v[y + 1]])]) for y in range(Y))
    return DeterministicOutcome(mu, u, v)
