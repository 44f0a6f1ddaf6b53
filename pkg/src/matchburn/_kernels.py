"""Hot loops: choice probabilities, coordinate sweeps, piecewise-linear logit solves.

Everything here is written in the numba-compatible subset so that ``_jit.jit``
can compile it; with numba disabled the identical code runs in the
interpreter. Side-specific data come in "chooser orientation": row ``r`` is a
type choosing among ``K`` alternatives (columns) plus an outside option of
value zero. For the passenger side this is the X-by-Y layout as is; for the
taxi side it is the transpose.

A side is described by the arrays
``util`` (R, K), ``mass`` (R,), ``sigma`` (R,), ``fam`` (R,) and
``nodes``/``weights`` (R, Q) holding a quadrature rule for the shock density
(zero weights are padding).
"""

import math

import numpy as np

from ._jit import jit

FAM_LOGIT = 0
FAM_NORMAL = 1
FAM_LOGISTIC = 2

_SQRT_HALF = 0.7071067811865476


@jit
def _cdf(fam, z):
    if fam == FAM_NORMAL:
        return 0.5 * math.erfc(-z * _SQRT_HALF)
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


@jit
def row_probs(v, fam, nodes, weights, out):
    """Choice probabilities for systematic values ``v`` (already divided by sigma).

    ``out[:K]`` receives the alternatives, ``out[K]`` the outside option.
    Probabilities are normalized to sum to one exactly.
    """
    K = v.shape[0]
    if fam == FAM_LOGIT:
        vmax = 0.0
        for k in range(K):
            if v[k] > vmax:
                vmax = v[k]
        out[K] = math.exp(-vmax)
        total = out[K]
        for k in range(K):
            out[k] = math.exp(v[k] - vmax)
            total += out[k]
    else:
        total = 0.0
        Q = nodes.shape[0]
        for k in range(K + 1):
            vk = v[k] if k < K else 0.0
            acc = 0.0
            for i in range(Q):
                w = weights[i]
                if w == 0.0:
                    continue
                e = nodes[i]
                prod = w
                for j in range(K + 1):
                    if j == k:
                        continue
                    vj = v[j] if j < K else 0.0
                    prod *= _cdf(fam, vk - vj + e)
                    if prod == 0.0:
                        break
                acc += prod
            out[k] = acc
            total += acc
    for k in range(K + 1):
        out[k] /= total


@jit
def side_demand(util, mass, sigma, fam, nodes, weights, tau, dem, outside):
    """Demand of every chooser row at waits ``tau`` (chooser orientation)."""
    R, K = util.shape
    v = np.empty(K)
    p = np.empty(K + 1)
    for r in range(R):
        for k in range(K):
            v[k] = (util[r, k] - tau[r, k]) / sigma[r]
        row_probs(v, fam[r], nodes[r], weights[r], p)
        for k in range(K):
            dem[r, k] = mass[r] * p[k]
        outside[r] = mass[r] * p[K]


@jit
def _entry(util, mass, sigma, fam, nodes, weights, waits, r, k, own, v, p):
    """Demand of row ``r`` for alternative ``k`` when its own wait is ``own``."""
    K = util.shape[1]
    for j in range(K):
        w = own if j == k else waits[j]
        v[j] = (util[r, j] - w) / sigma[r]
    row_probs(v, fam[r], nodes[r], weights[r], p)
    return mass[r] * p[k]


# ---------------------------------------------------------------- equilibrium


@jit
def excess_demand(ua, na, sa, fa, xa, wa, ug, ng, sg, fg, xg, wg, tau, out):
    """out[x, y] = taxi demand at tau^- minus passenger demand at tau^+."""
    X, Y = tau.shape
    ta = np.maximum(tau, 0.0)
    tg = np.ascontiguousarray(np.maximum(-tau, 0.0).T)
    da = np.empty((X, Y))
    oa = np.empty(X)
    dg = np.empty((Y, X))
    og = np.empty(Y)
    side_demand(ua, na, sa, fa, xa, wa, ta, da, oa)
    side_demand(ug, ng, sg, fg, xg, wg, tg, dg, og)
    for x in range(X):
        for y in range(Y):
            out[x, y] = dg[y, x] - da[x, y]


@jit
def _excess_entry(ua, na, sa, fa, xa, wa, ug, ng, sg, fg, xg, wg, tau, x, y, t, rowbuf, colbuf, va, pa, vg, pg):
    X, Y = tau.shape
    for j in range(Y):
        rowbuf[j] = tau[x, j] if tau[x, j] > 0.0 else 0.0
    for i in range(X):
        colbuf[i] = -tau[i, y] if tau[i, y] < 0.0 else 0.0
    a = _entry(ua, na, sa, fa, xa, wa, rowbuf, x, y, t if t > 0.0 else 0.0, va, pa)
    g = _entry(ug, ng, sg, fg, xg, wg, colbuf, y, x, -t if t < 0.0 else 0.0, vg, pg)
    return g - a


@jit
def gs_equilibrium(ua, na, sa, fa, xa, wa, ug, ng, sg, fg, xg, wg, tau, cbar, tol, max_sweeps, order):
    """Monotone Gauss-Seidel on e(tau) = 0 with bracketed bisection per coordinate.

    ``tau`` is updated in place and must start where e(tau) <= 0. Each
    coordinate moves up to the lower end of its bisection bracket, which
    keeps e(tau) <= 0 and the iterates nondecreasing. ``order`` lists the
    flat coordinate indices in sweep order. Returns (sweeps, residual).
    """
    X, Y = tau.shape
    rowbuf = np.empty(Y)
    colbuf = np.empty(X)
    va = np.empty(Y)
    pa = np.empty(Y + 1)
    vg = np.empty(X)
    pg = np.empty(X + 1)
    e = np.empty((X, Y))
    stol = tol / 10.0
    residual = np.inf
    sweeps = 0
    excess_demand(ua, na, sa, fa, xa, wa, ug, ng, sg, fg, xg, wg, tau, e)
    residual = np.max(np.abs(e))
    while residual > tol and sweeps < max_sweeps:
        for idx in order:
            x = idx // Y
            y = idx % Y
            lo = tau[x, y]
            flo = _excess_entry(ua, na, sa, fa, xa, wa, ug, ng, sg, fg, xg, wg, tau, x, y, lo,
                                rowbuf, colbuf, va, pa, vg, pg)
            if flo >= -stol:
                continue
            hi = cbar
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if mid <= lo or mid >= hi:
                    break
                fm = _excess_entry(ua, na, sa, fa, xa, wa, ug, ng, sg, fg, xg, wg, tau, x, y, mid,
                                   rowbuf, colbuf, va, pa, vg, pg)
                if fm <= 0.0:
                    lo = mid
                    if fm >= -stol:
                        break
                else:
                    hi = mid
            tau[x, y] = lo
        sweeps += 1
        excess_demand(ua, na, sa, fa, xa, wa, ug, ng, sg, fg, xg, wg, tau, e)
        residual = np.max(np.abs(e))
    return sweeps, residual


# --------------------------------------------------------- constrained choice


@jit
def constrained_residual(util, mass, sigma, fam, nodes, weights, theta, cap, out):
    """out = demand(theta^+) + theta^- - cap."""
    R, K = theta.shape
    dem = np.empty((R, K))
    outside = np.empty(R)
    side_demand(util, mass, sigma, fam, nodes, weights, np.maximum(theta, 0.0), dem, outside)
    for r in range(R):
        for k in range(K):
            neg = -theta[r, k] if theta[r, k] < 0.0 else 0.0
            out[r, k] = dem[r, k] + neg - cap[r, k]


@jit
def gs_constrained(util, mass, sigma, fam, nodes, weights, cap, theta, cbar, tol, max_sweeps, order):
    """Monotone Gauss-Seidel for demand(theta^+) + theta^- = cap, updated in place.

    Starts from any theta with q(theta) = cap - theta^- - demand(theta^+) <= 0
    (e.g. theta = -cap). On the nonpositive branch the coordinate equation is
    linear and solved exactly; otherwise bisection on (0, cbar]. Returns
    (sweeps, residual).
    """
    R, K = theta.shape
    waits = np.empty(K)
    v = np.empty(K)
    p = np.empty(K + 1)
    res = np.empty((R, K))
    stol = tol / 10.0
    sweeps = 0
    constrained_residual(util, mass, sigma, fam, nodes, weights, theta, cap, res)
    residual = np.max(np.abs(res))
    while residual > tol and sweeps < max_sweeps:
        for idx in order:
            r = idx // K
            k = idx % K
            for j in range(K):
                waits[j] = theta[r, j] if theta[r, j] > 0.0 else 0.0
            d0 = _entry(util, mass, sigma, fam, nodes, weights, waits, r, k, 0.0, v, p)
            if d0 <= cap[r, k]:
                new = d0 - cap[r, k]
                if new > theta[r, k]:
                    theta[r, k] = new
                continue
            lo = theta[r, k] if theta[r, k] > 0.0 else 0.0
            hi = cbar
            flo = cap[r, k] - _entry(util, mass, sigma, fam, nodes, weights, waits, r, k, lo, v, p)
            if flo < -stol:
                for _ in range(200):
                    mid = 0.5 * (lo + hi)
                    if mid <= lo or mid >= hi:
                        break
                    fm = cap[r, k] - _entry(util, mass, sigma, fam, nodes, weights, waits, r, k, mid, v, p)
                    if fm <= 0.0:
                        lo = mid
                        if fm >= -stol:
                            break
                    else:
                        hi = mid
            theta[r, k] = lo
        sweeps += 1
        constrained_residual(util, mass, sigma, fam, nodes, weights, theta, cap, res)
        residual = np.max(np.abs(res))
    return sweeps, residual


# ------------------------------------------------- exact logit (log domain)


@jit
def _logaddexp(a, b):
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@jit
def logit_capped_row(log_scale, log_cap, mass):
    """Solve t + sum_k min(t * exp(log_scale[k]), exp(log_cap[k])) = mass for t > 0.

    The left side is continuous, strictly increasing and piecewise linear in
    t with a kink at each breakpoint t_k = exp(log_cap[k] - log_scale[k]).
    Returns log t. Works entirely in the log domain so scales like
    alpha / sigma with tiny sigma do not overflow.
    """
    K = log_scale.shape[0]
    bp = log_cap - log_scale
    order = np.argsort(bp)
    # suffix[j] = log sum_{i >= j} exp(log_scale[order[i]])
    suffix = np.empty(K + 1)
    suffix[K] = -np.inf
    for j in range(K - 1, -1, -1):
        suffix[j] = _logaddexp(suffix[j + 1], log_scale[order[j]])
    saturated = 0.0
    for j in range(K + 1):
        num = mass - saturated
        if num > 0.0:
            log_t = math.log(num) - _logaddexp(0.0, suffix[j])
            if j == K or log_t <= bp[order[j]]:
                return log_t
        if j < K:
            saturated += math.exp(log_cap[order[j]])
    # unreachable for positive mass and finite inputs; fall back to the last segment
    return math.log(max(mass - saturated + math.exp(log_cap[order[K - 1]]), 1e-300))


@jit
def logit_capped_rows(log_scale, log_cap, mass, log_out):
    R = log_scale.shape[0]
    for r in range(R):
        log_out[r] = logit_capped_row(log_scale[r], log_cap[r], mass[r])


@jit
def logit_min_system(la, lg, n, m, a, b, tol, max_iter):
    """Alternate exact row and column solves of the logit min-system.

    Unknowns are a = log mu_x0 and b = log mu_0y; ``la = alpha / sigma_x``,
    ``lg = gamma / sigma_y``. ``b`` holds the starting point and both arrays
    are updated in place. Returns (iterations, residual, status) with status
    0 converged, 1 iteration cap, 2 non-monotone residual growth.

    Log arguments of size L carry absolute rounding error ~ L * eps, so the
    row identities cannot be met below ~ eps * L * mass; ``tol`` is raised to
    that floor.
    """
    X, Y = la.shape
    scale = 1.0 + max(np.max(np.abs(la)), np.max(np.abs(lg)))
    tol = max(tol, 4.0 * 2.220446049250313e-16 * scale * max(np.max(n), np.max(m)))
    cap_r = np.empty((X, Y))
    cap_c = np.empty((Y, X))
    lgT = np.ascontiguousarray(lg.T)
    laT = np.ascontiguousarray(la.T)
    residual = np.inf
    best = np.inf
    it = 0
    while it < max_iter:
        for x in range(X):
            for y in range(Y):
                cap_r[x, y] = b[y] + lg[x, y]
        logit_capped_rows(la, cap_r, n, a)
        for y in range(Y):
            for x in range(X):
                cap_c[y, x] = a[x] + la[x, y]
        logit_capped_rows(lgT, cap_c, m, b)
        it += 1
        residual = 0.0
        for x in range(X):
            s = math.exp(a[x])
            for y in range(Y):
                s += math.exp(min(a[x] + la[x, y], b[y] + lg[x, y]))
            r = abs(s - n[x])
            if r > residual:
                residual = r
        if residual <= tol:
            return it, residual, 0
        if residual < best:
            best = residual
        elif residual > 2.0 * best and best > 1e-12:
            return it, residual, 2
    return it, residual, 1
