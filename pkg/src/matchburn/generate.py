"""Seeded random market instances for property suites and benchmarks."""

from __future__ import annotations

import numpy as np

from .model import MarketSpec, ShockSpec, ValidationError, validate_market


def _range(r, name, positive=False):
    lo, hi = (float(v) for v in r)
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
        raise ValidationError(f"invalid {name} range [{lo}, {hi}]")
    if positive and lo <= 0:
        raise ValidationError(f"invalid {name} range [{lo}, {hi}]: masses must be positive")
    return lo, hi


def gen_instance(nx, ny, utility_range=(-2.0, 2.0), mass_range=(0.5, 2.0), seed=0,
                 shocks=None, integer=False):
    """Market with uniform utilities and masses drawn from ``seed``.

    ``shocks`` defaults to standard logit, or to none (a deterministic
    market) when ``integer=True``, in which case all draws are integers in
    the closed ranges. Degenerate ranges give constant entries.
    """
    if shocks is None and not integer:
        shocks = ShockSpec()
    if int(nx) < 1 or int(ny) < 1:
        raise ValidationError(f"need at least one type per side, got {nx}x{ny}")
    ulo, uhi = _range(utility_range, "utility")
    mlo, mhi = _range(mass_range, "mass", positive=True)
    rng = np.random.default_rng(seed)
    if integer:
        if np.ceil(mlo) > np.floor(mhi) or np.ceil(ulo) > np.floor(uhi):
            raise ValidationError("integer instance needs ranges containing an integer")
        n = rng.integers(int(np.ceil(mlo)), int(np.floor(mhi)) + 1, nx)
        m = rng.integers(int(np.ceil(mlo)), int(np.floor(mhi)) + 1, ny)
        lo_i, hi_i = int(np.ceil(ulo)), int(np.floor(uhi)) + 1
        alpha = rng.integers(lo_i, hi_i, (nx, ny))
        gamma = rng.integers(lo_i, hi_i, (nx, ny))
    else:
        n = rng.uniform(mlo, mhi, nx)
        m = rng.uniform(mlo, mhi, ny)
        alpha = rng.uniform(ulo, uhi, (nx, ny))
        gamma = rng.uniform(ulo, uhi, (nx, ny))
    spec = MarketSpec([f"x{i + 1}" for i in range(nx)], [f"y{j + 1}" for j in range(ny)],
                      n, m, alpha, gamma, shocks)
    return validate_market(spec, integer=integer)


def gen_batch(count, seed=0, max_types=8, **kw):
    """``count`` instances with sizes drawn uniformly from 1..max_types per side."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        nx, ny = (int(v) for v in rng.integers(1, max_types + 1, 2))
        out.append(gen_instance(nx, ny, seed=[seed, k], **kw))
    return out
