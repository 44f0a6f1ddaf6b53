"""JSON and CSV formats.

Market files keep full float precision (``repr`` round-trips exactly);
outcome files round every float to 12 significant digits.
"""

from __future__ import annotations

import csv
import io as _io
import json
from fractions import Fraction
from pathlib import Path

import numpy as np

from .model import (DeterministicOutcome, IndividualMarket, IndividualMatching, MarketSpec,
                    ShockSpec, ValidationError, validate_market)

MARKET_FIELDS = ("passenger_types", "taxi_types", "n", "m", "alpha", "gamma")
SHOCK_KEYS = {"kind", "sigma", "family", "order", "draws", "seed"}
OUT_DIGITS = 12


def load_json(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"{path}: cannot read file: {exc.strerror or exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(
            f"{path}: parse error at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from None


def shock_from_dict(d, where="shocks"):
    if not isinstance(d, dict):
        raise ValidationError(f"{where}: expected an object")
    if "kind" not in d:
        raise ValidationError(f"{where}: missing field 'kind'")
    extra = set(d) - SHOCK_KEYS
    if extra:
        raise ValidationError(f"{where}: unknown field(s) {sorted(extra)}")
    try:
        return ShockSpec(**d)
    except TypeError as exc:
        raise ValidationError(f"{where}: {exc}") from None


def market_to_dict(spec):
    d = {
        "passenger_types": list(spec.passenger_types),
        "taxi_types": list(spec.taxi_types),
        "n": spec.n.tolist(),
        "m": spec.m.tolist(),
        "alpha": spec.alpha.tolist(),
        "gamma": spec.gamma.tolist(),
    }
    if spec.shocks is not None:
        d["shocks"] = spec.shocks.to_dict()
    if spec.passenger_shocks:
        d["passenger_shocks"] = {k: s.to_dict() for k, s in spec.passenger_shocks.items()}
    if spec.taxi_shocks:
        d["taxi_shocks"] = {k: s.to_dict() for k, s in spec.taxi_shocks.items()}
    return d


def market_from_dict(d, where="market"):
    if not isinstance(d, dict):
        raise ValidationError(f"{where}: expected a JSON object")
    for name in MARKET_FIELDS:
        if name not in d:
            raise ValidationError(f"{where}: missing field {name!r}")
    shocks = shock_from_dict(d["shocks"]) if d.get("shocks") is not None else None
    overrides = {}
    for key in ("passenger_shocks", "taxi_shocks"):
        overrides[key] = {str(k): shock_from_dict(v, f"{key}[{k!r}]")
                          for k, v in (d.get(key) or {}).items()}
    spec = MarketSpec(d["passenger_types"], d["taxi_types"], d["n"], d["m"], d["alpha"],
                      d["gamma"], shocks, **overrides)
    return validate_market(spec)


def write_market(spec, path):
    Path(path).write_text(dumps_market(spec))


def dumps_market(spec):
    return json.dumps(market_to_dict(spec), indent=2) + "\n"


def read_market(path):
    """Load and validate a market file; errors name the file and the field."""
    try:
        return market_from_dict(load_json(path), str(path))
    except ValidationError as exc:
        msg = str(exc)
        raise ValidationError(msg if msg.startswith(str(path)) else f"{path}: {msg}") from None


def _round(x):
    return float(f"{x:.{OUT_DIGITS}g}")


def to_jsonable(obj):
    """Plain JSON types with every float rounded to 12 significant digits."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, Fraction):
        return int(obj) if obj.denominator == 1 else str(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return _round(x) if np.isfinite(x) else str(x)
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


_SKIP_DIAG = ("trace",)


def outcome_to_dict(out):
    diag = {k: v for k, v in out.diagnostics.items() if k not in _SKIP_DIAG}
    return to_jsonable({
        "mu": out.mu,
        "tau_alpha": out.tau_alpha,
        "tau_gamma": out.tau_gamma,
        "mu_x0": out.matching.mu_x0,
        "mu_0y": out.matching.mu_0y,
        "diagnostics": diag,
    })


def dumps(obj):
    return json.dumps(to_jsonable(obj), indent=2) + "\n"


def write_outcome(out, path=None):
    """Write an equilibrium outcome as JSON (stdout-ready string returned when ``path`` is None)."""
    text = json.dumps(outcome_to_dict(out), indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def read_outcome(path):
    """Load an outcome file as a dict of numpy arrays (mu, tau_alpha, tau_gamma)."""
    d = load_json(path)
    for name in ("mu", "tau_alpha", "tau_gamma"):
        if name not in d:
            raise ValidationError(f"{path}: missing field {name!r}")
    return {k: (np.asarray(v, dtype=float) if k in ("mu", "tau_alpha", "tau_gamma") else v)
            for k, v in d.items()}


def _exact(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float, str)):
        raise ValidationError(f"{where}: expected a number, got {v!r}")
    try:
        return Fraction(v)
    except (ValueError, ZeroDivisionError):
        raise ValidationError(f"{where}: cannot parse {v!r} as a number") from None


def deterministic_from_dict(d, where="outcome"):
    """Deterministic outcome from ``{"mu": [[int]], "u": [...], "v": [...]}``.

    Payoffs may be numbers or strings such as ``"1/3"`` and are kept exact.
    """
    for name in ("mu", "u", "v"):
        if name not in d:
            raise ValidationError(f"{where}: missing field {name!r}")
    u = tuple(_exact(a, f"{where}: u[{k}]") for k, a in enumerate(d["u"]))
    v = tuple(_exact(b, f"{where}: v[{k}]") for k, b in enumerate(d["v"]))
    mu = np.asarray(d["mu"], dtype=float)
    return DeterministicOutcome(mu, u, v)


def read_deterministic(path):
    return deterministic_from_dict(load_json(path), str(path))


def deterministic_to_dict(out):
    return to_jsonable({"mu": np.asarray(out.mu), "u": list(out.u), "v": list(out.v)})


def individual_to_dict(market, pi):
    return {
        "passengers": [[i, market.spec.passenger_types[x]] for i, x in market.passengers],
        "taxis": [[j, market.spec.taxi_types[y]] for j, y in market.taxis],
        "pi": np.asarray(pi.pi).tolist(),
    }


def individual_from_dict(spec, d, where="matching"):
    """Individual market and matching from ``{"pi": ..., ["passengers", "taxis"]}``.

    Without agent lists the canonical one-agent-per-unit market of ``spec`` is used.
    """
    if "pi" not in d:
        raise ValidationError(f"{where}: missing field 'pi'")
    if "passengers" in d and "taxis" in d:
        px = {t: k for k, t in enumerate(spec.passenger_types)}
        ty = {t: k for k, t in enumerate(spec.taxi_types)}
        try:
            passengers = tuple((str(i), px[t]) for i, t in d["passengers"])
            taxis = tuple((str(j), ty[t]) for j, t in d["taxis"])
        except KeyError as exc:
            raise ValidationError(f"{where}: unknown type {exc.args[0]!r}") from None
        market = IndividualMarket(spec, passengers, taxis)
    else:
        market = IndividualMarket.from_spec(spec)
    return market, IndividualMatching(np.asarray(d["pi"]))


def matrix_csv(mat, spec):
    """CSV text of an X-by-Y matrix with taxi types as header row, passenger types as header column."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([""] + list(spec.taxi_types))
    for t, row in zip(spec.passenger_types, np.asarray(mat, dtype=float)):
        w.writerow([t] + [f"{v:.{OUT_DIGITS}g}" for v in row])
    return buf.getvalue()


def write_matrix_csv(mat, spec, path):
    Path(path).write_text(matrix_csv(mat, spec))


def read_matrix_csv(path):
    """Inverse of :func:`matrix_csv`: ``(row labels, column labels, matrix)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0][1:], rows[1:]
    return [r[0] for r in body], header, np.array([[float(v) for v in r[1:]] for r in body])


def rows_csv(header, rows, path):
    """Write a table, formatting floats with 12 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.{OUT_DIGITS}g}" if isinstance(v, (float, np.floating)) else v
                        for v in r])
