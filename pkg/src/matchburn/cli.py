"""Command-line interface: ``matchburn <subcommand> ...``.

Exit codes: 0 success, 1 non-convergence or a failed check, 2 invalid
input or usage.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .constrained import solve_constrained, solve_constrained_logit
from .crosscheck import cross_check
from .deferred_acceptance import InvariantError, da_run
from .demand import make_provider
from .deterministic import (aggregate_outcome, burned_amounts, check_aggregate_stability,
                            check_classical_stability, classical_da, disaggregate_outcome,
                            sigma_limit)
from .equilibrium import matching_functions, solve_equilibrium, solve_equilibrium_logit
from .generate import gen_batch, gen_instance
from .model import (ConvergenceError, IndividualMarket, MatchburnError, ShockSpec,
                    ValidationError, validate_market)
from .queue_sim import WAIT_MAPS, sim_run, trace_header, trace_rows

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _positive(kind=float):
    def parse(text):
        try:
            val = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
        if not val > 0:
            raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
        return val
    return parse


def _emit(text, path):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _check_paths(args, *names):
    paths = [getattr(args, n) for n in names if getattr(args, n, None)]
    resolved = [str(Path(p).resolve()) for p in paths]
    if len(set(resolved)) != len(resolved):
        raise ValidationError("input and output paths must be distinct")


# ---------------------------------------------------------------- commands


def cmd_solve(args):
    spec = io.read_market(args.market)
    solver = args.solver
    if solver == "auto":
        solver = "logit" if spec.is_logit else "general"
    if solver == "logit":
        out = solve_equilibrium_logit(spec, tol=args.tol or 1e-12, max_iter=args.max_iter)
    else:
        out = solve_equilibrium(spec, tol=args.tol or 1e-9, max_iter=args.max_iter)
    _emit(io.write_outcome(out), args.out)
    if args.csv:
        for name in ("mu", "tau_alpha", "tau_gamma"):
            io.write_matrix_csv(getattr(out, name), spec, f"{args.csv}_{name}.csv")
    return EXIT_OK


def cmd_da(args):
    spec = io.read_market(args.market)
    try:
        out = da_run(spec, tol=args.tol, max_rounds=args.max_rounds, proposer=args.proposer,
                     strict=args.strict)
    except InvariantError as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if args.trace:
        io.rows_csv(["round", "residual", "min_avail", "max_tau_alpha", "max_tau_gamma"],
                    out.diagnostics["trace"], args.trace)
    viol = out.diagnostics["violations"]
    if viol:
        print(f"warning: {len(viol)} invariant violation(s) recorded", file=sys.stderr)
    _emit(io.write_outcome(out), args.out)
    return EXIT_OK


def _read_capacity(path, shape):
    d = io.load_json(path)
    cap = d.get("capacity") if isinstance(d, dict) else d
    if cap is None:
        raise ValidationError(f"{path}: missing field 'capacity'")
    cap = np.asarray(cap, dtype=float)
    if cap.shape != shape:
        raise ValidationError(f"{path}: capacity has shape {cap.shape}, expected {shape}")
    return cap


def cmd_constrained(args):
    spec = io.read_market(args.market)
    cap = _read_capacity(args.capacity, spec.shape)
    prov = make_provider(spec, args.side)
    use_logit = args.solver == "logit" or (args.solver == "auto" and prov.is_logit)
    if use_logit:
        sol = solve_constrained_logit(prov, cap)
    else:
        sol = solve_constrained(prov, cap, tol=args.tol, max_iter=args.max_iter)
    diag = {k: v for k, v in sol.diagnostics.items() if k != "trace"}
    _emit(io.dumps({"side": args.side, "theta": sol.theta, "tau": sol.tau, "rho": sol.rho,
                    "demand": sol.demand, "outside": sol.outside, "diagnostics": diag}),
          args.out)
    return EXIT_OK


def cmd_simulate(args):
    spec = io.read_market(args.market)
    traj, rep = sim_run(spec, args.wait_map, T=args.T, stat_tol=args.stat_tol)
    if args.trace:
        io.rows_csv(trace_header(spec), trace_rows(traj), args.trace)
    out = rep.outcome
    payload = io.outcome_to_dict(out)
    payload["report"] = io.to_jsonable({
        "stationary": rep.stationary, "periods": rep.periods, "t_stationary": rep.t_stationary,
        "step_size": rep.step_size, "equilibrium_residual": rep.equilibrium_residual,
        "gap_mu_static": rep.gap_mu, "gap_tau_static": rep.gap_tau,
        "one_sided_violations": rep.one_sided_violations})
    _emit(json.dumps(payload, indent=2) + "\n", args.out)
    print(str(rep), file=sys.stderr)
    return EXIT_OK if rep.stationary else EXIT_FAIL


def cmd_limit(args):
    spec = io.read_market(args.market)
    sched, out = sigma_limit(spec, K=args.K, tol=args.tol)
    if args.trace:
        header = (["sigma"] + [f"u[{t}]" for t in spec.passenger_types]
                  + [f"v[{t}]" for t in spec.taxi_types] + ["residual"])
        io.rows_csv(header, sched.rows(), args.trace)
    payload = io.deterministic_to_dict(out)
    payload["limit"] = io.to_jsonable({
        "method": sched.method, "eps_used": sched.eps_used,
        "u_extrapolated": sched.u_limit, "v_extrapolated": sched.v_limit,
        "cauchy_gaps": sched.cauchy_gaps()})
    _emit(json.dumps(payload, indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_check(args):
    spec = io.read_market(args.market)
    if args.individual:
        d = io.load_json(args.outcome)
        market, pi = io.individual_from_dict(spec, d, str(args.outcome))
        rep = check_classical_stability(market, pi)
    else:
        validate_market(spec, integer=True)
        rep = check_aggregate_stability(spec, io.read_deterministic(args.outcome), eps=args.eps)
    print(rep)
    return EXIT_OK if rep.ok else EXIT_FAIL


def cmd_bridge(args):
    spec = io.read_market(args.market)
    validate_market(spec, integer=True)
    if args.direction == "up":
        if args.matching:
            market, pi = io.individual_from_dict(spec, io.load_json(args.matching), args.matching)
        else:
            market = IndividualMarket.from_spec(spec)
            pi = classical_da(market, args.proposer, seed=args.seed)
        rep = check_classical_stability(market, pi)
        if not rep.ok:
            print(rep, file=sys.stderr)
            return EXIT_FAIL
        out = aggregate_outcome(market, pi)
        tau_p, tau_t = burned_amounts(market, pi, out)
        payload = io.deterministic_to_dict(out)
        payload["burned"] = io.to_jsonable({"passengers": tau_p, "taxis": tau_t})
        payload["check"] = str(check_aggregate_stability(spec, out))
    else:
        if args.outcome:
            agg = io.read_deterministic(args.outcome)
        else:
            market = IndividualMarket.from_spec(spec)
            agg = aggregate_outcome(market, classical_da(market, args.proposer, seed=args.seed))
        rep = check_aggregate_stability(spec, agg)
        if not rep.ok:
            print(rep, file=sys.stderr)
            return EXIT_FAIL
        pi = disaggregate_outcome(spec, agg, seed=args.seed)
        market = pi.meta["market"]
        payload = io.individual_to_dict(market, pi)
        payload["check"] = str(check_classical_stability(market, pi))
    _emit(json.dumps(payload, indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_mmf(args):
    d = io.load_json(args.margins)
    for name in ("mu_x0", "mu_0y"):
        if name not in d:
            raise ValidationError(f"{args.margins}: missing field {name!r}")
    spec = io.read_market(args.market) if args.market else None
    alpha = d.get("alpha", None if spec is None else spec.alpha)
    gamma = d.get("gamma", None if spec is None else spec.gamma)
    if alpha is None or gamma is None:
        raise ValidationError(f"{args.margins}: needs 'alpha' and 'gamma' (or pass --market)")
    sigma = d.get("sigma")
    if sigma is None:
        sigma = spec.shocks.sigma if spec is not None and spec.shocks is not None else 1.0
    mx = np.asarray(d["mu_x0"], dtype=float)
    my = np.asarray(d["mu_0y"], dtype=float)
    a = np.asarray(alpha, dtype=float)
    g = np.asarray(gamma, dtype=float)
    if a.ndim == 2:
        mx, my = mx.reshape(-1, 1), my.reshape(1, -1)
    menzel, cs, leon = matching_functions(mx, my, a, g, sigma=float(sigma))
    rows = np.column_stack([np.ravel(menzel), np.ravel(cs), np.ravel(leon)])
    text = "menzel,choo_siow,leontief\n" + "".join(
        ",".join(f"{v:.12g}" for v in r) + "\n" for r in rows)
    _emit(text, args.out)
    return EXIT_OK


def cmd_gen(args):
    shocks = None if args.integer else ShockSpec("logit", sigma=args.sigma)
    spec = gen_instance(args.nx, args.ny, tuple(args.utility_range), tuple(args.mass_range),
                        seed=args.seed, shocks=shocks, integer=args.integer)
    _emit(io.dumps_market(spec), args.out)
    return EXIT_OK


def _threads(requested):
    cap = os.environ.get("MATCHBURN_THREADS")
    n = requested or os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ValidationError(f"MATCHBURN_THREADS must be an integer, got {cap!r}") from None
    return n


def cmd_batch(args):
    if args.markets:
        specs = [io.read_market(p) for p in args.markets]
        names = [str(p) for p in args.markets]
    else:
        specs = gen_batch(args.count, seed=args.seed, max_types=args.max_types)
        names = [f"instance-{k}" for k in range(len(specs))]

    def one(spec):
        return cross_check(spec, simulate=not args.no_sim)

    with ThreadPoolExecutor(max_workers=_threads(args.threads)) as pool:
        results = list(pool.map(one, specs))
    worst = 0.0
    failed = False
    for name, spec, r in zip(names, specs, results):
        status = "ok" if r["max_dev"] <= args.tol and not r["failures"] else "FAIL"
        failed |= status == "FAIL"
        worst = max(worst, r["max_dev"])
        extra = f" failures={sorted(r['failures'])}" if r["failures"] else ""
        print(f"{name} {spec.shape[0]}x{spec.shape[1]} max_dev={r['max_dev']:.3e} {status}{extra}")
    print(f"batch: {len(specs)} instance(s), max pairwise deviation {worst:.3e} "
          f"(tolerance {args.tol:g}): {'FAIL' if failed else 'PASS'}")
    return EXIT_FAIL if failed else EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser():
    p = argparse.ArgumentParser(
        prog="matchburn",
        description="Aggregate stable matching with waiting times: solvers, checkers, simulation.")
    sub = p.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    def market_cmd(name, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.add_argument("--market", required=True, help="market JSON file")
        sp.add_argument("--out", help="output file (default: stdout)")
        return sp

    s = market_cmd("solve", "solve the random-utility equilibrium")
    s.add_argument("--solver", choices=["auto", "general", "logit"], default="auto",
                   help="auto picks logit when every shock is logit")
    s.add_argument("--tol", type=_positive(), help="residual tolerance (general 1e-9, logit 1e-12)")
    s.add_argument("--max-iter", type=_positive(int), default=100_000, help="iteration cap")
    s.add_argument("--csv", metavar="PREFIX", help="also write PREFIX_mu.csv, PREFIX_tau_*.csv")
    s.set_defaults(func=cmd_solve, paths=("market", "out"))

    s = market_cmd("da", "run generalized deferred acceptance")
    s.add_argument("--proposer", choices=["passengers", "taxis"], default="passengers")
    s.add_argument("--tol", type=_positive(), default=1e-8, help="stop when max|proposed-kept| <= tol")
    s.add_argument("--max-rounds", type=_positive(int), default=100_000)
    s.add_argument("--strict", action="store_true", help="abort on any invariant violation")
    s.add_argument("--trace", help="per-round CSV trace")
    s.set_defaults(func=cmd_da, paths=("market", "out", "trace"))

    s = market_cmd("constrained", "constrained choice of one side under capacities")
    s.add_argument("--capacity", required=True, help='JSON matrix or {"capacity": matrix}')
    s.add_argument("--side", choices=["alpha", "gamma"], default="alpha")
    s.add_argument("--solver", choices=["auto", "general", "logit"], default="auto")
    s.add_argument("--tol", type=_positive(), default=1e-10)
    s.add_argument("--max-iter", type=_positive(int), default=100_000)
    s.set_defaults(func=cmd_constrained, paths=("market", "capacity", "out"))

    s = market_cmd("simulate", "simulate the queue dynamics until stationary")
    s.add_argument("--wait-map", choices=WAIT_MAPS, default="relaxation")
    s.add_argument("--T", type=_positive(int), default=5000, help="maximum number of periods")
    s.add_argument("--stat-tol", type=_positive(), default=1e-6, help="stationarity tolerance")
    s.add_argument("--trace", help="per-period CSV trace")
    s.set_defaults(func=cmd_simulate, paths=("market", "out", "trace"))

    s = market_cmd("limit", "deterministic outcome as the vanishing-noise limit")
    s.add_argument("--K", type=_positive(int), default=20, help="use sigma = 2^-k, k = 0..K")
    s.add_argument("--tol", type=_positive(), default=1e-7)
    s.add_argument("--trace", help="CSV of the payoff trajectory")
    s.set_defaults(func=cmd_limit, paths=("market", "out", "trace"))

    s = market_cmd("check", "check stability of a deterministic outcome")
    s.add_argument("--outcome", required=True,
                   help='{"mu","u","v"} or, with --individual, {"pi"[, "passengers", "taxis"]}')
    s.add_argument("--individual", action="store_true", help="check an individual matching")
    s.add_argument("--eps", type=float, default=0.0, help="tolerance (default exact)")
    s.set_defaults(func=cmd_check, paths=("market", "outcome", "out"))

    s = market_cmd("bridge", "convert between individual and type-level stable outcomes")
    s.add_argument("--direction", choices=["up", "down"], required=True,
                   help="up: individual -> aggregate, down: aggregate -> individual")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--proposer", choices=["passengers", "taxis"], default="passengers")
    s.add_argument("--matching", help="individual matching JSON (up; default: Gale-Shapley)")
    s.add_argument("--outcome", help="aggregate outcome JSON (down; default: from Gale-Shapley)")
    s.set_defaults(func=cmd_bridge, paths=("market", "matching", "outcome", "out"))

    s = sub.add_parser("mmf", help="evaluate the three matching functions at given margins")
    s.add_argument("--margins", required=True,
                   help='JSON with "mu_x0", "mu_0y" and optionally "alpha", "gamma", "sigma"')
    s.add_argument("--market", help="market supplying alpha, gamma and sigma")
    s.add_argument("--out", help="CSV output (default: stdout)")
    s.set_defaults(func=cmd_mmf, paths=("margins", "market", "out"))

    s = sub.add_parser("gen", help="generate a seeded random market")
    s.add_argument("--nx", type=_positive(int), required=True)
    s.add_argument("--ny", type=_positive(int), required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--utility-range", type=float, nargs=2, default=[-2.0, 2.0], metavar=("LO", "HI"))
    s.add_argument("--mass-range", type=float, nargs=2, default=[0.5, 2.0], metavar=("LO", "HI"))
    s.add_argument("--sigma", type=_positive(), default=1.0, help="logit shock scale")
    s.add_argument("--integer", action="store_true", help="integer deterministic market")
    s.add_argument("--out", help="output file (default: stdout)")
    s.set_defaults(func=cmd_gen, paths=("out",))

    s = sub.add_parser("batch", help="cross-check all solvers on many markets")
    s.add_argument("markets", nargs="*", help="market files (default: generated instances)")
    s.add_argument("--count", type=_positive(int), default=50)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-types", type=_positive(int), default=8)
    s.add_argument("--tol", type=_positive(), default=1e-6, help="max allowed pairwise deviation")
    s.add_argument("--threads", type=_positive(int), help="worker threads (capped by MATCHBURN_THREADS)")
    s.add_argument("--no-sim", action="store_true", help="skip the queue simulation")
    s.set_defaults(func=cmd_batch, paths=())
    return p


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        _check_paths(args, *args.paths)
        return args.func(args)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (MatchburnError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
