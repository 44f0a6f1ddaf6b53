"""Compare the numba kernels with the pure-numpy fallback.

Each backend runs in its own interpreter because the switch
(``MATCHBURN_NUMBA``) is read at import time. Reported times exclude the
first call, so JIT compilation is not counted.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--size 3]
"""

import argparse
import json
import os
import subprocess
import sys
import time

WORKER = r"""
import json, sys, time
import numpy as np
from matchburn import ShockSpec, backend, gen_instance, solve_equilibrium, solve_equilibrium_logit

size, repeat = int(sys.argv[1]), int(sys.argv[2])
cases = {
    "general/logit": (gen_instance(size, size, seed=1), solve_equilibrium),
    "general/normal": (gen_instance(size, size, seed=1, shocks=ShockSpec("iid", family="normal")),
                       solve_equilibrium),
    "logit closed form": (gen_instance(2 * size, 2 * size, seed=1), solve_equilibrium_logit),
}
res = {"backend": backend(), "cases": {}}
for name, (spec, solve) in cases.items():
    mu = solve(spec).mu
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        solve(spec)
        times.append(time.perf_counter() - t0)
    res["cases"][name] = {"seconds": min(times), "mu": np.asarray(mu).tolist()}
print(json.dumps(res))
"""


def run(flag, size, repeat):
    env = dict(os.environ, MATCHBURN_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", WORKER, str(size), str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--size", type=int, default=3, help="types per side")
    args = ap.parse_args(argv)
    t0 = time.perf_counter()
    fast = run("1", args.size, args.repeat)
    slow = run("0", args.size, args.repeat)
    print(f"{'case':<20}{fast['backend']:>12}{slow['backend']:>12}{'speedup':>10}{'max|dmu|':>12}")
    for name, f in fast["cases"].items():
        s = slow["cases"][name]
        dev = max(abs(a - b) for ra, rb in zip(f["mu"], s["mu"]) for a, b in zip(ra, rb))
        print(f"{name:<20}{f['seconds']:>11.4f}s{s['seconds']:>11.4f}s"
              f"{s['seconds'] / f['seconds']:>9.1f}x{dev:>12.2e}")
    print(f"total wall time {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
