"""Compare the compiled and pure-Python simulation kernels.

Runs one replication of each simulator per backend on the same seed, checks
that the outputs are bit-identical, and reports wall time and events/second.

    python benchmarks/bench_kernels.py --horizon 20000
"""
import argparse
import time

import numpy as np

from forkjoin.model import reference_config
from forkjoin.sim import _pykernels, available_backends

try:
    from forkjoin.sim import _kernels
except ImportError:
    _kernels = None


def _streams(seed, count):
    return [np.random.Generator(np.random.PCG64(s))
            for s in np.random.SeedSequence(seed).spawn(count)]


def _run(module, kind, c, horizon, seed):
    args = (c.n, c.k, c.lam, c.mu0, c.mu1, c.p, horizon, 0.1 * horizon)
    if kind == "des":
        g = _streams(seed, c.n + 1)
        t0 = time.perf_counter()
        out = module.run_des(*args, g[0], g[1:])
    else:
        g = _streams(seed, 1)
        t0 = time.perf_counter()
        out = module.run_ctmc(*args, g[0])
    return time.perf_counter() - t0, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--horizon", type=float, default=20000.0)
    ap.add_argument("--p", type=float, default=0.6)
    ap.add_argument("--lambda", dest="lam", type=float, default=0.5)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled kernels not built; available:", available_backends())
        return 1
    c = reference_config(p=args.p, lam=args.lam)
    print(f"n={c.n} k={c.k} p={c.p} lambda={c.lam} horizon={args.horizon:g}")
    print(f"{'kernel':6s} {'python s':>10s} {'compiled s':>11s} {'speedup':>8s} "
          f"{'departures':>11s} {'identical':>9s}")
    for kind in ("des", "ctmc"):
        tp, op = _run(_pykernels, kind, c, args.horizon, args.seed)
        tc, oc = _run(_kernels, kind, c, args.horizon, args.seed)
        print(f"{kind:6s} {tp:10.3f} {tc:11.4f} {tp / tc:8.1f} {oc['departures']:11d} "
              f"{str(op == oc):>9s}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
