"""Command-line interface: ``forkjoin {approx,simulate,sweep,optimize,validate,replay}``.

Every command that is given ``--out DIR`` writes its files there together with
``manifest.json``.  The manifest stores the fully resolved command line, so
``forkjoin replay DIR/manifest.json --out OTHER`` regenerates every file
byte for byte.

Exit codes: 0 ok, 1 invalid input, 2 unstable, 3 SLA infeasible,
4 validation failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

from scipy import stats

from . import __version__, approx, ctmc, optimizer
from .errors import (ForkJoinError, Infeasible, InvalidParameter, SlaInfeasible,
                     StateSpaceTooLarge, Unstable)
from .model import APPROX_CSV_HEADER, PowerModel, SystemConfig, fmt, reference_config, validate
from .sim import REPLICATION_CSV_HEADER, SimSettings, simulate

EXIT_OK, EXIT_INPUT, EXIT_UNSTABLE, EXIT_SLA, EXIT_VALIDATION = 0, 1, 2, 3, 4

SWEEP_METRICS = ("R", "sojourn", "M", "Mh", "P")
SWEEP_CSV_HEADER = ("sweep_value", "approx_value", "sim_value", "sim_ci")
MODE_ALIASES = {"des": "server_des", "server_des": "server_des",
                "ctmc": "ctmc_trajectory", "ctmc_trajectory": "ctmc_trajectory"}

_CONFIG_FLAGS = (("n", "--n"), ("k", "--k"), ("lam", "--lambda"), ("mu0", "--mu0"),
                 ("mu1", "--mu1"), ("p", "--p"))


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument errors exit with status 1 instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _json_value(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _json_value(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_value(v) for v in x]
    return x


def _dumps(obj):
    return json.dumps(_json_value(obj), indent=2, sort_keys=True) + "\n"


def _csv(header, rows):
    lines = [",".join(header)]
    lines += [",".join(r) for r in rows]
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------- parsing

def _global_flags(parser, suppress):
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=d, help="JSON config file; flags override its values")
    parser.add_argument("--out", default=d, help="output directory (files + manifest.json)")
    parser.add_argument("--seed", type=int, default=d, help="64-bit master seed")
    parser.add_argument("--threads", type=int, default=d, help="parallel replications / grid points")


def _config_flags(parser):
    parser.add_argument("--n", type=int)
    parser.add_argument("--k", type=int)
    parser.add_argument("--lambda", dest="lam", type=float)
    parser.add_argument("--mu0", type=float)
    parser.add_argument("--mu1", type=float)
    parser.add_argument("--p", type=float)
    parser.add_argument("--power", help="quadratic:ALPHA or explicit:P0,P1")


def _sim_flags(parser, horizon=1e5, replications=5):
    parser.add_argument("--mode", default="server_des", choices=sorted(MODE_ALIASES))
    parser.add_argument("--horizon", type=float, default=horizon)
    parser.add_argument("--warmup", type=float, default=None, help="default: 10%% of horizon")
    parser.add_argument("--replications", type=int, default=replications)
    parser.add_argument("--backend", choices=("compiled", "python"), default=None)


def build_parser():
    parser = _Parser(prog="forkjoin", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"forkjoin {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("approx", help="closed-form metrics of the approximation")
    _global_flags(p, suppress=True)
    _config_flags(p)

    p = sub.add_parser("simulate", help="run replications of a simulator")
    _global_flags(p, suppress=True)
    _config_flags(p)
    _sim_flags(p)
    p.add_argument("--events", action="store_true", help="also write per-replication event logs")

    p = sub.add_parser("sweep", help="figure data: sweep lambda or p")
    _global_flags(p, suppress=True)
    _config_flags(p)
    p.add_argument("--var", required=True, choices=("lambda", "p"))
    p.add_argument("--start", type=float, required=True)
    p.add_argument("--stop", type=float, required=True)
    p.add_argument("--step", type=float, required=True)
    p.add_argument("--series", default=None,
                   help="comma-separated values of the other variable (default: config value)")
    p.add_argument("--metrics", default="R,Mh,P", help=f"subset of {','.join(SWEEP_METRICS)}")
    p.add_argument("--sim", action="store_true", help="fill the sim columns")
    _sim_flags(p)

    p = sub.add_parser("optimize", help="minimum mean power subject to a latency bound")
    _global_flags(p, suppress=True)
    _config_flags(p)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--max-queries", type=float)
    g.add_argument("--max-sojourn", type=float)
    p.add_argument("--grid-step", type=float, default=0.01)
    p.add_argument("--refine-tol", type=float, default=1e-6)

    p = sub.add_parser("validate", help="cross-check solver, simulators and approximation")
    _global_flags(p, suppress=True)
    _config_flags(p)
    _sim_flags(p, horizon=2e5, replications=5)
    p.add_argument("--y-max", type=int, default=40)
    p.add_argument("--approx-tol", type=float, default=0.10)

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", default=None, help="output directory (default: the manifest's)")
    return parser


def _resolve_config(args, fallback=None):
    """Defaults, then the config file, then explicit flags."""
    base = (fallback or reference_config()).to_dict()
    if getattr(args, "config", None):
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise InvalidParameter("config", f"cannot read {args.config}: {exc.strerror}")
        try:
            data = json.loads(text)
        except json.JSONDecodeError:
            raise InvalidParameter("config", "malformed JSON")
        if not isinstance(data, dict):
            raise InvalidParameter("config", "top-level JSON value must be an object")
        base.update(data)
    for attr, flag in _CONFIG_FLAGS:
        v = getattr(args, attr, None)
        if v is not None:
            base["lambda" if attr == "lam" else attr] = v
    if getattr(args, "power", None):
        base["power"] = PowerModel.parse(args.power).to_dict()
    return validate(SystemConfig.from_dict(base))


def _canonical_argv(command, config, options):
    """Fully resolved command line; floats use repr so they round-trip exactly."""
    argv = [command]
    for attr, flag in _CONFIG_FLAGS:
        argv += [flag, repr(getattr(config, attr))]
    pw = config.power
    if pw.kind == "quadratic":
        argv += ["--power", f"quadratic:{pw.alpha!r}"]
    else:
        argv += ["--power", f"explicit:{pw.P0!r},{pw.P1!r}"]
    for flag, value in options:
        if value is None or value is False:
            continue
        if value is True:
            argv.append(flag)
        else:
            argv += [flag, value if isinstance(value, str) else repr(value)]
    return argv


class _Output:
    """Collects files and writes them (plus the manifest) from one place."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir) if out_dir else None
        self.files = {}

    def add(self, name, text):
        self.files[name] = text

    def commit(self, command, config, argv, settings=None):
        if self.dir is None:
            return
        self.dir.mkdir(parents=True, exist_ok=True)
        for name, text in self.files.items():
            path = self.dir / name
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text)
        manifest = {
            "command": command,
            "tool": "forkjoin",
            "version": __version__,
            "argv": argv,
            "config": config.to_dict(),
            "settings": settings.to_dict() if settings is not None else None,
            "outputs": sorted(self.files),
        }
        (self.dir / "manifest.json").write_text(_dumps(manifest))


def _settings(args, seed):
    return SimSettings(horizon=args.horizon, warmup=args.warmup, seed=seed,
                       replications=args.replications, mode=MODE_ALIASES[args.mode])


def _sim_options(args):
    return [("--mode", MODE_ALIASES[args.mode]), ("--horizon", args.horizon),
            ("--warmup", args.warmup), ("--replications", args.replications)]


# --------------------------------------------------------------------------- commands

def cmd_approx(args, config, out):
    rep = approx.report(config)
    if not rep.stable:
        raise Unstable(config.lam, rep.lambda_max)
    csv = _csv(APPROX_CSV_HEADER, [rep.csv_row()])
    out.add("approx.csv", csv)
    out.add("approx.json", _dumps(rep.to_dict()))
    sys.stdout.write(csv)
    return EXIT_OK, _canonical_argv("approx", config, [("--seed", args.seed)]), None


def _aggregate_json(config, settings, report):
    d = report.to_dict()
    d["config"] = config.to_dict()
    d["settings"] = settings.to_dict()
    return d


def cmd_simulate(args, config, out):
    settings = _settings(args, args.seed)
    report = simulate(config, settings, backend=args.backend, threads=args.threads,
                      record=args.events)
    rows = [[fmt(v) for v in r.csv_row()] for r in report.replications]
    out.add("replications.csv", _csv(REPLICATION_CSV_HEADER, rows))
    agg = _aggregate_json(config, settings, report)
    out.add("aggregate.json", _dumps(agg))
    if args.events:
        for r in report.replications:
            lines = ["query,arrival,departure"]
            lines += [f"{i},{a:.17g},{d:.17g}"
                      for i, (a, d) in enumerate(zip(r.events.arrival.tolist(),
                                                     r.events.departure.tolist()))]
            out.add(f"events/replication_{r.replication}.csv", "\n".join(lines) + "\n")
    sys.stdout.write(_dumps(agg))
    argv = _canonical_argv("simulate", config,
                           [("--seed", args.seed), *_sim_options(args), ("--events", args.events)])
    return EXIT_OK, argv, settings


def _grid(start, stop, step):
    if not step > 0:
        raise InvalidParameter("step", "must be > 0")
    if stop < start:
        raise InvalidParameter("stop", "must be >= start")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(count)]


def _series_label(value):
    return format(value, ".12g")


def cmd_sweep(args, config, out):
    values = _grid(args.start, args.stop, args.step)
    other = "p" if args.var == "lambda" else "lambda"
    if args.series:
        try:
            series = [float(s) for s in args.series.split(",") if s.strip()]
        except ValueError:
            raise InvalidParameter("series", "must be comma-separated numbers")
    else:
        series = [config.p if other == "p" else config.lam]
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    for m in metrics:
        if m not in SWEEP_METRICS:
            raise InvalidParameter("metrics", f"unknown metric {m!r}")
    settings = _settings(args, args.seed) if args.sim else None

    approx_names = {"R": "mean_queries", "sojourn": "mean_sojourn", "M": "mean_active",
                    "Mh": "mean_high_rate", "P": "mean_power"}
    sim_names = approx_names
    tables = {(s, m): [] for s in series for m in metrics}
    for s in series:
        for v in values:
            lam, p = (v, s) if args.var == "lambda" else (s, v)
            cfg = validate(config.replace(lam=lam, p=p))
            rep = approx.report(cfg)
            sim = None
            if settings is not None and rep.stable:
                sim = simulate(cfg, settings, backend=args.backend, threads=args.threads)
            for m in metrics:
                a = getattr(rep, approx_names[m]) if rep.stable else None
                if sim is not None:
                    est = getattr(sim, sim_names[m])
                    sv, sc = est.mean, est.ci
                else:
                    sv = sc = None
                tables[(s, m)].append([fmt(v), fmt(a), fmt(sv), fmt(sc)])
    for (s, m), rows in tables.items():
        name = f"{m}_{other}-{_series_label(s)}.csv"
        out.add(name, _csv(SWEEP_CSV_HEADER, rows))
        sys.stdout.write(f"# {name}\n" + _csv(SWEEP_CSV_HEADER, rows))
    options = [("--seed", args.seed), ("--var", args.var), ("--start", args.start),
               ("--stop", args.stop), ("--step", args.step),
               ("--series", ",".join(repr(s) for s in series)), ("--metrics", ",".join(metrics)),
               ("--sim", args.sim)]
    if args.sim:
        options += _sim_options(args)
    return EXIT_OK, _canonical_argv("sweep", config, options), settings


def cmd_optimize(args, config, out):
    query = optimizer.SlaQuery(lam=config.lam, R_max=args.max_queries, T_max=args.max_sojourn,
                               p_grid_step=args.grid_step, refine_tol=args.refine_tol)
    result = optimizer.min_power_for_sla(config, query)
    text = _dumps(result.to_dict())
    out.add("sla.json", text)
    sys.stdout.write(text)
    options = [("--seed", args.seed), ("--max-queries", args.max_queries),
               ("--max-sojourn", args.max_sojourn), ("--grid-step", args.grid_step),
               ("--refine-tol", args.refine_tol)]
    return EXIT_OK, _canonical_argv("optimize", config, options), None


def _check(name, value, reference, tol, kind="abs"):
    delta = abs(value - reference)
    if kind == "rel":
        delta = delta / abs(reference) if reference else delta
    return {"check": name, "value": value, "reference": reference, "delta": delta,
            "tol": tol, "status": "pass" if delta <= tol else "fail"}


def _single_rate_mean_queries(config, y_max, tol):
    """Solve the occupancy-only chain that applies when ``mu0 == mu1``."""
    import numpy as np
    import scipy.sparse as sp
    from collections import deque

    start = (0,) * config.k
    index, states = {start: 0}, [start]
    rows, cols, vals = [], [], []
    queue = deque([start])
    while queue:
        y = queue.popleft()
        s = index[y]
        out = 0.0
        for tgt, rate in ctmc.single_rate_rates(y, config.n, config.mu0, config.lam).items():
            if max(tgt) > y_max:
                continue
            j = index.setdefault(tgt, len(states))
            if j == len(states):
                states.append(tgt)
                queue.append(tgt)
            rows.append(s); cols.append(j); vals.append(rate)
            out += rate
        rows.append(s); cols.append(s); vals.append(-out)
    m = len(states)
    Q = sp.csr_matrix((vals, (rows, cols)), shape=(m, m))
    chain = ctmc.TruncatedChain(config, y_max, [None] * m, index, Q)
    pi = ctmc.stationary_distribution(chain, tol=tol)
    return float(pi @ np.array([sum(y) for y in states], dtype=float))


def cmd_validate(args, config, out):
    settings = _settings(args, args.seed)
    checks = []
    solver = None
    try:
        chain = ctmc.build_truncated_chain(config, y_max=args.y_max, cap=2_000_000)
        pi = ctmc.stationary_distribution(chain, tol=1e-12)
        solver = ctmc.chain_metrics(chain, pi)
    except StateSpaceTooLarge as exc:
        checks.append({"check": "solver", "status": "skipped", "reason": str(exc)})

    sims = {}
    for mode in ("ctmc_trajectory", "server_des"):
        sims[mode] = simulate(config, SimSettings(**{**settings.to_dict(), "mode": mode}),
                              backend=args.backend, threads=args.threads)
    rep = approx.report(config)
    metrics = (("R", "mean_queries"), ("M", "mean_active"), ("Mh", "mean_high_rate"),
               ("P", "mean_power"))
    if solver is not None:
        # Bonferroni: the whole family of sim-vs-solver checks holds at 95%
        level = 1.0 - 0.05 / (len(sims) * len(metrics))
        q = float(stats.t.ppf(0.5 + level / 2.0, settings.replications - 1)) \
            if settings.replications > 1 else math.inf
        for mode, sim in sims.items():
            for label, attr in metrics:
                est = getattr(sim, attr)
                ref = getattr(solver, attr).mean
                tol = q * est.se if math.isfinite(est.se) else 0.0
                checks.append(_check(f"{mode} {label} vs solver", est.mean, ref, tol))
        if config.mu0 == config.mu1:
            r1 = _single_rate_mean_queries(config, args.y_max, 1e-12)
            checks.append(_check("solver R vs single-rate chain", solver.mean_queries.mean,
                                 r1, 1e-8))
    if rep.stable:
        ref = solver.mean_queries.mean if solver is not None \
            else sims["server_des"].mean_queries.mean
        checks.append(_check("approx R (relative)", rep.mean_queries, ref, args.approx_tol, "rel"))
    else:
        checks.append({"check": "approx R", "status": "skipped", "reason": "unstable"})

    report = {
        "config": config.to_dict(),
        "settings": settings.to_dict(),
        "solver": solver.to_dict() if solver is not None else None,
        "simulators": {m: s.to_dict() for m, s in sims.items()},
        "approx": rep.to_dict(),
        "checks": checks,
        "passed": all(c["status"] != "fail" for c in checks),
    }
    text = _dumps(report)
    out.add("validate.json", text)
    for c in checks:
        line = f"{c['status'].upper():7s} {c['check']}"
        if "delta" in c:
            line += f"  value={fmt(c['value'])} ref={fmt(c['reference'])} delta={fmt(c['delta'])} tol={fmt(c['tol'])}"
        else:
            line += f"  ({c.get('reason', '')})"
        print(line)
    options = [("--seed", args.seed), *_sim_options(args), ("--y-max", args.y_max),
               ("--approx-tol", args.approx_tol)]
    code = EXIT_OK if report["passed"] else EXIT_VALIDATION
    return code, _canonical_argv("validate", config, options), settings


COMMANDS = {
    "approx": cmd_approx,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "optimize": cmd_optimize,
    "validate": cmd_validate,
}


def _fill_globals(args):
    for name, default in (("config", None), ("out", None), ("seed", 0), ("threads", 1)):
        if getattr(args, name, None) is None:
            setattr(args, name, default)
    if not 0 <= args.seed < 2**64:
        raise InvalidParameter("seed", "must be in [0, 2^64)")
    if args.threads < 1:
        raise InvalidParameter("threads", "must be >= 1")


def _replay(args):
    try:
        manifest = json.loads(Path(args.manifest).read_text())
        argv = list(manifest["argv"])
    except (OSError, ValueError, KeyError, TypeError):
        print("forkjoin: error: unreadable manifest", file=sys.stderr)
        return EXIT_INPUT
    out = args.out or str(Path(args.manifest).resolve().parent)
    return main(argv + ["--out", out])


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "replay":
        return _replay(args)
    try:
        _fill_globals(args)
        fallback = None
        if args.command == "validate":
            fallback = SystemConfig(n=2, k=1, lam=0.3, mu0=0.54, mu1=0.9, p=0.5)
        config = _resolve_config(args, fallback)
        out = _Output(args.out)
        code, canonical, settings = COMMANDS[args.command](args, config, out)
        out.commit(args.command, config, canonical, settings)
        return code
    except Unstable as exc:
        print(f"forkjoin: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except Infeasible as exc:
        print(f"forkjoin: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except SlaInfeasible as exc:
        print(f"forkjoin: {exc}", file=sys.stderr)
        return EXIT_SLA
    except (InvalidParameter, ValueError) as exc:
        print(f"forkjoin: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ForkJoinError as exc:
        print(f"forkjoin: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
