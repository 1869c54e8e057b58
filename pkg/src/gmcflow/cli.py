"""Command-line front end: run flows, print ball oracles, check traces.

Exit codes: 0 success, 1 usage or configuration problems, 2 numeric
failures (margin violations, solver breakdown, failed checks).
"""

import argparse
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from .profiles import MonotoneProfile, ForcingSpec
from .anisotropy import Anisotropy
from .grid import GridSpec
from .step import StepConfig
from .flow import (FlowConfig, run_flow, write_trace, read_trace,
                   modulus_table, holder_fit)
from .oracles import oracle_table
from . import verify


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # the exit-code contract reserves 1 for usage problems
    def error(self, message):
        self.exit(1, "%s: error: %s\n" % (self.prog, message))


# ---------------------------------------------------------------------------
# config file: flat dotted keys, one per line

def _as_floats(raw):
    return [float(x) for x in raw.split(",")]


_KEYS = {
    "grid.dim": "int",
    "grid.cells": "floats",
    "grid.lo": "floats",
    "grid.hi": "floats",
    "anisotropy.kind": "str",
    "anisotropy.p": "float",
    "anisotropy.weights": "floats",
    "anisotropy.eps": "float",
    "anisotropy.directions": "floats",
    "profile.kind": "str",
    "profile.alpha": "float",
    "profile.slope": "float",
    "profile.table": "path",
    "forcing.kind": "str",
    "forcing.value": "float",
    "forcing.center": "floats",
    "forcing.radius": "float",
    "forcing.amplitude": "float",
    "forcing.q": "float",
    "init.shape": "str",
    "init.center": "floats",
    "init.radius": "float",
    "init.side": "float",
    "init.lo": "floats",
    "init.hi": "floats",
    "init.semi_axes": "floats",
    "init.r_in": "float",
    "init.r_out": "float",
    "init.vertices": "floats",
    "flow.tau": "float",
    "flow.T": "float",
    "flow.selection": "str",
    "flow.gap_tol": "float",
    "flow.max_iters": "int",
    "flow.s_star": "float",
    "output.dir": "str",
    "output.cadence": "int",
}


def load_config(path):
    """Parse and validate a run config; errors carry line numbers."""
    if not os.path.exists(path):
        raise ConfigError("config file %r does not exist" % path)
    cfg = {}
    with open(path) as fh:
        for ln, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError("line %d: expected key = value" % ln)
            key, _, val = line.partition("=")
            key = key.strip()
            val = val.strip()
            if key not in _KEYS:
                raise ConfigError("line %d: unknown key %r" % (ln, key))
            if key in cfg:
                raise ConfigError("line %d: duplicate key %r" % (ln, key))
            kind = _KEYS[key]
            try:
                if kind == "int":
                    cfg[key] = int(val)
                elif kind == "float":
                    cfg[key] = math.inf if val == "inf" else float(val)
                elif kind == "floats":
                    cfg[key] = _as_floats(val)
                else:
                    cfg[key] = val
            except ValueError:
                raise ConfigError("line %d: cannot parse %r as %s"
                                  % (ln, val, kind))
            if kind == "path" and not os.path.exists(val):
                raise ConfigError("line %d: path %r does not exist"
                                  % (ln, val))
    for req in ("grid.dim", "grid.cells", "grid.lo", "grid.hi",
                "init.shape", "flow.tau", "flow.T", "output.dir"):
        if req not in cfg:
            raise ConfigError("missing required key %r" % req)
    return cfg


def _vector(cfg, key, dim):
    v = cfg[key]
    if len(v) == 1:
        return [v[0]] * dim
    if len(v) != dim:
        raise ConfigError("%s needs 1 or %d entries" % (key, dim))
    return v


def build_setup(cfg):
    """Instantiate grid, profile, forcing, anisotropy, and flow config."""
    dim = cfg["grid.dim"]
    if dim not in (2, 3):
        raise ConfigError("grid.dim must be 2 or 3")
    cells = [int(c) for c in _vector(cfg, "grid.cells", dim)]
    grid = GridSpec(cells, _vector(cfg, "grid.lo", dim),
                    _vector(cfg, "grid.hi", dim))

    kind = cfg.get("profile.kind", "power")
    if kind == "power":
        profile = MonotoneProfile.power(cfg.get("profile.alpha", 1.0))
    elif kind == "linear":
        profile = MonotoneProfile.linear(cfg.get("profile.slope", 1.0))
    elif kind == "table":
        if "profile.table" not in cfg:
            raise ConfigError("profile.kind = table needs profile.table")
        pts = []
        with open(cfg["profile.table"]) as fh:
            for row in fh:
                row = row.strip()
                if row:
                    r, f = row.split(",")
                    pts.append((float(r), float(f)))
        profile = MonotoneProfile.from_table(pts)
    else:
        raise ConfigError("unknown profile.kind %r" % kind)

    fk = cfg.get("forcing.kind", "zero")
    if fk == "zero":
        forcing = ForcingSpec.zero()
    elif fk == "constant":
        forcing = ForcingSpec.constant(cfg.get("forcing.value", 0.0),
                                       q=cfg.get("forcing.q", math.inf))
    elif fk == "bump":
        forcing = ForcingSpec.bump(tuple(_vector(cfg, "forcing.center", dim)),
                                   cfg.get("forcing.radius", 0.25),
                                   cfg.get("forcing.amplitude", 1.0),
                                   q=cfg.get("forcing.q", math.inf))
    else:
        raise ConfigError("unknown forcing.kind %r" % fk)

    ak = cfg.get("anisotropy.kind", "euclidean")
    if ak == "euclidean":
        a = Anisotropy.euclidean(dim)
    elif ak == "lp":
        a = Anisotropy.scaled_lp(dim, cfg.get("anisotropy.p", 2.0),
                                 cfg.get("anisotropy.weights"))
    elif ak == "polytope":
        dirs = cfg.get("anisotropy.directions")
        if dirs is None or len(dirs) % dim:
            raise ConfigError("anisotropy.directions must list vectors "
                              "of grid.dim components")
        vecs = [dirs[i:i + dim] for i in range(0, len(dirs), dim)]
        a = Anisotropy.smoothed_polytope(vecs,
                                         cfg.get("anisotropy.eps", 0.05))
    else:
        raise ConfigError("unknown anisotropy.kind %r" % ak)

    init = {"shape": cfg["init.shape"]}
    for key in ("center", "radius", "side", "lo", "hi", "semi_axes",
                "r_in", "r_out"):
        if "init." + key in cfg:
            init[key] = cfg["init." + key]
    if "init.vertices" in cfg:
        flat = cfg["init.vertices"]
        if len(flat) % dim:
            raise ConfigError("init.vertices length must be a multiple "
                              "of grid.dim")
        init["vertices"] = [flat[i:i + dim]
                            for i in range(0, len(flat), dim)]

    tau = cfg["flow.tau"]
    if tau <= 0:
        raise ConfigError("flow.tau must be positive")
    step = StepConfig(tau=tau,
                      pd_max_iters=cfg.get("flow.max_iters", 400000),
                      pd_gap_tol=cfg.get("flow.gap_tol"),
                      s_star=cfg.get("flow.s_star", 0.5),
                      selection=cfg.get("flow.selection", "threshold"))
    flow_cfg = FlowConfig(tau, cfg["flow.T"], init, step,
                          checkpoint_every=cfg.get("output.cadence", 1))
    return grid, profile, forcing, a, flow_cfg, cfg["output.dir"]


# ---------------------------------------------------------------------------
# subcommands

def cmd_run(args):
    try:
        cfg = load_config(args.config)
        grid, profile, forcing, a, flow_cfg, outdir = build_setup(cfg)
    except ConfigError as exc:
        print("config: %s" % exc, file=sys.stderr)
        return 1
    try:
        trace = run_flow(flow_cfg, profile, forcing, a, grid)
    except (ValueError, ArithmeticError) as exc:
        print("run failed: %s" % exc, file=sys.stderr)
        return 2
    write_trace(trace, outdir, mask_cadence=cfg.get("output.cadence", 1))
    if trace.status == "error":
        print("run failed: %s" % trace.error, file=sys.stderr)
        return 2
    print("%s: %d steps, status %s" % (outdir, trace.steps, trace.status))
    return 0


def cmd_oracle(args):
    profile = MonotoneProfile.power(args.alpha)
    tau = args.tau if args.tau is not None else (args.T / 100.0 or 1.0)
    try:
        rows = oracle_table(profile, args.n, args.r0, tau, args.T)
    except (ValueError, ArithmeticError) as exc:
        print("oracle failed: %s" % exc, file=sys.stderr)
        return 2
    out = open(args.out, "w") if args.out else sys.stdout
    out.write("t,r_ode,r_closed,r_recurrence\n")
    for t, rode, rclosed, rrec in rows:
        out.write("%.17g,%.17g,%.17g,%.17g\n" % (t, rode, rclosed, rrec))
    if args.out:
        out.close()
    return 0


def _jobs(args):
    if args.jobs:
        return args.jobs
    env = os.environ.get("GMCF_JOBS")
    if env and env.isdigit() and int(env) > 0:
        return int(env)
    return os.cpu_count() or 1


def cmd_check(args):
    traces = []
    for d in args.traces:
        if not os.path.isdir(d):
            print("trace directory %r does not exist" % d, file=sys.stderr)
            return 1
        try:
            traces.append(read_trace(d))
        except (ValueError, OSError, KeyError) as exc:
            print("cannot load %r: %s" % (d, exc), file=sys.stderr)
            return 1
    if not traces:
        print("no trace directories given", file=sys.stderr)
        return 1

    n = traces[0].grid.n
    a = Anisotropy.euclidean(n)
    profile = MonotoneProfile.power(args.alpha)
    tasks = []
    if args.comparison:
        if len(traces) != 2:
            print("--comparison needs exactly two traces (inner, outer)",
                  file=sys.stderr)
            return 1
        tasks.append(lambda: verify.comparison_suite(traces[0], traces[1]))
    if args.mean_convex:
        for t in traces:
            tasks.append(lambda t=t: verify.mean_convex_suite(
                t, a, alpha=args.alpha))
    if args.volume_distance:
        for t in traces:
            tasks.append(lambda t=t: verify.volume_distance_suite(
                t, (1.0, 5.0, 25.0), profile, a))
    if args.refinement:
        if len(traces) < 3:
            print("--refinement needs three traces, coarse to fine",
                  file=sys.stderr)
            return 1
        tasks.append(lambda: verify.refinement_convergence(traces))
    if args.holder:
        def holder(t=traces[0]):
            rep = verify.SuiteReport("holder")
            table = modulus_table(t)
            exponent, C = holder_fit(table, args.alpha)
            target = args.alpha / (1.0 + args.alpha) - 0.1
            ok = (not math.isnan(exponent)) and exponent >= target
            rep.add(0, "holder_exponent",
                    exponent if not math.isnan(exponent) else -1.0,
                    target, ok)
            return rep
        tasks.append(holder)
    if not tasks:
        print("no suites selected", file=sys.stderr)
        return 1

    with ThreadPoolExecutor(max_workers=_jobs(args)) as pool:
        reports = list(pool.map(lambda f: f(), tasks))

    os.makedirs(args.out, exist_ok=True)
    verify.write_report(reports, os.path.join(args.out, "report.jsonl"))
    for rep in reports:
        print(rep.summary())
    return 0 if all(r.passed for r in reports) else 2


def main(argv=None):
    parser = _Parser(prog="gmcflow")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", parents=[], add_help=True,
                           help="execute a flow described by a config file")
    p_run.add_argument("config")
    p_run.set_defaults(func=cmd_run)

    p_or = sub.add_parser("oracle", help="print ball-radius reference "
                          "curves as CSV")
    p_or.add_argument("--alpha", type=float, required=True)
    p_or.add_argument("--n", type=int, default=2)
    p_or.add_argument("--r0", type=float, default=1.0)
    p_or.add_argument("--tau", type=float, default=None)
    p_or.add_argument("--T", type=float, required=True)
    p_or.add_argument("--out", default=None)
    p_or.set_defaults(func=cmd_oracle)

    p_ck = sub.add_parser("check", help="run verification suites over "
                          "trace directories")
    p_ck.add_argument("traces", nargs="+")
    p_ck.add_argument("--comparison", action="store_true")
    p_ck.add_argument("--mean-convex", dest="mean_convex",
                      action="store_true")
    p_ck.add_argument("--volume-distance", dest="volume_distance",
                      action="store_true")
    p_ck.add_argument("--refinement", action="store_true")
    p_ck.add_argument("--holder", action="store_true")
    p_ck.add_argument("--alpha", type=float, default=1.0)
    p_ck.add_argument("--out", default="checks")
    p_ck.add_argument("--jobs", type=int, default=0)
    p_ck.set_defaults(func=cmd_check)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
