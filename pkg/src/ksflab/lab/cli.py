"""Command line entry point: ``ksflab {run,sweep,gns,linear,ode,check}``."""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .. import inequalities as ineq
from .. import linear as lin
from .. import ode as odemod
from .export import export
from .runner import run_scenario, sweep
from .scenario import ScenarioError, load

OUT_ENV = "KSFLAB_OUT"


def default_out() -> Path:
    return Path(os.environ.get(OUT_ENV, "ksflab_out"))


def _summary(report) -> str:
    fit = "" if report.fit is None else f" T*={report.fit[0]:.8g} exponent={report.fit[1]:.4g}"
    tags = f" tags={','.join(report.tags)}" if report.tags else ""
    return f"{report.name}: {report.termination} at t={report.final_t:.8g}{fit}{tags}"


def cmd_run(args) -> int:
    sc = load(args.file, seed=args.seed, n=args.n)
    report = run_scenario(sc)
    paths = export(report, args.out, snapshot=args.snapshot or sc.snapshot)
    print(_summary(report))
    for kind, path in paths.items():
        print(f"  {kind}: {path}")
    return 0


def cmd_sweep(args) -> int:
    files = sorted(Path(args.dir).glob("*.yaml"))
    scenarios = []
    for f in files:
        try:
            scenarios.append(load(f, seed=args.seed, n=args.n))
        except ScenarioError as exc:
            print(f"{f.name}: skipped ({exc})", file=sys.stderr)
    reports = sweep(scenarios, args.parallelism)
    for report in reports:
        export(report, args.out)
        print(_summary(report))
    return 0


def cmd_check(args) -> int:
    sc = load(args.file, seed=args.seed, n=args.n)
    print(f"{sc.name}: hypothesis={sc.hypothesis} hash={sc.config_hash}")
    for problem in sc.problems:
        print(f"  violated: {problem}")
    if sc.tags:
        print(f"  tags: {', '.join(sc.tags)}")
    if not sc.problems:
        print("  all load-time checks passed")
    return 0


def cmd_gns(args) -> int:
    if args.build:
        table = ineq.build_table(args.seed, args.samples)
        ineq.save_table(table, args.build, args.seed, args.samples)
        print(f"wrote {len(table)} constants to {args.build}")
        return 0
    table = ineq.load_table(args.table)
    grid = ineq.G.make_grid(1, args.n or 256)
    rng = np.random.default_rng(args.seed)
    worst = {}
    for _ in range(args.samples):
        g = ineq.random_trig_poly(grid, rng, int(rng.integers(1, 5)), float(rng.uniform(0.05, 1.0)))
        for m in (3, 4, 5):
            r = ineq.gns_chain_check(grid, g, m, args.gamma, 0.0)
            worst[m] = max(worst.get(m, 0.0), r.ratio)
    for m, ratio in sorted(worst.items()):
        const = ineq.lookup(table, "gns", m=m, gamma=args.gamma, d=1)
        print(f"m={m} gamma={args.gamma:g}: worst ratio {ratio:.6g} (table {const:.6g})")
    return 0


def cmd_linear(args) -> int:
    ks = np.arange(args.k_min, args.k_max + 1, args.k_step)
    rows = []
    for kind in args.kind:
        rows += lin.mode_amplifications(kind, ks, args.T)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "linear.csv"
    lin.write_linear_csv(path, rows)
    for kind in args.kind:
        if len(ks) >= 4:
            slope, r2 = _safe_slope(kind, ks, args.T)
            print(f"{kind}: slope {slope:.6g} r2 {r2:.6g}")
    print(f"wrote {path}")
    return 0


def _safe_slope(kind, ks, T):
    try:
        return lin.illposedness_slope(kind, ks, T)
    except lin.NonMonotoneError:
        return float("nan"), float("nan")


def cmd_ode(args) -> int:
    ode = odemod.BlowupOde(args.kind, args.k1, args.chi1, args.d)
    rows = []
    for text in args.init:
        init = [float(v) for v in text.split(",")]
        res = odemod.blowup_time(ode, init)
        quad = odemod.quadrature_blowup_time(ode, init)
        rows.append((init, res.T_star, quad, res.drift))
        print(f"init={text}: T*_adaptive={res.T_star:.15g} T*_quadrature={quad:.15g} drift={res.drift:.3g}")
    args.out.mkdir(parents=True, exist_ok=True)
    odemod.write_ode_csv(args.out / "ode.csv", rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=None, help=f"output directory (default ${OUT_ENV} or ./ksflab_out)")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--n", type=int, default=None, help="grid points per axis")

    p = argparse.ArgumentParser(prog="ksflab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="run one scenario file")
    r.add_argument("file", type=Path)
    r.add_argument("--snapshot", action="store_true", help="also write the final fields")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", parents=[common], help="run every scenario in a directory")
    s.add_argument("dir", type=Path)
    s.add_argument("--parallelism", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("check", parents=[common], help="load a scenario and report hypothesis checks")
    c.add_argument("file", type=Path)
    c.set_defaults(func=cmd_check)

    g = sub.add_parser("gns", parents=[common], help="weighted GNS chain against the constant table")
    g.add_argument("--gamma", type=float, default=1.0)
    g.add_argument("--samples", type=int, default=400)
    g.add_argument("--table", type=Path, default=None)
    g.add_argument("--build", type=Path, default=None, help="rebuild the constant table into this file")
    g.set_defaults(func=cmd_gns)

    l = sub.add_parser("linear", parents=[common], help="per-mode amplification of the linearized systems")
    l.add_argument("--kind", nargs="+", default=["ks_wellposed", "ks_illposed_c"], choices=lin.KINDS)
    l.add_argument("--T", type=float, default=0.5)
    l.add_argument("--k-min", type=int, default=8)
    l.add_argument("--k-max", type=int, default=32)
    l.add_argument("--k-step", type=int, default=8)
    l.set_defaults(func=cmd_linear)

    o = sub.add_parser("ode", parents=[common], help="blow-up times of the vanishing-point ODE")
    o.add_argument("--kind", default="scalar_1d", choices=odemod.KINDS)
    o.add_argument("--init", nargs="+", default=["1,1"], help="comma-separated initial state(s)")
    o.add_argument("--k1", type=float, default=1.0)
    o.add_argument("--chi1", type=float, default=1.0)
    o.add_argument("--d", type=int, default=1)
    o.set_defaults(func=cmd_ode)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.out is None:
        args.out = default_out()
    if args.seed is None and args.command == "gns":
        args.seed = 0
    try:
        return args.func(args)
    except (ScenarioError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
