"""Command-line driver.

    kpzfp simulate    --initial step --n 20 --t 2 --events 1:0,3:-2 --samples 100000
    kpzfp exact       --initial "4,1,0,-3" --t 2 --events 2:2,4:-2 --route all
    kpzfp fixed-point --data narrow-wedge --t 2 --points 0:-1,0.5:0
    kpzfp experiment  specs/criterion07.ini [more.ini ...]
    kpzfp selftest

Common flags: --seed, --tol, --out (a .csv path or a directory), --threads.
Each command writes a CSV result table and, where a layout is known, a PNG
figure next to it. The exit code is 0 only if every row has status ok,
1 if any row failed and 2 for invalid input.
"""

import argparse
import sys
import time
from pathlib import Path

from .. import fixed_point as fp
from ..errors import InvalidConfigError, KpzError
from ..tasep_exact import ExactQuery, bfps_multipoint, exact_multipoint, path_integral_multipoint
from ..tasep_sim import ParticleConfig, empirical_multipoint, preset
from .plots import render
from .runners import DEFAULT_PLOT, PLOTS, parse_barrier, run_spec
from .spec import ExperimentSpec, load_spec
from .table import ResultTable


def _common(p):
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--out", default=None, help="CSV path, or a directory for <name>.csv")
    p.add_argument("--threads", type=int, default=None)


def build_parser():
    ap = argparse.ArgumentParser(prog="kpzfp", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("simulate", help="Monte Carlo estimate of a multipoint event")
    s.add_argument("--initial", default="step", help="preset name or comma list of positions")
    s.add_argument("--n", type=int, default=20, help="particles for presets")
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--events", required=True, help="label:site pairs, e.g. 1:0,3:-2")
    s.add_argument("--samples", type=int, default=100000)
    _common(s)

    e = sub.add_parser("exact", help="exact multipoint probability from the kernel formulas")
    e.add_argument("--initial", default="step")
    e.add_argument("--n", type=int, default=20)
    e.add_argument("--t", type=float, required=True)
    e.add_argument("--events", required=True)
    e.add_argument("--route", choices=["exact", "bfps", "path-integral", "all"], default="exact")
    _common(e)

    f = sub.add_parser("fixed-point", help="KPZ fixed point multipoint probability")
    f.add_argument("--data", default="narrow-wedge",
                   help="narrow-wedge | flat | flat:c | half-flat | wedges:y/c;y/c")
    f.add_argument("--t", type=float, default=2.0)
    f.add_argument("--points", default=None, help="x:a pairs, e.g. 0:-1,0.5:0")
    f.add_argument("--cdf", default=None, help="lo:hi:n one-point CDF table at --x")
    f.add_argument("--x", type=float, default=0.0)
    _common(f)

    x = sub.add_parser("experiment", help="run experiment spec files")
    x.add_argument("specs", nargs="+")
    _common(x)

    t = sub.add_parser("selftest", help="fast consistency checks")
    _common(t)
    return ap


def _pairs(text, cast=int):
    out = []
    for part in text.split(","):
        if not part.strip():
            continue
        k, v = part.split(":")
        out.append((cast(k), cast(v)))
    return out


def _config(initial, n):
    if any(c.isdigit() for c in initial):
        return ParticleConfig.of([int(v) for v in initial.split(",")])
    if initial == "periodic":
        return preset(initial, N=n)
    return preset(initial, n=n)


def _write(table, out, default_name, layout=None):
    if out is None:
        sys.stdout.write(table.to_csv())
        return
    path = Path(out)
    if path.suffix != ".csv":
        path = path / f"{default_name}.csv"
    table.to_csv(path)
    if layout:
        render(table, layout, path.with_suffix(".png"))
    print(f"wrote {path}", file=sys.stderr)


def _timed(table, fn, **fields):
    t0 = time.perf_counter()
    try:
        vals = fn()
        status = "ok"
    except KpzError as exc:
        vals, status = {"message": str(exc)}, f"error:{type(exc).__name__}"
    table.append(status, 1000 * (time.perf_counter() - t0), **fields, **vals)


def cmd_simulate(a):
    seed = 0 if a.seed is None else a.seed
    cfg = _config(a.initial, a.n)
    ev = _pairs(a.events)
    tab = ResultTable("simulate", "", seed)

    def fn():
        p, se = empirical_multipoint(cfg, a.t, ev, a.samples, seed, threads=a.threads or 1)
        return {"value": p, "error": se}
    _timed(tab, fn, initial=a.initial, t=a.t, events=a.events, samples=a.samples)
    return tab


def cmd_exact(a):
    cfg = _config(a.initial, a.n)
    q = ExactQuery.of(cfg, a.t, _pairs(a.events))
    tol = 1e-10 if a.tol is None else a.tol
    routes = {"exact": lambda: exact_multipoint(q, tol=tol), "bfps": lambda: bfps_multipoint(q),
              "path-integral": lambda: path_integral_multipoint(q)}
    names = list(routes) if a.route == "all" else [a.route]
    tab = ResultTable("exact", q.digest(), 0)
    for r in names:
        _timed(tab, lambda r=r: {"value": routes[r]()}, route=r, initial=a.initial, t=a.t,
               events=a.events)
    return tab


def cmd_fixed_point(a):
    h0 = parse_barrier(a.data)
    tol = 1e-9 if a.tol is None else a.tol
    tab = ResultTable("fixed-point", "", 0)
    if a.cdf:
        lo, hi, n = a.cdf.split(":")
        spec = ExperimentSpec("fixed-point-cdf", "fixed_point_cdf", tol=tol,
                              threads=a.threads or 1,
                              params={"data": a.data, "t": a.t, "x": a.x, "a_lo": float(lo),
                                      "a_hi": float(hi), "n": int(n)})
        return run_spec(spec)
    if not a.points:
        raise InvalidConfigError("fixed-point needs --points or --cdf")
    pts = _pairs(a.points, float)
    _timed(tab, lambda: {"value": fp.one_sided_extended(h0, pts, a.t, tol=tol)},
           data=a.data, t=a.t, points=a.points)
    return tab


SELFTEST = {
    "bvp_hitting": {"cases": 10},
    "route_triangle": {"cases": 4},
    "schuetz": {"t": [1.0]},
    "literature_kernels": {},
    "narrow_wedge_airy": {"a": [-2.0, 0.0]},
    "flat_airy1": {"a": [-1.0, 0.0]},
}


def cmd_selftest(a):
    seed = 0 if a.seed is None else a.seed
    tab = ResultTable("selftest", "", seed)
    for op, params in SELFTEST.items():
        spec = ExperimentSpec(f"selftest-{op}", op, params=params, seed=seed,
                              threads=a.threads or 1)
        sub = run_spec(spec)
        ms = sum(r["runtime_ms"] for r in sub.rows)
        bad = sub.failures()
        tab.append("ok" if not bad else "fail", ms, op=op, rows=len(sub.rows), failed=len(bad))
    return tab


def main(argv=None):
    ap = build_parser()
    a = ap.parse_args(argv)
    try:
        if a.cmd == "experiment":
            ok = True
            for path in a.specs:
                spec = load_spec(path).with_overrides(a.seed, a.tol, None, a.threads)
                tab = run_spec(spec)
                out = a.out if a.out is not None else (spec.out or "results")
                _write(tab, out, spec.name, PLOTS.get(spec.op, DEFAULT_PLOT))
                for r in tab.failures():
                    print(f"{spec.name} row {r['row']}: {r['status']}", file=sys.stderr)
                ok = ok and tab.ok
            return 0 if ok else 1
        tab = {"simulate": cmd_simulate, "exact": cmd_exact, "fixed-point": cmd_fixed_point,
               "selftest": cmd_selftest}[a.cmd](a)
        layout = PLOTS["fixed_point_cdf"] if a.cmd == "fixed-point" and a.cdf else None
        _write(tab, a.out, a.cmd, layout)
        return 0 if tab.ok else 1
    except KpzError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
