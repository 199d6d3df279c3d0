"""Experiment runners.

Every op takes an ExperimentSpec and returns a ResultTable. Rows run in a
thread pool; each row is independent and seeded from the spec seed and its
grid index, and rows are merged back in grid order. A row that raises a
package error or exceeds the timeout is recorded with that status instead
of aborting the table.
"""

import time
from concurrent.futures import ThreadPoolExecutor, TimeoutError as FutureTimeout

import numpy as np
from scipy.special import roots_legendre
from scipy.stats import poisson

from .. import fixed_point as fp
from ..biorthogonal import biorthogonality_matrix
from ..fredholm import det_nystrom
from ..errors import DomainError, KpzError, PrecisionError
from ..tasep_exact import (ExactQuery, ScalingParams, bfps_multipoint, curve_of,
                           cutoff_initial_data, exact_multipoint, path_integral_multipoint,
                           periodic_reference_check, scaled_query, schuetz_event_probability,
                           step_reference_check)
from ..tasep_sim import (ParticleConfig, empirical_multipoint, flat, heights_batch,
                         increment_statistics, max_preservation_check, narrow_wedge, periodic,
                         reference_label, sample_positions, step)
from ..walk_kernels import g0n
from .table import ResultTable

ZERO_FLOOR = 1e-10


def _seed(spec, *idx):
    return int(np.random.SeedSequence([spec.seed, *idx]).generate_state(1)[0])


def run_rows(spec, table, tasks):
    """tasks: list of (fields, fn); fn() returns a dict with at least 'status'."""
    results = [None] * len(tasks)

    def wrap(fn):
        t0 = time.perf_counter()
        try:
            out = fn()
        except KpzError as exc:
            out = {"status": f"error:{type(exc).__name__}", "message": str(exc)}
        return out, 1000 * (time.perf_counter() - t0)

    with ThreadPoolExecutor(max(1, spec.threads)) as ex:
        futs = [ex.submit(wrap, fn) for _, fn in tasks]
        for i, f in enumerate(futs):
            try:
                results[i] = f.result(timeout=spec.timeout)
            except FutureTimeout:
                results[i] = ({"status": "timeout"}, 1000 * spec.timeout)
    for (fields, _), (out, ms) in zip(tasks, results):
        row = dict(fields)
        status = out.pop("status")
        row.update(out)
        table.append(status, ms, **row)
    return table


def _new_table(spec):
    return ResultTable(spec.name, spec.digest, spec.seed)


def _check_row(table, name, ok, **values):
    table.append("ok" if ok else "fail", 0.0, check=name, **values)


def _rand_config(rng, n, max_gap=3):
    gaps = rng.integers(1, max_gap + 1, size=n)
    return ParticleConfig.of(np.cumsum(-gaps) + int(rng.integers(-3, 4)))


# ---------------------------------------------------------------------------
# scaling convergence


_GX, _GW = roots_legendre(6)


def scaled_config(data, eps, T, L=2.0):
    """microscopic TASEP data for a rescaled initial condition."""
    need = int(eps ** -1.5 * T) + 60
    if data in ("narrow-wedge", "packed"):
        return narrow_wedge(eps, 2 * need, "packed")
    if data == "narrow-wedge-blocks":
        return narrow_wedge(eps, 2 * need, "blocks")
    if data == "flat":
        m = int(L / eps)
        return flat(2 * m + need, first=-m)
    raise DomainError(f"unknown data {data}")


def limit_cdf(data, T):
    if data.startswith("narrow-wedge") or data == "packed":
        return lambda a: fp.narrow_wedge_cdf(a, t=T)
    if data == "flat":
        return lambda a: fp.one_sided_extended(fp.BarrierFunction.flat(), [(0.0, a)], T)
    raise DomainError(f"no limit law for {data}")


def _exact_cell(cfg, sp, n, z, r, tol):
    if n < cfg.first:
        return 1.0
    return exact_multipoint(ExactQuery.of(cfg, sp.t, [(n, z)]), tol=tol)


def cdf_distance(data, eps, T, a_lo, a_hi, tol=1e-9):
    """L1 distance between the CDFs of h^eps(T, 0) and its limit on [a_lo, a_hi].

    The exact law is a step function: all a in a lattice cell of width
    2 eps^{1/2} give the same event. Each cell is integrated against the
    limit CDF with 6-point Gauss-Legendre.
    """
    cfg = scaled_config(data, eps, T)
    F = limit_cdf(data, T)
    sp = ScalingParams(eps, T)
    r = cfg.inverse(-1)
    n_hi, z = sp.event(0.0, a_lo, r)
    n_lo, _ = sp.event(0.0, a_hi, r)
    h = eps ** 0.5
    total = 0.0
    for n in range(n_lo, n_hi + 1):
        mid = sp.cell_midpoint(n, z, r)
        a0, a1 = max(mid - h, a_lo), min(mid + h, a_hi)
        if a1 <= a0:
            continue
        p = _exact_cell(cfg, sp, n, z, r, tol)
        aa = 0.5 * (a1 - a0) * _GX + 0.5 * (a1 + a0)
        total += 0.5 * (a1 - a0) * float(np.sum(_GW * np.abs(p - np.array([F(a) for a in aa]))))
    return total


def interpolated_cdf(data, eps, T, a, tol=1e-9):
    """exact CDF of h^eps(T, 0) at a, linear between lattice cell midpoints."""
    cfg = scaled_config(data, eps, T)
    sp = ScalingParams(eps, T)
    r = cfg.inverse(-1)
    n, z = sp.event(0.0, a, r)
    pts = sorted((sp.cell_midpoint(m, z, r), _exact_cell(cfg, sp, m, z, r, tol))
                 for m in (n - 1, n, n + 1))
    xs, ps = zip(*pts)
    return float(np.interp(a, xs, ps))


def run_scaling_convergence(spec):
    eps_list = sorted(spec.as_list("eps", [0.2, 0.1, 0.05]), reverse=True)
    datas = spec.as_list("data", ["flat", "narrow-wedge"])
    T = float(spec.get("T", 1.0))
    a_lo, a_hi = float(spec.get("a_lo", -3.0)), float(spec.get("a_hi", 2.0))
    strict = bool(spec.get("strict", False))
    # cell probabilities only need to beat the distances being compared
    etol = float(spec.get("exact_tol", 1e-7))
    table = _new_table(spec)
    tasks = []
    for d in datas:
        for eps in eps_list:
            def fn(d=d, eps=eps):
                v = cdf_distance(d, eps, T, a_lo, a_hi, tol=etol)
                return {"status": "ok", "value": v}
            tasks.append(({"data": d, "eps": eps, "T": T, "metric": "L1 cdf distance"}, fn))
    run_rows(spec, table, tasks)
    for d in datas:
        vals = [r.get("value") for r in table.rows if r.get("data") == d and r["status"] == "ok"]
        if len(vals) != len(eps_list):
            _check_row(table, f"trend {d}", False)
            continue
        if strict:
            ok = all(b < a for a, b in zip(vals, vals[1:]))
        else:
            ok = all(b <= 1.2 * a for a, b in zip(vals, vals[1:])) and vals[-1] < vals[0]
        _check_row(table, f"trend {d}", ok, data=d, value=vals[-1], reference=vals[0])
    if spec.get("universality", False):
        _universality(spec, table, T, etol)
    return table


def _universality(spec, table, T, etol):
    """two discretizations of the narrow wedge at the two smallest eps."""
    eps_list = sorted(spec.as_list("eps", [0.2, 0.1, 0.05]))[:2]
    small, big = eps_list
    variants = ["narrow-wedge", "narrow-wedge-blocks"]
    tasks = []
    for a in spec.as_list("u_a", [-1.0, -0.5, 0.0]):
        for v in variants:
            for eps in (big, small):
                def fn(v=v, eps=eps, a=a):
                    return {"status": "ok", "value": interpolated_cdf(v, eps, T, a, etol)}
                tasks.append(({"data": v, "eps": eps, "a": a, "metric": "cdf"}, fn))
    sub = _new_table(spec)
    run_rows(spec, sub, tasks)
    for r in sub.rows:
        r["row"] = len(table.rows)
        table.rows.append(r)
    for a in spec.as_list("u_a", [-1.0, -0.5, 0.0]):
        got = {(r["data"], r["eps"]): r.get("value") for r in sub.rows
               if r.get("a") == a and r["status"] == "ok"}
        if len(got) != 4:
            _check_row(table, f"universality a={a}", False, a=a)
            continue
        e1 = abs(got[variants[0], small] - got[variants[0], big])
        e2 = abs(got[variants[1], small] - got[variants[1], big])
        diff = abs(got[variants[0], small] - got[variants[1], small])
        _check_row(table, f"universality a={a}", diff <= 2 * (e1 + e2), a=a, value=diff,
                   error=2 * (e1 + e2))


# ---------------------------------------------------------------------------
# finite propagation speed


def run_propagation_decay(spec):
    eps_list = spec.as_list("eps", [0.05, 0.025])
    Ls = sorted(spec.as_list("L", [1.0, 1.05, 1.1, 1.15, 1.2, 1.3, 1.5, 2.0]))
    T = float(spec.get("T", 1.0))
    a = float(spec.get("a", -0.3))
    table = _new_table(spec)
    refs = spec.as_list("L_ref", [3.0, 2.5])
    if len(refs) == 1:
        refs = refs * len(eps_list)
    for eps, L_ref in zip(eps_list, refs):
        L_ref = float(L_ref)
        full = flat(int(2 * (L_ref + 1) / eps + eps ** -1.5 * T + 80), first=-int((L_ref + 1) / eps))

        def prob(L):
            cfg = cutoff_initial_data(full, eps, L)
            return exact_multipoint(scaled_query(cfg, eps, T, [(0.0, a)]), tol=spec.tol)

        try:
            ref = prob(L_ref)
        except PrecisionError as exc:
            table.append("error:PrecisionError", 0.0, eps=eps, L=L_ref, message=str(exc))
            continue
        tasks = []
        for L in Ls:
            def fn(L=L):
                return {"status": "ok", "value": abs(prob(L) - ref), "reference": ref}
            tasks.append(({"eps": eps, "L": L, "L_ref": L_ref, "metric": "cutoff difference"}, fn))
        sub = _new_table(spec)
        run_rows(spec, sub, tasks)
        for r in sub.rows:
            r["row"] = len(table.rows)
            table.rows.append(r)
        vals = [r.get("value") for r in sub.rows if r["status"] == "ok"]
        if len(vals) != len(Ls):
            _check_row(table, f"decay eps={eps}", False, eps=eps)
            continue
        # several L can share one lattice cutoff; keep the first of each
        cuts = [int(np.floor(L / eps + 1e-9)) for L in Ls]
        keep = [i for i in range(len(Ls)) if i == 0 or cuts[i] != cuts[i - 1]]
        Ls_eff, vals = [Ls[i] for i in keep], [vals[i] for i in keep]
        above = [v for v in vals if v >= ZERO_FLOOR]
        k = len(above)
        dec = all(b < c for c, b in zip(above, above[1:]))
        zero = all(v < ZERO_FLOOR for v in vals[k:]) and k < len(vals)
        L_star = Ls_eff[k] if k < len(Ls_eff) else float("nan")
        _check_row(table, f"strictly decreasing eps={eps}", dec, eps=eps)
        _check_row(table, f"zero beyond light cone eps={eps}", zero, eps=eps, L=L_star,
                   value=max(vals[k:], default=float("nan")), error=ZERO_FLOOR)
    return table


# ---------------------------------------------------------------------------
# regularity


def _scaled_heights(eps, T, xs, samples, seed, threads):
    cfg = scaled_config("narrow-wedge", eps, T)
    t = eps ** -1.5 * T
    zs = sorted({int(round(2 * x / eps)) for x in xs})
    pos = sample_positions(cfg, t, samples, seed, threads=threads)
    H = heights_batch(pos, cfg.first, reference_label(cfg), zs).astype(float)
    return np.array(zs) * eps / 2, eps ** 0.5 * (H + t / 2)


def holder_norm(xs, H, beta):
    """sup_{x != y} |h(x) - h(y)| / |x - y|^beta over the grid, per sample."""
    d = np.abs(xs[:, None] - xs[None, :])
    off = d > 0
    w = np.where(off, d, 1.0) ** beta
    diff = np.abs(H[:, :, None] - H[:, None, :])
    return np.max(np.where(off[None], diff / w[None], 0.0), axis=(1, 2))


def run_regularity(spec):
    eps_list = spec.as_list("eps", [0.1, 0.05])
    T = float(spec.get("T", 1.0))
    samples = int(spec.get("samples", 4000))
    deltas = spec.as_list("delta", [0.05, 0.1, 0.15, 0.2])
    lo, hi = spec.get("coef_range", [1.8, 2.2])
    table = _new_table(spec)
    tasks = []
    for i, eps in enumerate(eps_list):
        def fn(eps=eps, i=i):
            t = eps ** -1.5 * T
            offs = sorted({max(1, int(round(2 * d / eps))) for d in deltas})
            need = int(t) + 60 + max(offs)
            cfg = step(2 * need)
            rows = increment_statistics(cfg, t, 0, offs, samples, _seed(spec, 1, i), spec.threads)
            dl = np.array([o * eps / 2 for o, _, _ in rows])
            var = np.array([eps * m for _, m, _ in rows])
            se = np.array([eps * s for _, _, s in rows])
            # var(delta) = c delta + b delta^2, weighted least squares
            A = np.stack([dl, dl ** 2], axis=1) / se[:, None]
            coef, *_ = np.linalg.lstsq(A, var / se, rcond=None)
            cov = np.linalg.inv(A.T @ A)
            return {"status": "ok", "value": float(coef[0]), "error": float(np.sqrt(cov[0, 0]))}
        tasks.append(({"eps": eps, "T": T, "metric": "diffusion coefficient"}, fn))
    run_rows(spec, table, tasks)
    coefs = [r for r in table.rows if r.get("metric") == "diffusion coefficient" and r["status"] == "ok"]
    if coefs:
        best = min(coefs, key=lambda r: r["eps"])
        _check_row(table, "coefficient range", lo <= best["value"] <= hi, eps=best["eps"],
                   value=best["value"], error=best.get("error"))
    else:
        _check_row(table, "coefficient range", False)
    # Hoelder norm tails
    betas = spec.as_list("beta", [0.3, 0.4, 0.45])
    As = spec.as_list("A", [1.0, 2.0, 4.0, 8.0, float("inf")])
    eps = min(eps_list)
    xs_req = np.linspace(-1, 1, int(spec.get("grid", 21)))
    xs, H = _scaled_heights(eps, T, xs_req, min(samples, 2000), _seed(spec, 2), spec.threads)
    sup = holder_norm(xs, H, 0.0)
    direct = np.max(H, axis=1) - np.min(H, axis=1)
    _check_row(table, "beta=0 is the oscillation", bool(np.allclose(sup, direct)),
               value=float(np.max(np.abs(sup - direct))))
    for beta in betas:
        norms = holder_norm(xs, H, beta)
        tails = [float(np.mean(norms > A)) for A in As]
        for A, p in zip(As, tails):
            table.append("ok", 0.0, metric="holder tail", beta=beta, A=A, value=p,
                         error=float(np.sqrt(p * (1 - p) / len(norms))))
        ok = all(b <= c for c, b in zip(tails, tails[1:])) and tails[-1] == 0.0
        _check_row(table, f"tail decreasing beta={beta}", ok, beta=beta)
    return table


def run_propagation_regularity(spec):
    t1 = run_propagation_decay(spec)
    t2 = run_regularity(spec)
    for r in t2.rows:
        r["row"] = len(t1.rows)
        t1.rows.append(r)
    return t1


# ---------------------------------------------------------------------------
# acceptance criteria 1-11


def run_biorthogonality(spec):
    cases = int(spec.get("cases", 30))
    nmax = int(spec.get("nmax", 8))
    dps = int(spec.get("dps", 30))
    thr = float(spec.get("threshold", 1e-10))
    rng = np.random.default_rng(spec.seed)
    table = _new_table(spec)
    tasks = []
    for i in range(cases):
        n = int(rng.integers(1, nmax + 1))
        cfg = _rand_config(rng, n)
        t = float(rng.uniform(0.2, 3.0))

        def fn(n=n, cfg=cfg, t=t):
            M = biorthogonality_matrix(n, t, curve_of(cfg), dps=dps)
            dev = float(np.abs(M - np.eye(n)).max())
            return {"status": "ok" if dev < thr else "fail", "value": dev}
        tasks.append(({"n": n, "t": t, "X0": " ".join(map(str, cfg.positions))}, fn))
    return run_rows(spec, _new_table(spec), tasks)


def run_bvp_hitting(spec):
    cases = int(spec.get("cases", 50))
    thr = float(spec.get("threshold", 1e-9))
    rng = np.random.default_rng(spec.seed)
    tasks = []
    for i in range(cases):
        n = int(rng.integers(1, 9))
        cfg = _rand_config(rng, 8)
        X0 = curve_of(cfg)
        z1 = int(rng.integers(X0.ints(1) - 3, X0.ints(1) + 6))
        z2 = int(rng.integers(X0.ints(n) - 4, X0.ints(1) + 4))

        def fn(n=n, X0=X0, z1=z1, z2=z2):
            a = g0n(X0, n, z1, z2, "hitting")
            b = g0n(X0, n, z1, z2, "bvp")
            dev = abs(a - b)
            return {"status": "ok" if dev < thr else "fail", "value": a, "reference": b,
                    "error": dev}
        tasks.append(({"n": n, "z1": z1, "z2": z2, "X0": " ".join(map(str, cfg.positions))}, fn))
    return run_rows(spec, _new_table(spec), tasks)


def run_route_triangle(spec):
    cases = int(spec.get("cases", 20))
    thr = float(spec.get("threshold", 1e-8))
    rng = np.random.default_rng(spec.seed)
    tasks = []
    for i in range(cases):
        cfg = _rand_config(rng, 8)
        M = int(rng.integers(1, 4))
        ns = sorted(int(v) for v in rng.choice(np.arange(1, 7), size=M, replace=False))
        cons = [(n, int(cfg.X(n) + rng.integers(0, 5))) for n in ns]
        q = ExactQuery.of(cfg, float(rng.uniform(0.3, 2.5)), cons)

        def fn(q=q):
            a, b, c = exact_multipoint(q), bfps_multipoint(q), path_integral_multipoint(q)
            dev = max(abs(a - b), abs(a - c), abs(b - c))
            return {"status": "ok" if dev < thr else "fail", "value": a, "bfps": b,
                    "path_integral": c, "error": dev}
        tasks.append(({"query": q.digest(), "t": q.t, "constraints": str(list(q.constraints))}, fn))
    return run_rows(spec, _new_table(spec), tasks)


MC_QUERIES = [
    ("step", 1.0, [(1, 0)]), ("step", 2.0, [(2, -1), (3, -2)]), ("step", 1.5, [(1, 1), (3, -2)]),
    ("periodic", 1.0, [(1, 5)]), ("periodic", 2.0, [(2, 3), (4, 0)]),
    ("periodic2", 1.5, [(1, 3), (2, 1), (3, -1)]),
    ("4 1 0 -3 -5", 2.0, [(2, 2), (4, -2)]), ("2 0 -1 -4", 0.7, [(1, 3)]),
    ("0 -2 -4 -6 -8", 2.0, [(3, -3), (5, -6)]), ("5 3 2 1 -4", 1.2, [(3, 3), (4, 2), (5, -3)]),
]


def _named_config(name):
    if name == "step":
        return step(10)
    if name == "periodic":
        return periodic(3)
    if name == "periodic2":
        return periodic(2)
    return ParticleConfig.of([int(v) for v in name.split()])


def run_monte_carlo(spec):
    samples = int(spec.get("samples", 100000))
    nsig = float(spec.get("sigmas", 3.0))
    tasks = []
    for i, (name, t, cons) in enumerate(MC_QUERIES):
        def fn(name=name, t=t, cons=cons, i=i):
            cfg = _named_config(name)
            p = exact_multipoint(ExactQuery.of(cfg, t, cons), tol=spec.tol)
            e, _ = empirical_multipoint(cfg, t, cons, samples, _seed(spec, i), threads=1)
            sig = np.sqrt(max(p * (1 - p), 1e-300) / samples)
            z = (e - p) / sig
            return {"status": "ok" if abs(z) <= nsig else "fail", "value": e, "reference": p,
                    "error": sig, "z": float(z)}
        tasks.append(({"data": name, "t": t, "constraints": str(cons)}, fn))
    for k in range(1, 6):
        def fn(k=k):
            p = exact_multipoint(ExactQuery.of(ParticleConfig.of([0]), 1.3, [(1, k)]), tol=spec.tol)
            ref = float(poisson.sf(k - 1, 1.3))
            return {"status": "ok" if abs(p - ref) < 1e-8 else "fail", "value": p,
                    "reference": ref, "error": abs(p - ref)}
        tasks.append(({"data": "lone particle", "t": 1.3, "constraints": str([(1, k)])}, fn))
    return run_rows(spec, _new_table(spec), tasks)


def run_schuetz(spec):
    thr = float(spec.get("threshold", 1e-8))
    reach = int(spec.get("reach", 30))
    tasks = []
    for t in spec.as_list("t", [0.5, 1.0, 2.0]):
        for cons in ([(1, 0)], [(2, -1)], [(1, 1), (2, -1)], [(1, 2), (2, 0)], [(2, 1)]):
            def fn(t=t, cons=cons):
                a = exact_multipoint(ExactQuery.of(ParticleConfig.of([-1, -2]), t, cons))
                b = schuetz_event_probability([-1, -2], t, cons, reach=reach)
                return {"status": "ok" if abs(a - b) < thr else "fail", "value": a,
                        "reference": b, "error": abs(a - b)}
            tasks.append(({"t": t, "constraints": str(cons)}, fn))
    return run_rows(spec, _new_table(spec), tasks)


def run_literature_kernels(spec):
    thr = float(spec.get("threshold", 1e-7))
    z = np.arange(-5, 6)
    tasks = []
    for ni, nj, t in [(3, 5, 1.3), (2, 2, 0.7), (4, 2, 2.0), (1, 6, 12.0)]:
        def fn(ni=ni, nj=nj, t=t):
            o, r, im = step_reference_check(ni, nj, t, z, z)
            dev = float(np.abs(o - r).max())
            return {"status": "ok" if dev < thr else "fail", "value": dev,
                    "error": float(np.abs(im).max())}
        tasks.append(({"data": "step", "n_i": ni, "n_j": nj, "t": t}, fn))
    for N, n, t in [(4, 3, 1.5), (2, 2, 1.0), (4, 4, 2.0), (5, 3, 0.7)]:
        def fn(N=N, n=n, t=t):
            d = periodic_reference_check(N, n, t, z, z)
            dev = max(d["hitting_law"], d["stray_landing"], d["sn_epi"], d["kernel"])
            return {"status": "ok" if dev < thr else "fail", "value": dev,
                    "error": d["kernel_size"]}
        tasks.append(({"data": "periodic", "N": N, "n": n, "t": t}, fn))
    return run_rows(spec, _new_table(spec), tasks)


def run_narrow_wedge_airy(spec):
    table = _new_table(spec)
    u = np.linspace(-4, 4, int(spec.get("grid", 41)))
    t0 = time.perf_counter()
    B = fp.wedge_block(2.0, 0.0, 0.0, 0.0, 0.0, u, u)
    dev = float(np.abs(B - fp.airy_kernel(u[:, None], u[None, :])).max())
    table.append("ok" if dev < 1e-8 else "fail", 1000 * (time.perf_counter() - t0),
                 check="kernel sup-norm on [-4,4]^2", value=dev, error=1e-8)
    tasks = []
    for a in spec.as_list("a", [-3.0, -2.0, -1.0, 0.0, 1.0]):
        def fn(a=a):
            K = fp.extended_kernel(fp.BarrierFunction.narrow_wedge(), [(0.0, a)], 2.0)
            v, err = det_nystrom(K, m=24, tol=1e-6, L=4.0, max_m=384, return_error=True)
            ref = fp.airy2_cdf(a)
            ok = err <= 1e-6 and abs(v - ref) < 1e-6
            return {"status": "ok" if ok else "fail", "value": v, "reference": ref, "error": err}
        tasks.append(({"a": a, "check": "cdf self-convergence"}, fn))
    return run_rows(spec, table, tasks)


def run_flat_airy1(spec):
    thr = float(spec.get("threshold", 1e-5))
    tasks = []
    for a in spec.as_list("a", [-1.5, -1.0, -0.5, 0.0, 0.5]):
        def fn(a=a):
            v = fp.one_sided_extended(fp.BarrierFunction.flat(), [(0.0, a)], 2.0, method="quad")
            ref = fp.airy1_cdf(a)
            goe = fp.goe_cdf(2 ** (2 / 3) * a)
            dev = max(abs(v - ref), abs(v - goe))
            return {"status": "ok" if dev < thr else "fail", "value": v, "reference": ref,
                    "goe": goe, "error": dev}
        tasks.append(({"a": a}, fn))
    return run_rows(spec, _new_table(spec), tasks)


def run_airy21(spec):
    thr = float(spec.get("threshold", 1e-3))
    X = float(spec.get("x", 4.0))
    tasks = []
    for s in spec.as_list("s", [-2.0, -1.0, 0.0, 1.0]):
        def fn(s=s):
            # flat side: h(2, X) -> Airy1
            v = fp.airy21_cdf(X, s)
            ref = fp.airy1_cdf(s)
            return {"status": "ok" if abs(v - ref) < thr else "fail", "value": v,
                    "reference": ref, "error": abs(v - ref)}
        tasks.append(({"x": X, "s": s, "limit": "Airy1"}, fn))

        def fn2(s=s):
            # wedge side: h(2, -X) + X^2 -> Airy2
            v = fp.airy21_cdf(-X, s - X * X)
            ref = fp.airy2_cdf(s)
            return {"status": "ok" if abs(v - ref) < thr else "fail", "value": v,
                    "reference": ref, "error": abs(v - ref)}
        tasks.append(({"x": -X, "s": s, "limit": "Airy2"}, fn2))
    table = run_rows(spec, _new_table(spec), tasks)
    u = np.linspace(-3, 3, 7)
    K = fp.airy21_kernel(0.7, u, u)
    _check_row(table, "kernel is real and finite", bool(np.all(np.isfinite(K))) and K.dtype.kind == "f")
    return table


def run_symmetries(spec):
    thr = float(spec.get("threshold", 1e-5))
    table = _new_table(spec)
    t0 = time.perf_counter()
    rep = fp.symmetry_suite(t=float(spec.get("t", 2.0)))
    ms = 1000 * (time.perf_counter() - t0)
    for name, (l, r, d) in rep.items():
        table.append("ok" if d < thr else "fail", ms / len(rep), check=name, value=l,
                     reference=r, error=d)
    # max preservation on coupled TASEP heights
    samples = int(spec.get("samples", 10000))
    W = int(spec.get("window", 41))
    rng = np.random.default_rng(spec.seed)
    f1 = np.concatenate([[0], np.cumsum(rng.choice([-1, 1], size=W - 1))])
    # equal parity keeps f1 v f2 a +-1 path
    f2 = np.concatenate([[2], 2 + np.cumsum(rng.choice([-1, 1], size=W - 1))])
    t0 = time.perf_counter()
    bad = max_preservation_check(f1, f2, float(spec.get("tasep_t", 2.0)), samples, _seed(spec, 9))
    table.append("ok" if bad == 0 else "fail", 1000 * (time.perf_counter() - t0),
                 check="max preservation (coupled TASEP)", value=bad, error=0)
    return table


def run_tails(spec):
    table = _new_table(spec)
    for side, target, width in (("right", 1.5, 0.15), ("left", 3.0, 0.3)):
        t0 = time.perf_counter()
        beta, se, plain = fp.tail_fit(side)
        ok = abs(beta - target) <= width
        table.append("ok" if ok else "fail", 1000 * (time.perf_counter() - t0), side=side,
                     value=beta, error=se, reference=target, plain_slope=plain)
    return table


def run_fixed_point_cdf(spec):
    """one-point CDF table (a, value, error) for a chosen initial condition."""
    data = spec.get("data", "narrow-wedge")
    t = float(spec.get("t", 2.0))
    x = float(spec.get("x", 0.0))
    h0 = parse_barrier(data)
    lo, hi = float(spec.get("a_lo", -4.0)), float(spec.get("a_hi", 2.0))
    tasks = []
    for a in np.linspace(lo, hi, int(spec.get("n", 13))):
        def fn(a=float(a)):
            K = fp.extended_kernel(h0, [(x, a)], t)
            v, err = det_nystrom(K, m=24, tol=spec.tol, L=4.0, max_m=384, return_error=True)
            return {"status": "ok", "value": v, "error": err}
        tasks.append(({"data": data, "t": t, "x": x, "a": float(a)}, fn))
    return run_rows(spec, _new_table(spec), tasks)


def parse_barrier(text):
    """narrow-wedge | flat | half-flat | wedges:y1/c1;y2/c2 | flat:c."""
    text = str(text).strip()
    if text == "narrow-wedge":
        return fp.BarrierFunction.narrow_wedge()
    if text == "flat":
        return fp.BarrierFunction.flat()
    if text.startswith("flat:"):
        return fp.BarrierFunction.flat(float(text[5:]))
    if text == "half-flat":
        return fp.BarrierFunction.half_flat()
    if text.startswith("wedges:"):
        pts = [tuple(float(v) for v in p.split("/")) for p in text[7:].split(";") if p]
        return fp.BarrierFunction.wedges(pts)
    raise DomainError(f"cannot parse initial data {text!r}")


OPS = {
    "scaling_convergence": run_scaling_convergence,
    "propagation_decay": run_propagation_decay,
    "regularity": run_regularity,
    "propagation_regularity": run_propagation_regularity,
    "biorthogonality": run_biorthogonality,
    "bvp_hitting": run_bvp_hitting,
    "route_triangle": run_route_triangle,
    "monte_carlo": run_monte_carlo,
    "schuetz": run_schuetz,
    "literature_kernels": run_literature_kernels,
    "narrow_wedge_airy": run_narrow_wedge_airy,
    "flat_airy1": run_flat_airy1,
    "airy21": run_airy21,
    "symmetries": run_symmetries,
    "tails": run_tails,
    "fixed_point_cdf": run_fixed_point_cdf,
}

# plot layout per op: (x column, y column, series column, log-x, log-y)
PLOTS = {
    "scaling_convergence": ("eps", "value", "data", True, True),
    "propagation_decay": ("L", "value", "eps", False, True),
    "propagation_regularity": ("L", "value", "eps", False, True),
    "regularity": ("A", "value", "beta", False, False),
    "fixed_point_cdf": ("a", "value", "data", False, False),
    "airy21": ("s", "value", "limit", False, False),
    "flat_airy1": ("a", "value", None, False, False),
    "narrow_wedge_airy": ("a", "value", None, False, False),
}

# everything else: value per row
DEFAULT_PLOT = ("row", "value", None, False, False)


def run_spec(spec):
    if spec.op not in OPS:
        raise DomainError(f"unknown op {spec.op}; known: {', '.join(sorted(OPS))}")
    return OPS[spec.op](spec)
