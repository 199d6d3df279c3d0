"""Exact finite-time distributions of TASEP with right-finite initial data.

P(X_t(n_j) >= a_j, j = 1..M) = det(I - chi K_t chi) where chi keeps the sites
x < a_j on level n_j and

    K_t(n_i, x; n_j, y) = -Q^{n_j - n_i}(x, y) 1{n_i < n_j}
        + sum_{w > X0(1)}  sm(t, n_i; w, x) sn(t, n_j; w, y)
        + sum_{w <= X0(1)} sm(t, n_i; w, x) sn_epi(t, n_j; w, y).

Level n_j only carries points at or above X0(n_j) (particles never move
left), so the windows [X0(n_j), a_j - 1] are exact and finite.
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .biorthogonal import bfps_kernel
from .errors import DomainError, PrecisionError
from .fredholm import DiscreteKernel, det_discrete
from .tasep_sim import ParticleConfig
from .walk_kernels import (BoundaryCurve, q_power, s_epi_matrix, sm_matrix, sn_matrix,
                           trapezoid_coefficient)


@dataclass(frozen=True)
class ExactQuery:
    X0: ParticleConfig
    t: float
    constraints: tuple  # ((n, a), ...)

    @classmethod
    def of(cls, X0, t, constraints):
        cons = tuple(sorted((int(n), float(a) if not np.isfinite(a) else int(a))
                            for n, a in constraints))
        ns = [n for n, _ in cons]
        if len(set(ns)) != len(ns):
            raise DomainError("labels in a query must be distinct")
        if not t > 0:
            raise DomainError("t must be positive")
        return cls(X0, float(t), cons)

    def digest(self):
        blob = json.dumps([list(self.X0.positions), self.X0.first, self.X0.truncated,
                           self.t, [list(map(str, c)) for c in self.constraints]])
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class ScalingParams:
    """1:2:3 scaling. t = eps^{-3/2} T; a point (x, a) becomes the exact
    event {X_t(n) >= z} for {h^eps(T, x) <= a}, with z = round(2x/eps) and
    n = ceil((-H - z)/2 + r) - 1, H = eps^{-1/2} a - t/2."""

    eps: float
    T: float
    points: tuple = field(default=())

    @property
    def t(self):
        return self.eps ** -1.5 * self.T

    def event(self, x, a, r=1):
        z = int(round(2 * x / self.eps))
        H = self.eps ** -0.5 * a - self.t / 2
        n = int(np.ceil((-H - z) / 2 + r - 1e-12)) - 1
        return n, z

    def cell_midpoint(self, n, z, r=1):
        """rescaled height at the middle of the lattice cell {H : event(H) = n}.

        Heights move in steps of 2, so every a in a cell of width 2 eps^{1/2}
        gives the same exact event; the continuum law is compared at the middle.
        """
        H = -z + 2 * r - 2 * n - 1
        return self.eps ** 0.5 * (H + self.t / 2)

    def asymptotic_label(self, x, a):
        """the label used in the asymptotic statement (differs by O(1))."""
        return self.t / 4 - x / self.eps - 0.5 * a / np.sqrt(self.eps) + 1


def height_event(z, H, r=1):
    """{h_t(z) <= H} = {X_t(n) >= z}; returns n (n <= 0 means certain)."""
    return int(np.ceil((-H - z) / 2 + r - 1e-12)) - 1


# ---------------------------------------------------------------------------
# shifting and cutoffs


def shift_normalize(q):
    """relabel so that the first finite particle has label 1."""
    if q.X0.n == 0:
        raise DomainError("no finite particle")
    l = q.X0.first - 1
    cons = tuple((n - l, a) for n, a in q.constraints)
    return ExactQuery(q.X0.shifted_labels(l), q.t, cons)


def shift_query(q, l):
    """apply theta_l to both the data and the labels."""
    cons = tuple((n - l, a) for n, a in q.constraints)
    return ExactQuery(q.X0.shifted_labels(l), q.t, cons)


def cutoff_initial_data(X0, eps, L):
    """keep labels n > -floor(L/eps); labels at or below move to +inf."""
    if L < 1:
        raise DomainError("L must be >= 1")
    # guard against L/eps landing just below an integer, e.g. 1.15/0.05
    cut = -int(np.floor(L / eps + 1e-9))
    keep = [k for k in range(X0.first, X0.last + 1) if k > cut]
    if not keep:
        raise DomainError("cutoff removes every particle")
    pos = [X0.positions[k - X0.first] for k in keep]
    return ParticleConfig.of(pos, keep[0], X0.truncated)


def curve_of(config):
    beyond = np.nan if config.truncated else -np.inf
    return BoundaryCurve.of(config.positions, beyond)


# ---------------------------------------------------------------------------
# kernels


class KernelBuilder:
    """evaluates blocks of the extended kernel, caching hitting sums."""

    def __init__(self, t, X0):
        self.t = float(t)
        self.X0 = X0
        self._epi = {}
        # sum |sm||sn| bounds the cancellation in the w-sums; with many
        # particles ahead of the query level it grows like 2^n
        self.scale = 0.0

    def epi(self, n, ys):
        key = (n, int(ys[0]), len(ys))
        if key not in self._epi:
            lo = self.X0.ints(n) + 1
            hi = self.X0.ints(1)
            ws = np.arange(lo, hi + 1)
            E = s_epi_matrix(self.t, n, self.X0, ws, ys) if len(ws) else np.zeros((0, len(ys)))
            self._epi[key] = (ws, E)
        return self._epi[key]

    def core(self, ni, xs, nj, ys):
        """sum_w sm(t, ni; w, x) [chi sn + chibar sn_epi](w, y), no -Q term."""
        t, X0 = self.t, self.X0
        xs = np.asarray(xs, dtype=np.int64)
        ys = np.asarray(ys, dtype=np.int64)
        c1 = X0.ints(1)
        out = np.zeros((len(xs), len(ys)))
        if len(xs) == 0 or len(ys) == 0:
            return out
        ws = np.arange(c1 + 1, int(xs.max()) + ni + 1)
        if len(ws):
            A, B = sm_matrix(t, ni, ws, xs), sn_matrix(t, nj, ws, ys)
            out += A.T @ B
            self.scale = max(self.scale, float((np.abs(A).T @ np.abs(B)).max()))
        wb, E = self.epi(nj, ys)
        if len(wb):
            C = sm_matrix(t, ni, wb, xs)
            out += C.T @ E
            self.scale = max(self.scale, float((np.abs(C).T @ np.abs(E)).max()))
        return out

    @property
    def roundoff(self):
        return 4 * np.finfo(float).eps * self.scale

    def block(self, ni, xs, nj, ys):
        B = self.core(ni, xs, nj, ys)
        if ni < nj:
            B -= q_power(nj - ni, np.asarray(xs)[:, None], np.asarray(ys)[None, :])
        return B


def _prepare(q):
    """normalize, drop vacuous constraints; returns (query, X0 curve) or a float."""
    q = shift_normalize(q)
    cfg = q.X0
    cons = []
    for n, a in q.constraints:
        if a == -np.inf or n <= 0:
            continue
        if a == np.inf:
            if n > cfg.last and not cfg.truncated:
                return 0.0, None
            return 0.0, None
        if n > cfg.last:
            if cfg.truncated:
                raise DomainError(f"label {n} beyond the truncated data")
            return 0.0, None
        if a <= cfg.X(n):
            continue
        cons.append((n, int(a)))
    if not cons:
        return 1.0, None
    return ExactQuery(cfg, q.t, tuple(cons)), curve_of(cfg)


def windows_for(q, X0, pad=0):
    return [np.arange(X0.ints(n) - pad, a) for n, a in q.constraints]


def extended_kernel(q, pad=0, tol=None):
    """DiscreteKernel of the extended kernel on the exact windows.

    With tol set, a PrecisionError is raised when the entrywise roundoff
    bound times the matrix size exceeds tol.
    """
    prep, X0 = _prepare(q)
    if X0 is None:
        return None, prep
    levels = [n for n, _ in prep.constraints]
    wins = windows_for(prep, X0, pad)
    kb = KernelBuilder(prep.t, X0)
    blocks = [[kb.block(ni, wi, nj, wj) for nj, wj in zip(levels, wins)]
              for ni, wi in zip(levels, wins)]
    index = [(n, int(x)) for n, w in zip(levels, wins) for x in w]
    if tol is not None and kb.roundoff * len(index) > tol:
        raise PrecisionError("cancellation in the kernel sums exceeds the tolerance",
                             achieved=kb.roundoff * len(index))
    return DiscreteKernel(index, np.block(blocks)), None


def _clip(p, tol):
    if p < -tol or p > 1 + tol:
        raise PrecisionError("determinant left [0, 1]", achieved=abs(p), value=p)
    return p


def exact_multipoint(q, tol=1e-8, pad=0):
    """P(X_t(n_j) >= a_j for all j) from the hitting-form extended kernel."""
    K, val = extended_kernel(q, pad, tol)
    if K is None:
        return val
    return _clip(det_discrete(K), tol)


def bfps_multipoint(q, tol=1e-8):
    """the same probability through the biorthogonal (Psi, Phi) kernel."""
    prep, X0 = _prepare(q)
    if X0 is None:
        return prep
    levels = [n for n, _ in prep.constraints]
    K = bfps_kernel(prep.t, levels, X0, windows_for(prep, X0))
    return _clip(det_discrete(K), tol)


def path_integral_multipoint(q, tol=1e-8):
    """single-level form det(I - K^{(n_M)} (I - Q^{n_1-n_M} P_{a_1} Q^{n_2-n_1} ... P_{a_M})).

    P_a keeps sites >= a. The operator V = I - (product) vanishes on rows at
    or above A = max a_j, and K^{(n_M)} vanishes on rows at or below
    X0(n_M) - n_M, so det(I - K V) = det(I - V K) reduces exactly to a
    finite window.
    """
    prep, X0 = _prepare(q)
    if X0 is None:
        return prep
    levels = [n for n, _ in prep.constraints]
    cuts = [a for _, a in prep.constraints]
    nM = levels[-1]
    A = max(cuts)
    L = X0.ints(nM) - nM
    lo = min(L + 1, min(cuts) - (nM - levels[0]))
    hi = A - 1 + (nM - levels[0])
    sites = np.arange(lo, hi + 1)
    # W = Q^{n_1 - n_M} P_{a_1} Q^{n_2 - n_1} ... P_{a_M} on the index range
    W = q_power(levels[0] - nM, sites[:, None], sites[None, :])
    W = W * (sites >= cuts[0])[None, :]
    for k in range(1, len(levels)):
        step = q_power(levels[k] - levels[k - 1], sites[:, None], sites[None, :])
        W = (W @ step) * (sites >= cuts[k])[None, :]
    V = np.eye(len(sites)) - W
    rows = sites < A
    kb = KernelBuilder(prep.t, X0)
    Kn = kb.block(nM, sites, nM, sites)
    # V K restricted to rows < A and columns < A
    M = V[np.ix_(rows, np.ones(len(sites), bool))] @ Kn
    M = M[:, rows]
    return _clip(det_discrete(M), tol)


def multilevel_block(q, ni, xs, nj, ys):
    """K(n_i, n_j) from the single-level kernel: -Q^{n_j-n_i} 1{n_i<n_j} + Q^{n_j-n_i} K^{(n_j)}."""
    prep = shift_normalize(q)
    X0 = curve_of(prep.X0)
    kb = KernelBuilder(prep.t, X0)
    xs = np.asarray(xs, dtype=np.int64)
    m = nj - ni
    if m >= 0:
        lo = X0.ints(nj) - nj + 1
        mid = np.arange(min(lo, int(xs.min()) - m), int(xs.max()) - m + 1)
    else:
        mid = np.arange(int(xs.min()), int(xs.max()) - m + 1)
    out = q_power(m, xs[:, None], mid[None, :]) @ kb.core(nj, mid, nj, ys)
    if ni < nj:
        out -= q_power(m, xs[:, None], np.asarray(ys)[None, :])
    return out


# ---------------------------------------------------------------------------
# Schuetz oracle


def schuetz_F(n, x, t):
    """F_n(x, t) by finite sums (n <= 0) or an absolutely convergent series (n > 0)."""
    n, x = int(n), int(x)
    if n <= 0:
        k = -n
        acc = 0.0
        for j in range(k + 1):
            e = x - n - j
            if e >= 0:
                acc += (-1) ** j * np.exp(gammaln(k + 1) - gammaln(j + 1) - gammaln(k - j + 1)
                                          + e * np.log(t) - gammaln(e + 1) - t) if t > 0 else \
                    (-1) ** j * (e == 0) * np.exp(gammaln(k + 1) - gammaln(j + 1) - gammaln(k - j + 1))
        return (-1) ** n * acc
    acc = 0.0
    m0 = max(x, 0)
    for m in range(m0, m0 + 4000):
        lt = (gammaln(n + m - x) - gammaln(m - x + 1) - gammaln(n)
              + (m * np.log(t) if t > 0 else (0.0 if m == 0 else -np.inf)) - gammaln(m + 1) - t)
        term = np.exp(lt)
        acc += term
        if m > t + n + 5 and term < 1e-18 * max(acc, 1e-300):
            return acc
    raise PrecisionError("Schuetz series did not converge")


def schuetz_F_contour(n, x, t, r=2.0, nodes=512):
    """F_n(x, t) by the trapezoid rule on |w| = r enclosing 0 and 1."""
    th = 2 * np.pi * np.arange(nodes) / nodes
    w = r * np.exp(1j * th)
    f = (1 - w) ** (-n) * w ** (-(x - n)) * np.exp(t * (w - 1))
    return float(np.real((-1) ** n * f.mean()))


def schuetz_oracle(X0, t, targets):
    """P(X_t(1) = x_1, ..., X_t(N) = x_N) for N particles started at X0."""
    X0 = [int(v) for v in X0]
    x = [int(v) for v in targets]
    N = len(X0)
    if len(x) != N:
        raise DomainError("need one target per particle")
    if any(b >= a for a, b in zip(x, x[1:])):
        raise DomainError("targets must be strictly decreasing")
    M = np.empty((N, N))
    for i in range(1, N + 1):
        for j in range(1, N + 1):
            M[i - 1, j - 1] = schuetz_F(i - j, x[N - i] - X0[N - j], t)
    return float(np.linalg.det(M))


def schuetz_event_probability(X0, t, constraints, reach=60):
    """P(X_t(n_j) >= a_j) by summing the Schuetz formula over configurations.

    Positions run from X0(k) to X0(1) + reach; the mass beyond that is
    below the Poisson tail at `reach`.
    """
    X0 = [int(v) for v in X0]
    N = len(X0)
    top = X0[0] + reach
    cons = dict(constraints)
    total = 0.0

    def rec(k, upper, acc):
        nonlocal total
        if k > N:
            total += schuetz_oracle(X0, t, acc)
            return
        lo = X0[k - 1]
        for x in range(lo, upper + 1):
            if k in cons and x < cons[k]:
                continue
            rec(k + 1, x - 1, acc + [x])

    rec(1, top, [])
    return total


# ---------------------------------------------------------------------------
# literature reference kernels


def _circle(r, m):
    th = 2 * np.pi * np.arange(m) / m
    return r * np.exp(1j * th)


def step_reference_check(ni, nj, t, z1s, z2s, nodes=128, radius=0.4):
    """our chi-term for step data against the double-contour step formula.

    Returns (ours, reference, imag_part_max). The reference is evaluated by
    a 2-D trapezoid rule on |w| = |v| = radius, radius < 1/2 so that the
    factor 1/(1 - v - w) is analytic inside.
    """
    z1s = np.asarray(z1s)
    z2s = np.asarray(z2s)
    X0 = BoundaryCurve.of(-np.arange(1, max(ni, nj) + 40))
    kb = KernelBuilder(t, X0)
    ours = kb.core(ni, z1s, nj, z2s)
    ref = np.zeros_like(ours)
    imag = 0.0
    w = _circle(radius, nodes)[:, None]
    v = _circle(radius, nodes)[None, :]
    base = np.exp(t * (w + v - 1)) / (1 - v - w)
    for a, z1 in enumerate(z1s):
        for b, z2 in enumerate(z2s):
            f = ((1 - w) ** ni * (1 - v) ** (nj + z2) / (w ** (ni + z1 + 1) * v ** nj)
                 * base * 2.0 ** (z2 - z1))
            # the trapezoid sum of f dw dv/(2 pi i)^2 is the mean of f w v
            val = np.mean(f * w * v)
            ref[a, b] = val.real
            imag = max(imag, abs(val.imag))
    return ours, ref, imag


def periodic_landing(N, k):
    """B_tau for the periodic curve: B_tau lies in (X0(k+1), X0(k) - 1]."""
    return 2 * (N - k) - 1


def periodic_hitting_law(N, z1, kmax, nodes=512, radius=0.2):
    """P(tau = k) for the periodic curve by contour integration.

    With s = 4u(1 - u), E[s^tau] = (2u)^{2N-1-z1}; the coefficient of s^k
    is extracted on a small circle in the u plane.
    """
    u = _circle(radius, nodes)
    a = 2 * N - 1 - z1
    s = 4 * u * (1 - u)
    out = []
    for k in range(kmax):
        f = 4 * (1 - 2 * u) * s ** (-k - 1) * (2 * u) ** a * u
        out.append(float(np.real(f.mean())))
    return np.array(out)


def periodic_sepi_contour(N, n, t, z1, z2, nodes=128, rw=0.5, ru=0.3):
    """sn_epi for periodic data as a double contour integral in (w, u).

    Summing the hitting law against sn over tau gives

        2^{z2-z1} oint dw oint du e^{t(w-1/2)} w^{-n} (1-w)^{n-2N+z2}
            u^{2N-1-z1} (1-2u) sum_{k<n} (w(1-w))^k / (u(1-u))^{k+1}

    with both circles around 0 and inside the unit disc.
    """
    w = _circle(rw, nodes)[:, None]
    u = _circle(ru, nodes)[None, :]
    r = w * (1 - w) / (u * (1 - u))
    geo = sum(r ** k for k in range(n)) / (u * (1 - u))
    f = (2.0 ** (z2 - z1) * np.exp(t * (w - 0.5)) * w ** (-n) * (1 - w) ** (n - 2 * N + z2)
         * u ** (2 * N - 1 - z1) * (1 - 2 * u) * geo)
    return float(np.real(np.mean(f * w * u)))


def periodic_reference_check(N, n, t, z1s, z2s):
    """compare the kernel for periodic data with contour-integral routes.

    Returns the max deviations of
      * the hitting law against its contour generating function,
      * any landing site other than 2(N - k) - 1,
      * sn_epi against the double contour,
      * K^{(n)} against the kernel rebuilt from contour pieces: sm and sn
        by the fixed-circle trapezoid rule, sn_epi by the double contour,
    plus the size of the kernel itself.
    """
    if not 1 <= n <= N:
        raise DomainError("need 1 <= n <= N")
    cfg = ParticleConfig.of(2 * (N - np.arange(1, 2 * N + 1)))
    X0 = curve_of(cfg)
    c1 = X0.ints(1)
    from .walk_kernels import hitting_mass
    starts = np.arange(X0.ints(n) + 1, c1 + 1)
    ys, mass, _ = hitting_mass(X0, starts, n)
    dev_law = 0.0
    stray = 0.0
    for s, z in enumerate(starts):
        law = periodic_hitting_law(N, int(z), n)
        dev_law = max(dev_law, float(np.abs(law - mass[s].sum(axis=1)).max()))
        for k in range(n):
            off = ys != periodic_landing(N, k)
            stray = max(stray, float(np.abs(mass[s, k, off]).max(initial=0.0)))
    z1s = np.asarray(z1s)
    z2s = np.asarray(z2s)
    E = s_epi_matrix(t, n, X0, starts, z2s)
    E_ref = np.array([[periodic_sepi_contour(N, n, t, int(z), int(z2)) for z2 in z2s]
                      for z in starts])
    kb = KernelBuilder(t, X0)
    K = kb.core(n, z1s, n, z2s)
    ws = np.arange(c1 + 1, int(z1s.max()) + n + 1)
    D = z1s[None, :] - ws[:, None]
    A = trapezoid_coefficient(n, n + D, t) * 2.0 ** (-D.astype(float))
    Dp = ws[:, None] - z2s[None, :]
    Sn = trapezoid_coefficient(n - 1 - Dp, n - 1, t) * 2.0 ** (-Dp.astype(float))
    Db = z1s[None, :] - starts[:, None]
    Ab = trapezoid_coefficient(n, n + Db, t) * 2.0 ** (-Db.astype(float))
    K_ref = A.T @ Sn + Ab.T @ E_ref
    return {"hitting_law": dev_law, "stray_landing": stray,
            "sn_epi": float(np.abs(E - E_ref).max()),
            "kernel": float(np.abs(K - K_ref).max()),
            "kernel_size": float(np.abs(K).max())}


# ---------------------------------------------------------------------------
# two-sided data


def scaled_query(config, eps, T, points, r=None):
    """exact query for P(h^eps(T, x_i) <= a_i) from (possibly cut off) data."""
    sp = ScalingParams(eps, T, tuple(points))
    r = config.inverse(-1) if r is None else r
    cons = []
    for x, a in points:
        n, z = sp.event(x, a, r)
        if n >= config.first:
            cons.append((n, z))
    return ExactQuery.of(config, sp.t, cons)
