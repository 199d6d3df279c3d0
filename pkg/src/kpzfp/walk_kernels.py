"""Lattice kernels for TASEP with geometric-jump walks.

Conventions. Q is the transition matrix of a walk that jumps strictly left
by a Geom[1/2] amount, Q(x, y) = 2^{-(x-y)} 1{x > y}. R is the Poisson
smoothing kernel R(x, y) = e^{-t} (t/2)^{x-y} / (x-y)! 1{x >= y}. All kernels
here are functions of the difference of their arguments and accept numpy
arrays (broadcasting) as well as scalars.

Two families of "S" kernels feed the determinant formulas:

    sm(t, n; z1, z2)   e^{t/2} (R Q^{-n})^*(z1, z2), a finite convolution
    sn(t, n; z1, z2)   e^{-t/2} (Qext^{(n)} R^{-1})(z1, z2)

Both are evaluated either by finite sums (small t) or by a trapezoid rule
on a saddle-adapted circle (large t, where the sums cancel catastrophically).
"""

from dataclasses import dataclass
from functools import lru_cache
from math import comb as _math_comb

import numpy as np
from scipy.signal import lfilter
from scipy.special import gammaln

from .errors import DomainError, PrecisionError

LOG2 = np.log(2.0)

# above this time the closed-form sums lose too many digits to cancellation
SUM_T_MAX = 10.0


def _out(a):
    a = np.asarray(a, dtype=float)
    return a[()] if a.ndim == 0 else a


def _log_falling(a, k):
    """sign and log|.| of a (a-1) ... (a-k+1), elementwise in a."""
    a = np.asarray(a, dtype=float)
    if k == 0:
        return np.ones_like(a), np.zeros_like(a)
    f = a[..., None] - np.arange(k)
    sign = np.prod(np.sign(f), axis=-1)
    la = np.sum(np.log(np.where(f == 0, 1.0, np.abs(f))), axis=-1)
    return sign, la


def log_binom_signed(a, k):
    """Generalized binomial C(a, k) = (a)_k / k! for integer-valued a and k >= 0.

    Returns (sign, log|C|); sign is 0 where C vanishes.
    """
    sign, la = _log_falling(a, k)
    return sign, la - gammaln(k + 1)


def binom_signed(a, k):
    """C(a, k) for integer-valued a (any sign) and integer k >= 0, as floats.

    Built from running products, which keeps the relative error at a few
    ulps; falls back to log space if the product overflows.
    """
    a = np.asarray(a, dtype=float)
    out = np.ones(a.shape)
    for i in range(int(k)):
        out = out * (a - i) / (i + 1)
    bad = ~np.isfinite(out)
    if np.any(bad):
        sg, lc = log_binom_signed(a[bad], k)
        out[bad] = sg * np.exp(lc)
    return out


def _pow2(d):
    return np.ldexp(1.0, np.asarray(-d, dtype=np.int64).clip(-1070, 1070))


def _poisson_weights(x, dmax):
    """x^d / d! for d = 0..dmax by a running product."""
    if dmax < 0:
        return np.zeros(0)
    r = np.empty(dmax + 1)
    r[0] = 1.0
    if dmax:
        r[1:] = np.cumprod(x / np.arange(1, dmax + 1))
    return r


# ---------------------------------------------------------------------------
# elementary kernels


def q_power(m, x, y):
    """Matrix power Q^m(x, y) for any integer m."""
    m = int(m)
    d = np.asarray(np.subtract(x, y), dtype=np.int64)
    out = np.zeros(d.shape)
    if m == 0:
        out[d == 0] = 1.0
    elif m > 0:
        mask = d >= m
        dd = d[mask]
        out[mask] = binom_signed(dd - 1, m - 1) * _pow2(dd)
    else:
        k = -m
        j = -d
        mask = (j >= 0) & (j <= k)
        jj = j[mask]
        row = np.array([float(_math_comb(k, i)) for i in range(k + 1)])
        out[mask] = np.where((jj + k) % 2 == 0, 1.0, -1.0) * row[jj] * _pow2(-jj)
    return _out(out)


def r_kernel(t, x, y, inverse=False):
    """R(x, y) or its inverse R^{-1}(x, y) = e^{t} (-t/2)^{x-y}/(x-y)!."""
    if not t > 0:
        raise DomainError("r_kernel needs t > 0")
    d = np.asarray(np.subtract(x, y), dtype=np.int64)
    out = np.zeros(d.shape)
    mask = d >= 0
    if not np.any(mask):
        return _out(out)
    dd = d[mask]
    dmax = int(dd.max())
    if dmax <= 600:
        w = _poisson_weights(-t / 2 if inverse else t / 2, dmax)
        out[mask] = np.exp(t if inverse else -t) * w[dd]
    else:
        lv = (t if inverse else -t) + dd * np.log(t / 2) - gammaln(dd + 1.0)
        sign = np.where(dd % 2 == 1, -1.0, 1.0) if inverse else 1.0
        out[mask] = sign * np.exp(lv)
    return _out(out)


def q_ext(n, x, y):
    """Polynomial extension Qext^{(n)}(x, y) = (x-y-1)_{n-1} / (2^{x-y} (n-1)!).

    (a)_k is the falling factorial. Agrees with Q^n(x, y) whenever x - y >= 1.
    """
    n = int(n)
    if n < 1:
        raise DomainError("q_ext needs n >= 1")
    d = np.asarray(np.subtract(x, y), dtype=np.int64)
    return _out(binom_signed(d - 1, n - 1) * _pow2(d))


# ---------------------------------------------------------------------------
# contour coefficients


def trapezoid_coefficient(alpha, k, t, shift=-0.5, radius=0.5, nodes=512):
    """[w^k] (1-w)^alpha e^{t(w+shift)} by the trapezoid rule on a fixed circle.

    Plain reference implementation (fixed radius and node count) used as
    an independent check of the other routes.
    """
    alpha, k = np.broadcast_arrays(np.asarray(alpha, float), np.asarray(k, float))
    th = 2 * np.pi * np.arange(nodes) / nodes
    w = radius * np.exp(1j * th)
    f = (1 - w) ** alpha[..., None] * np.exp(t * (w + shift)) * w ** (-k[..., None])
    res = np.real(f.mean(axis=-1))
    return _out(np.where(k < 0, 0.0, res))


_RGRID = np.logspace(-4, np.log10(64.0), 72)
_TGRID = np.linspace(0, np.pi, 65)
_LOG1MW = np.log(np.abs(1 - _RGRID[:, None] * np.exp(1j * _TGRID[None, :])))


def _saddle_radius(alpha, k, t):
    """radius minimising the max log-modulus of the integrand on the circle."""
    phi = (alpha[:, None, None] * _LOG1MW[None]
           + t * _RGRID[None, :, None] * np.cos(_TGRID)[None, None, :]
           - k[:, None, None] * np.log(_RGRID)[None, :, None])
    phi = np.nan_to_num(phi, nan=np.inf, neginf=-1e300)
    bad = (alpha[:, None] < 0) & (_RGRID[None, :] >= 0.999)
    top = phi.max(axis=2)
    top[bad] = np.inf
    i = np.argmin(top, axis=1)
    return _RGRID[i], top[np.arange(len(i)), i]


def contour_coefficient(alpha, k, t, shift=-0.5, rtol=1e-14, max_nodes=4096):
    """[w^k] (1-w)^alpha e^{t(w+shift)} with saddle-adapted radii.

    alpha, k are integer arrays (broadcast together). Works in log space so
    large t and large orders neither overflow nor lose the answer to
    cancellation. Returns (values, error_estimates).
    """
    alpha, k = np.broadcast_arrays(np.asarray(alpha, float), np.asarray(k, float))
    shape = alpha.shape
    a = alpha.ravel()
    kk = k.ravel()
    val = np.zeros(a.shape)
    err = np.zeros(a.shape)
    live = np.flatnonzero(kk >= 0)
    chunk = 512
    for s0 in range(0, len(live), chunk):
        idx = live[s0:s0 + chunk]
        aa, ka = a[idx], kk[idx]
        r, top = _saddle_radius(aa, ka, t)
        todo = np.arange(len(idx))
        nodes = 256
        while len(todo):
            th = 2 * np.pi * np.arange(nodes) / nodes
            w = r[todo, None] * np.exp(1j * th)[None, :]
            lg = (aa[todo, None] * np.log(1 - w) + t * (w + shift)
                  - ka[todo, None] * (np.log(r[todo])[:, None] + 1j * th[None, :]))
            f = np.exp(lg - top[todo, None]).real
            full = f.mean(axis=1)
            half = f[:, ::2].mean(axis=1)
            scale = np.exp(top[todo])
            e = np.abs(full - half) * scale
            v = full * scale
            ok = np.abs(full - half) <= rtol * max(1.0, np.sqrt(nodes / 256))
            done = ok | (nodes >= max_nodes)
            val[idx[todo[done]]] = v[done]
            err[idx[todo[done]]] = e[done] + 1e-16 * scale[done]
            if nodes >= max_nodes and not ok.all():
                bad = ~ok
                raise PrecisionError("contour quadrature did not converge",
                                     achieved=float(e[bad].max()))
            todo = todo[~done]
            nodes *= 2
    return val.reshape(shape), err.reshape(shape)


# ---------------------------------------------------------------------------
# S kernels as functions of the difference


def _sm_sum(t, n, D):
    # e^{-t/2} sum_j (-1)^{n+j} C(n,j) 2^{-D} t^{D+j}/(D+j)!
    D = np.asarray(D, dtype=np.int64)
    out = np.zeros(D.shape)
    if D.size == 0:
        return out
    pw = _poisson_weights(t, max(int(D.max()) + n, 0))
    for j in range(n + 1):
        e = D + j
        m = e >= 0
        out[m] += (-1.0) ** (n + j) * _math_comb(n, j) * pw[e[m]]
    return out * _pow2(D) * np.exp(-t / 2)


def _sn_sum(t, n, Dp):
    # e^{-t/2} 2^{-D'} sum_{j<n} C(D'-1-j, n-1-j) t^j/j!
    Dp = np.asarray(Dp, dtype=np.int64)
    out = np.zeros(Dp.shape)
    pw = _poisson_weights(t, n - 1)
    for j in range(n):
        out += binom_signed(Dp - 1 - j, n - 1 - j) * pw[j]
    return out * _pow2(Dp) * np.exp(-t / 2)


def _sn_series(t, n, Dp, tail_tol=1e-17, max_terms=4000):
    """literal series e^{-t/2} sum_m Qext^{(n)}(z1, z2+m) R^{-1}(z2+m, z2).

    The terms alternate and grow like e^{t}, so digits are lost to
    cancellation as t grows; this is a reference for small t only.
    """
    Dp = np.atleast_1d(np.asarray(Dp, dtype=float))
    out = np.zeros(Dp.shape)
    for i, d in enumerate(Dp):
        acc = 0.0
        comp = 0.0
        for m in range(max_terms):
            sign, lc = log_binom_signed(np.array(d - m - 1), n - 1)
            term = float(sign) * np.exp(float(lc) - (d - m) * LOG2
                                        + m * np.log(t / 2) - gammaln(m + 1) + t / 2)
            # Kahan summation, the series alternates
            y = term * (-1) ** m - comp
            s = acc + y
            comp = (s - acc) - y
            acc = s
            # bound on every later term, ratio < 1/2 gives a geometric tail
            lb = ((n - 1) * np.log(m + abs(d) + 2) - gammaln(n) - d * LOG2
                  + m * np.log(t) - gammaln(m + 1) + t / 2)
            ratio = t / (m + 1) * ((m + abs(d) + 3) / (m + abs(d) + 2)) ** (n - 1)
            if ratio < 0.5 and 2 * np.exp(lb) < tail_tol * max(1.0, abs(acc)):
                break
        else:
            raise PrecisionError("sn series tail not certified", achieved=float(np.exp(lb)))
        out[i] = acc
    return out


def sm_diff(t, n, D, method="auto"):
    """sm(t, n; z1, z2) as a function of D = z2 - z1.

    method: 'sum' (finite sum), 'contour' (saddle circle), 'auto'.
    Zero for D < -n.
    """
    if not t > 0:
        raise DomainError("t must be positive")
    n = int(n)
    D = np.asarray(D, dtype=np.int64)
    if method == "auto":
        method = "sum" if t <= SUM_T_MAX else "contour"
    if method == "sum":
        return _out(_sm_sum(t, n, D))
    if method == "contour":
        v, _ = contour_coefficient(n, n + D, t)
        return _out(np.where(n + D < 0, 0.0, v * 2.0 ** (-D.astype(float))))
    raise ValueError(method)


def sn_diff(t, n, Dp, method="auto"):
    """sn(t, n; z1, z2) as a function of D' = z1 - z2.

    method: 'sum' (finite Newton form), 'series' (literal factorial series),
    'contour' (saddle circle), 'auto'.
    """
    if not t > 0:
        raise DomainError("t must be positive")
    n = int(n)
    if n < 1:
        raise DomainError("sn needs n >= 1")
    Dp = np.asarray(Dp, dtype=np.int64)
    if method == "auto":
        method = "sum" if t <= SUM_T_MAX else "contour"
    if method == "sum":
        return _out(_sn_sum(t, n, Dp))
    if method == "series":
        return _out(_sn_series(t, n, Dp).reshape(Dp.shape))
    if method == "contour":
        v, _ = contour_coefficient(n - 1 - Dp, n - 1, t)
        return _out(v * 2.0 ** (-Dp.astype(float)))
    raise ValueError(method)


def s_kernels(t, n, z1, z2, method="auto"):
    """(sm(t, n; z1, z2), sn(t, n; z1, z2))."""
    d = np.subtract(z2, z1)
    return sm_diff(t, n, d, method), sn_diff(t, n, -np.asarray(d), method)


@lru_cache(maxsize=4096)
def _sn_table(t, n, dmin, dmax):
    return np.asarray(sn_diff(t, n, np.arange(dmin, dmax + 1)), dtype=float)


def sn_matrix(t, n, ys, zs):
    """matrix sn(t, n; ys[i], zs[j]) through a cached difference table."""
    ys = np.asarray(ys, dtype=np.int64)
    zs = np.asarray(zs, dtype=np.int64)
    if len(ys) == 0 or len(zs) == 0:
        return np.zeros((len(ys), len(zs)))
    d = ys[:, None] - zs[None, :]
    lo, hi = int(d.min()), int(d.max())
    tab = _sn_table(float(t), int(n), lo, hi)
    return tab[d - lo]


@lru_cache(maxsize=4096)
def _sm_table(t, n, dmin, dmax):
    return np.asarray(sm_diff(t, n, np.arange(dmin, dmax + 1)), dtype=float)


def sm_matrix(t, n, z1s, z2s):
    """matrix sm(t, n; z1s[i], z2s[j])."""
    z1s = np.asarray(z1s, dtype=np.int64)
    z2s = np.asarray(z2s, dtype=np.int64)
    if len(z1s) == 0 or len(z2s) == 0:
        return np.zeros((len(z1s), len(z2s)))
    d = z2s[None, :] - z1s[:, None]
    lo, hi = int(d.min()), int(d.max())
    tab = _sm_table(float(t), int(n), lo, hi)
    return tab[d - lo]


# ---------------------------------------------------------------------------
# boundary curves and hitting tables


@dataclass(frozen=True)
class BoundaryCurve:
    """X0(1..N) with X0(m) = +inf for m <= 0 and `beyond` for m > N."""

    values: tuple
    beyond: float = -np.inf

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        fin = v[np.isfinite(v)]
        if np.any(np.diff(fin) >= 0):
            raise DomainError("boundary curve must be strictly decreasing")

    @classmethod
    def of(cls, values, beyond=-np.inf):
        return cls(tuple(float(v) for v in values), beyond)

    def __len__(self):
        return len(self.values)

    def __call__(self, m):
        m = int(m)
        if m <= 0:
            return np.inf
        if m <= len(self.values):
            return self.values[m - 1]
        return self.beyond

    def ints(self, m):
        v = self(m)
        if not np.isfinite(v):
            raise DomainError(f"X0({m}) is not finite")
        return int(v)


@dataclass(frozen=True)
class HittingTable:
    """Joint law of (tau, B_tau) for the left Geom[1/2] walk from z.

    mass[k, i] = P(tau = k, B_k = ys[i]) for k < horizon; survival is the
    probability that tau >= horizon.
    """

    z: int
    horizon: int
    ys: np.ndarray
    mass: np.ndarray
    survival: float

    def total(self):
        return float(self.mass.sum())

    def at(self, k, y):
        i = int(y) - int(self.ys[0]) if len(self.ys) else -1
        if 0 <= i < len(self.ys) and 0 <= k < self.horizon:
            return float(self.mass[k, i])
        return 0.0


def _step_left(S):
    """one Geom[1/2] left jump for rows of S indexed by increasing y."""
    # new[y] = 1/2 (S[y+1] + new[y+1]) scanned from the right end
    r = S[:, ::-1]
    return lfilter([0.0, 0.5], [1.0, -0.5], r, axis=1)[:, ::-1]


def hitting_mass(X0, zs, n):
    """Batched hitting tables.

    Returns (ys, mass, survival) with mass of shape (len(zs), n, len(ys)).
    Walkers that drop to X0(n) or below can never enter the epigraph before
    the horizon and are counted as survivors at once, which keeps the
    dynamic program finite and exact.
    """
    n = int(n)
    if n < 1:
        raise DomainError("horizon must be >= 1")
    zs = np.atleast_1d(np.asarray(zs, dtype=np.int64))
    lo = X0.ints(n) + 1
    hi = int(max(zs.max(), lo))
    ys = np.arange(lo, hi + 1)
    S = np.zeros((len(zs), len(ys)))
    inside = zs >= lo
    S[np.flatnonzero(inside), zs[inside] - lo] = 1.0
    mass = np.zeros((len(zs), n, len(ys)))
    dead = 1.0 - S.sum(axis=1)
    for k in range(n):
        above = ys > X0(k + 1)
        mass[:, k, above] = S[:, above]
        S[:, above] = 0.0
        if k == n - 1:
            break
        before = S.sum(axis=1)
        S = _step_left(S)
        dead += before - S.sum(axis=1)
    survival = dead + S.sum(axis=1)
    return ys, mass, survival


def hitting_table(X0, z, n):
    ys, mass, surv = hitting_mass(X0, [z], n)
    return HittingTable(int(z), int(n), ys, mass[0], float(surv[0]))


def s_epi_matrix(t, n, X0, z1s, z2s):
    """sum_{k<n} sum_y P_{z1}(tau=k, B_k=y) sn(t, n-k; y, z2) as a matrix."""
    z1s = np.atleast_1d(np.asarray(z1s, dtype=np.int64))
    z2s = np.atleast_1d(np.asarray(z2s, dtype=np.int64))
    ys, mass, _ = hitting_mass(X0, z1s, n)
    out = np.zeros((len(z1s), len(z2s)))
    for k in range(n):
        mk = mass[:, k, :]
        cols = np.flatnonzero(mk.any(axis=0))
        if len(cols) == 0:
            continue
        out += mk[:, cols] @ sn_matrix(t, n - k, ys[cols], z2s)
    return out


def s_epi_discrete(t, n, X0, z1, z2):
    return float(s_epi_matrix(t, n, X0, [z1], [z2])[0, 0])


def g0n(X0, n, z1, z2, route="hitting"):
    """G_{0,n}(z1, z2) by the hitting formula or the backwards heat problem."""
    n = int(n)
    if route == "hitting":
        if z1 > X0(1):
            return float(q_ext(n, z1, z2))
        ys, mass, _ = hitting_mass(X0, [z1], n)
        acc = 0.0
        for k in range(n):
            mk = mass[0, k]
            nz = np.flatnonzero(mk)
            if len(nz):
                acc += float(mk[nz] @ q_ext(n - k, ys[nz], z2))
        return acc
    if route == "bvp":
        from .biorthogonal import solve_bvp

        acc = 0.0
        for k in range(n):
            c = X0.ints(n - k)
            qv = float(q_power(n - k, z1, c))
            if qv != 0.0:
                acc += qv * solve_bvp(n, k, X0).h(0, z2)
        return acc
    raise ValueError(route)
