"""Biorthogonal functions for TASEP with right-finite initial data.

For fixed n and 0 <= k < n, h(l, z) = h^n_k(l, z) solves a backwards heat
problem on levels l = k, k-1, ..., 0:

    h(k, z) = 2^{z - X0(n-k)}
    h(l, X0(n-l)) = 0                         for l < k
    (Q^*)^{-1} h(l, .) = h(l+1, .)

Writing g_l(z) = 2^{-z} h(l, z), the evolution reads
g_{l+1}(z) = g_l(z-1) - g_l(z), so g_{l-1} is recovered from g_l by a
cumulative sum anchored at the zero g_{l-1}(X0(n-l+1)) = 0. Each g_l is a
polynomial of degree k - l, which lets us evaluate h off the stored window
exactly.
"""

from dataclasses import dataclass
from functools import lru_cache

import mpmath as mp
import numpy as np
from scipy.special import gammaln

from .errors import DomainError, PrecisionError
from .fredholm import DiscreteKernel
from .walk_kernels import BoundaryCurve, q_power, r_kernel


def _newton_eval(values, base, k, z):
    """evaluate the degree <= k polynomial with values[i] = p(base + i)."""
    z = np.asarray(z, dtype=float)
    diffs = []
    d = np.asarray(values[:k + 1], dtype=float)
    for _ in range(k + 1):
        diffs.append(d[0])
        d = np.diff(d)
    s = z - base
    out = np.zeros(z.shape)
    coef = np.ones(z.shape)
    for j, dj in enumerate(diffs):
        out = out + dj * coef
        coef = coef * (s - j) / (j + 1)
    return out


@dataclass(frozen=True)
class BvpSolution:
    n: int
    k: int
    zs: np.ndarray
    g: np.ndarray  # g[l, i] = 2^{-zs[i]} h(l, zs[i])

    def gpoly(self, l, z):
        z = np.asarray(z)
        base = int(self.zs[0])
        idx = z - base
        inside = (idx >= 0) & (idx < len(self.zs))
        out = np.empty(z.shape, dtype=float)
        out[inside] = self.g[l, idx[inside]]
        if np.any(~inside):
            out[~inside] = _newton_eval(self.g[l], base, self.k - l, z[~inside])
        return out[()] if out.ndim == 0 else out

    def h(self, l, z):
        z = np.asarray(z)
        return self.gpoly(l, z) * np.exp2(z.astype(float))

    @property
    def table(self):
        return self.g * np.exp2(self.zs.astype(float))[None, :]


def default_window(n, X0):
    vals = [X0.ints(m) for m in range(1, n + 1)]
    pad = 10 + 2 * n
    return min(vals) - pad, max(vals) + pad


def solve_bvp(n, k, X0, window=None):
    """March the backwards heat problem from level k down to level 0."""
    n, k = int(n), int(k)
    if not 0 <= k < n:
        raise DomainError("need 0 <= k < n")
    return _solve_bvp(n, k, X0, window)


@lru_cache(maxsize=2048)
def _solve_bvp(n, k, X0, window):
    lo, hi = window if window is not None else default_window(n, X0)
    for m in range(n - k, n + 1):
        c = X0.ints(m)
        if not lo <= c <= hi:
            raise DomainError("window does not contain the boundary points")
    zs = np.arange(lo, hi + 1)
    g = np.zeros((k + 1, len(zs)))
    g[k, :] = 2.0 ** (-X0.ints(n - k))
    for l in range(k, 0, -1):
        c = X0.ints(n - l + 1)
        S = np.cumsum(g[l])
        g[l - 1] = S[c - lo] - S
    return BvpSolution(n, k, zs, g)


def psi(n, k, t, X0, x):
    """Psi^n_k = R Q^{-k} delta_{X0(n-k)}; k < 0 uses the positive power Q^{|k|}."""
    x = np.asarray(x, dtype=np.int64)
    c = X0.ints(n - k)
    if k >= 0:
        j = np.arange(k + 1)
        cs = c - j
        out = r_kernel(t, x[..., None], cs) * q_power(-k, cs, c)
        return np.sum(out, axis=-1)
    m = -k
    xmax = int(np.max(x)) if x.size else c
    cs = np.arange(c + m, max(xmax, c + m) + 1)
    out = r_kernel(t, x[..., None], cs) * q_power(m, cs, c)
    return np.sum(np.atleast_1d(out), axis=-1).reshape(x.shape)


def phi(n, k, t, X0, x, route="newton"):
    """Phi^n_k(x) = sum_y R^{-1}(y, x) h^n_k(0, y).

    route 'newton' uses the exact finite form
    2^x sum_{j<=k} (Delta^j g_0)(x) (-t)^j / j!, route 'series' sums the
    defining series with a certified tail.
    """
    sol = solve_bvp(n, k, X0)
    x = np.atleast_1d(np.asarray(x, dtype=np.int64))
    if route == "newton":
        pts = x[:, None] + np.arange(k + 1)[None, :]
        vals = sol.gpoly(0, pts)
        acc = np.zeros(len(x))
        for j in range(k + 1):
            acc += vals[:, 0] * np.exp(j * np.log(t) - gammaln(j + 1)) * (-1) ** j
            vals = np.diff(vals, axis=1)
        return acc * np.exp2(x.astype(float))
    if route == "series":
        out = np.zeros(len(x))
        for i, xi in enumerate(x):
            acc = 0.0
            small = 0
            for m in range(4000):
                term = float(sol.h(0, xi + m)) * float(r_kernel(t, xi + m, xi, inverse=True))
                acc += term
                # past the peak the terms fall faster than geometrically
                if m > 2 * t + k + 2 and abs(term) < 1e-17 * max(1.0, abs(acc)):
                    small += 1
                    if small >= 3:
                        break
                else:
                    small = 0
            else:
                raise PrecisionError("phi series tail not certified")
            out[i] = acc
        return out
    raise ValueError(route)


def psi_mp(n, k, t, X0, xs):
    """psi in mpmath arithmetic at the current working precision."""
    t = mp.mpf(t)
    c = X0.ints(n - k)
    out = []
    for x in xs:
        acc = mp.mpf(0)
        if k >= 0:
            cs = [(c - j, (-1) ** (j + k) * mp.mpf(2) ** j * mp.binomial(k, j)) for j in range(k + 1)]
        else:
            m = -k
            cs = [(cc, mp.binomial(cc - c - 1, m - 1) / mp.mpf(2) ** (cc - c))
                  for cc in range(c + m, int(x) + 1)]
        for cc, q in cs:
            d = int(x) - cc
            if d >= 0:
                acc += mp.exp(-t) * (t / 2) ** d / mp.factorial(d) * q
        out.append(acc)
    return out


def phi_mp(n, k, t, X0, xs):
    """Newton form of phi in mpmath arithmetic; the g table is exact dyadic."""
    t = mp.mpf(t)
    sol = solve_bvp(n, k, X0)
    out = []
    for x in xs:
        vals = [mp.mpf(float(v)) for v in sol.gpoly(0, np.arange(int(x), int(x) + k + 1))]
        acc = mp.mpf(0)
        for j in range(k + 1):
            acc += vals[0] * (-t) ** j / mp.factorial(j)
            vals = [vals[i + 1] - vals[i] for i in range(len(vals) - 1)]
        out.append(acc * mp.mpf(2) ** int(x))
    return out


def biorthogonality_matrix(n, t, X0, dps=None):
    """M[k, l] = sum_x Psi^n_k(x) Phi^n_l(x), which should be the identity.

    The individual products can be many orders of magnitude larger than the
    result, so double precision bottoms out around 1e-9 for n near 8; pass
    dps to run the same formulas in mpmath at that many digits.
    """
    lo = X0.ints(n) - n - 1
    hi = X0.ints(1) + int(4 * t) + 60
    xs = np.arange(lo, hi + 1)
    if dps is None:
        P = np.array([psi(n, k, t, X0, xs) for k in range(n)])
        F = np.array([phi(n, l, t, X0, xs) for l in range(n)])
        return P @ F.T
    with mp.workdps(dps):
        P = [psi_mp(n, k, t, X0, xs) for k in range(n)]
        F = [phi_mp(n, l, t, X0, xs) for l in range(n)]
        M = np.array([[float(mp.fsum(a * b for a, b in zip(P[k], F[l]))) for l in range(n)]
                      for k in range(n)])
    return M


def bfps_kernel(t, levels, X0, windows):
    """Extended kernel from Psi and Phi on the given per-level site windows.

    K(n_i, x; n_j, y) = -Q^{n_j - n_i}(x, y) 1{n_i < n_j}
                        + sum_{k=1}^{n_j} Psi^{n_i}_{n_i-k}(x) Phi^{n_j}_{n_j-k}(y)
    """
    index = [(n, int(x)) for n, w in zip(levels, windows) for x in w]
    blocks = []
    for ni, wi in zip(levels, windows):
        row = []
        wi = np.asarray(wi, dtype=np.int64)
        for nj, wj in zip(levels, windows):
            wj = np.asarray(wj, dtype=np.int64)
            B = np.zeros((len(wi), len(wj)))
            if ni < nj:
                B -= q_power(nj - ni, wi[:, None], wj[None, :])
            for k in range(1, nj + 1):
                B += np.outer(psi(ni, ni - k, t, X0, wi), phi(nj, nj - k, t, X0, wj))
            row.append(B)
        blocks.append(row)
    M = np.block(blocks) if index else np.zeros((0, 0))
    return DiscreteKernel(index, M)


__all__ = ["BoundaryCurve", "BvpSolution", "solve_bvp", "psi", "phi",
           "biorthogonality_matrix", "bfps_kernel", "default_window"]
