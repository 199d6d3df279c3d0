"""Fredholm determinants of lattice and continuum kernels.

Lattice kernels are dense matrices over a finite list of (level, site)
indices. Continuum kernels are sampled at Gauss-Legendre nodes mapped to
the integration domain (Nystrom method), optionally conjugated by
e^{-gamma u} ... e^{gamma v}, which leaves the determinant unchanged but
keeps the sampled matrix well scaled.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor
from scipy.special import roots_legendre

from .errors import DataError, PrecisionError


@dataclass
class DiscreteKernel:
    index: list
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        if self.matrix.shape != (len(self.index), len(self.index)):
            raise DataError("kernel matrix shape does not match its index set")


def det_i_minus(A):
    """det(I - A) via LU with partial pivoting."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 1.0
    if not np.all(np.isfinite(A)):
        raise DataError("kernel has non-finite entries")
    lu, piv = lu_factor(np.eye(A.shape[0]) - A, check_finite=False)
    sign = (-1.0) ** np.count_nonzero(piv != np.arange(len(piv)))
    return float(sign * np.prod(np.diag(lu)))


def one_minus_det(A):
    """1 - det(I - A) without cancellation when A is small, via eigenvalues."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    mu = np.linalg.eigvals(A)
    return float(np.real(-np.expm1(np.sum(np.log1p(-mu.astype(complex))))))


def det_discrete(K):
    """det(I - K) for a DiscreteKernel or a plain square array."""
    A = K.matrix if isinstance(K, DiscreteKernel) else K
    return det_i_minus(A)


def det_discrete_adaptive(builder, lower, tol=1e-12, step=4, floor=None, max_iter=40):
    """Grow the lower cutoff of a lattice kernel until the determinant settles.

    builder(lower) must return the kernel matrix for sites >= lower. The
    cutoff moves down by a geometrically growing step until two successive
    changes are below tol. Returns (value, lower_used).
    """
    prev = det_discrete(builder(lower))
    calm = 0
    s = step
    for _ in range(max_iter):
        nxt = lower - s
        if floor is not None and nxt < floor:
            nxt = floor
        val = det_discrete(builder(nxt))
        delta = abs(val - prev)
        calm = calm + 1 if delta < tol else 0
        lower, prev = nxt, val
        if calm >= 2 or (floor is not None and lower <= floor):
            return val, lower
        s *= 2
    raise PrecisionError("window did not converge", achieved=delta, value=prev)


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureGrid:
    nodes: np.ndarray
    weights: np.ndarray
    kind: str = "affine"
    params: tuple = field(default=())

    def __len__(self):
        return len(self.nodes)


def gl_interval(a, b, m):
    x, w = roots_legendre(m)
    return QuadratureGrid(0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w,
                          "affine", (a, b))


def gl_halfline(a, m, L=10.0):
    """nodes on (a, inf) through u = a + L (1 + xi) / (1 - xi)."""
    x, w = roots_legendre(m)
    u = a + L * (1 + x) / (1 - x)
    wu = w * 2 * L / (1 - x) ** 2
    return QuadratureGrid(u, wu, "halfline", (a, L))


def gl_left_halfline(b, m, L=10.0):
    """nodes on (-inf, b), mirrored half-line map, increasing order."""
    g = gl_halfline(-b, m, L)
    return QuadratureGrid((-g.nodes)[::-1], g.weights[::-1], "left_halfline", (b, L))


def gl_real_line(m, L=10.0, center=0.0):
    left = gl_left_halfline(center, m // 2, L)
    right = gl_halfline(center, m - m // 2, L)
    return QuadratureGrid(np.concatenate([left.nodes, right.nodes]),
                          np.concatenate([left.weights, right.weights]), "line", (center, L))


def make_grid(domain, m, L=10.0):
    """domain: ('half', a) | ('left', b) | ('interval', a, b) | ('line',)."""
    kind = domain[0]
    if kind == "half":
        return gl_halfline(domain[1], m, L)
    if kind == "left":
        return gl_left_halfline(domain[1], m, L)
    if kind == "interval":
        return gl_interval(domain[1], domain[2], m)
    if kind == "line":
        return gl_real_line(m, L)
    raise ValueError(domain)


@dataclass
class ContinuumKernel:
    """Block kernel K[i][j](u, v) on domains[i] x domains[j].

    evaluator(i, j, u, v) returns the block sampled on the outer grid u x v.
    gamma is the conjugation exponent, a number or one value per block: the
    determinant is taken of e^{-gamma_i u} K_ij(u, v) e^{gamma_j v}, which
    has the same value.
    """

    evaluator: object
    domains: list
    gamma: float = 0.0

    @classmethod
    def single(cls, fn, domain, gamma=0.0):
        return cls(lambda i, j, u, v: fn(u, v), [domain], gamma)


def nystrom_matrix(K, m, L=10.0):
    grids = [make_grid(d, m, L) for d in K.domains]
    gam = np.broadcast_to(np.asarray(K.gamma, dtype=float), (len(grids),))
    blocks = []
    for i, gi in enumerate(grids):
        row = []
        si = np.sqrt(gi.weights)
        for j, gj in enumerate(grids):
            sj = np.sqrt(gj.weights)
            B = np.asarray(K.evaluator(i, j, gi.nodes[:, None], gj.nodes[None, :]), dtype=float)
            B = np.broadcast_to(B, (len(gi), len(gj)))
            if gam[i] or gam[j]:
                # far nodes have B == 0 exactly, so cap the exponent instead of overflowing
                E = -gam[i] * gi.nodes[:, None] + gam[j] * gj.nodes[None, :]
                B = np.where(B == 0, 0.0, B * np.exp(np.minimum(E, 700.0)))
            row.append(si[:, None] * B * sj[None, :])
        blocks.append(row)
    return np.block(blocks)


def det_nystrom(K, m=40, tol=1e-10, L=10.0, max_m=320, return_error=False, complement=False):
    """det(I - K) by Nystrom quadrature with grid doubling.

    Orders m and 2m must agree within tol; otherwise the order is doubled up
    to max_m before giving up. complement=True returns 1 - det(I - K),
    computed without cancellation.
    """
    ev = one_minus_det if complement else det_i_minus
    prev = ev(nystrom_matrix(K, m, L))
    while True:
        m2 = 2 * m
        val = ev(nystrom_matrix(K, m2, L))
        err = abs(val - prev)
        if err <= tol:
            return (val, err) if return_error else val
        if m2 >= max_m:
            raise PrecisionError("Nystrom grid doubling disagrees", achieved=err, value=val)
        m, prev = m2, val


def hs_norm(K, m=40, L=10.0, max_m=640, rtol=1e-3):
    """Hilbert-Schmidt norm estimate; inf when grid doubling keeps changing it."""
    def at(mm):
        A = nystrom_matrix(K, mm, L)
        return float(np.sqrt(np.sum(A * A)))

    prev = at(m)
    while m < max_m:
        m *= 2
        cur = at(m)
        if not np.isfinite(cur):
            return np.inf
        if abs(cur - prev) <= rtol * max(cur, 1e-300):
            return cur
        prev = cur
    return np.inf
