"""Fredholm determinant machinery against closed forms."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kpzfp.errors import DataError, PrecisionError
from kpzfp.fredholm import (ContinuumKernel, DiscreteKernel, det_discrete, det_discrete_adaptive,
                            det_i_minus, det_nystrom, hs_norm, make_grid, one_minus_det)


@given(st.integers(1, 6), st.integers(0, 10 ** 6))
@settings(max_examples=30)
def test_det_matches_eigenvalue_product(n, seed):
    # [DERIVED] det(I - A) = prod(1 - lambda_i)
    A = np.random.default_rng(seed).normal(size=(n, n)) * 0.3
    ref = np.prod(1 - np.linalg.eigvals(A)).real
    assert det_i_minus(A) == pytest.approx(ref, rel=1e-10, abs=1e-12)
    assert one_minus_det(A) == pytest.approx(1 - ref, rel=1e-9, abs=1e-12)


def test_one_minus_det_small_kernel_keeps_digits():
    A = np.diag([1e-13, 2e-13])
    assert one_minus_det(A) == pytest.approx(3e-13, rel=1e-6)


def test_discrete_kernel_shape_and_finite():
    with pytest.raises(DataError):
        DiscreteKernel([0, 1], np.zeros((3, 3)))
    with pytest.raises(DataError):
        det_i_minus(np.array([[np.nan]]))
    assert det_discrete(DiscreteKernel([0], [[0.25]])) == 0.75
    assert det_i_minus(np.zeros((0, 0))) == 1.0


def test_adaptive_window_geometric_kernel():
    # [DERIVED] rank one kernel 2^{-x-y}/2 on x, y >= lower: det = 1 - sum 4^{-x}/2
    def builder(lower):
        x = np.arange(lower, 40)
        return 0.5 * 2.0 ** (-x[:, None] - x[None, :]) * (4.0 ** 0)
    val, _ = det_discrete_adaptive(builder, 10, tol=1e-14, floor=0)
    assert val == pytest.approx(1 - 0.5 * sum(4.0 ** -x for x in range(0, 40)), abs=1e-14)


@pytest.mark.parametrize("domain,exact", [
    (("half", 0.0), 1.0), (("left", 0.0), 1.0), (("interval", 0.0, 2.0), 1 - np.exp(-2.0)),
])
def test_grids_integrate_exponential(domain, exact):
    g = make_grid(domain, 64, 2.0)
    f = np.exp(-np.abs(g.nodes))
    assert np.sum(g.weights * f) == pytest.approx(exact, rel=1e-10)


def test_line_grid_gaussian():
    g = make_grid(("line",), 96, 3.0)
    assert np.sum(g.weights * np.exp(-g.nodes ** 2)) == pytest.approx(np.sqrt(np.pi), rel=1e-12)


@given(st.floats(0.1, 0.9), st.floats(0.0, 3.0))
@settings(max_examples=20, deadline=None)
def test_rank_one_continuum_kernel(lam, gamma):
    # [DERIVED] K = lam e^{-u-v} on (0, inf): det(I - K) = 1 - lam/2, any conjugation
    K = ContinuumKernel.single(lambda u, v: lam * np.exp(-u - v), ("half", 0.0), gamma=gamma * 0.3)
    assert det_nystrom(K, m=16, tol=1e-12, L=2.0) == pytest.approx(1 - lam / 2, abs=1e-11)


def test_block_kernel_two_domains():
    # [DERIVED] rank one across two half-lines: det = 1 - (1/2 + 1/3)
    f = [lambda u: np.exp(-u), lambda u: np.exp(-2 * u)]
    K = ContinuumKernel(lambda i, j, u, v: f[i](u) * np.exp(-v) * (j == 0) +
                        0 * v, [("half", 0.0), ("half", 0.0)])
    val = det_nystrom(K, m=16, tol=1e-12, L=2.0)
    assert val == pytest.approx(1 - 0.5, abs=1e-11)


def test_nystrom_reports_nonconvergence():
    K = ContinuumKernel.single(lambda u, v: np.sin(200 * u * v) * np.exp(-u - v), ("half", 0.0))
    with pytest.raises(PrecisionError):
        det_nystrom(K, m=4, tol=1e-15, max_m=8)


def test_hs_norm_rank_one():
    K = ContinuumKernel.single(lambda u, v: np.exp(-u - v), ("half", 0.0))
    assert hs_norm(K, m=32, L=2.0) == pytest.approx(0.5, rel=1e-3)
