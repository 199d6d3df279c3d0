"""Lattice walk kernels against brute-force oracles."""

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kpzfp.errors import DomainError
from kpzfp.walk_kernels import (BoundaryCurve, binom_signed, contour_coefficient, g0n,
                                hitting_table, q_ext, q_power, r_kernel, sm_diff, sn_diff,
                                trapezoid_coefficient)


def geom_convolution(m, d):
    """[DERIVED] P(m left Geom[1/2] jumps, each >= 1, total d) by repeated convolution."""
    pmf = np.zeros(d + 1)
    pmf[0] = 1.0
    step = np.array([0.0] + [2.0 ** -k for k in range(1, d + 1)])
    for _ in range(m):
        pmf = np.convolve(pmf, step)[: d + 1]
    return pmf[d]


@given(st.integers(1, 6), st.integers(0, 25))
def test_q_power_matches_convolution(m, d):
    assert q_power(m, d, 0) == pytest.approx(geom_convolution(m, d), abs=1e-15)


@given(st.integers(-5, 5), st.integers(-5, 5))
@settings(max_examples=40)
def test_q_power_group_law(a, b):
    # [DERIVED] Q^a Q^b = Q^{a+b}; the sum over y is finite once one power is negative
    if a >= 0 and b >= 0:
        ys = np.arange(-60, 11)
    else:
        ys = np.arange(-60, 40)
    x, z = 3, -4
    lhs = sum(q_power(a, x, y) * q_power(b, y, z) for y in ys)
    assert lhs == pytest.approx(q_power(a + b, x, z), abs=1e-12)


@given(st.integers(1, 8), st.integers(1, 30))
def test_q_ext_agrees_with_q_power_on_positive_gaps(n, d):
    assert q_ext(n, d, 0) == pytest.approx(q_power(n, d, 0), rel=1e-13, abs=1e-300)


@given(st.integers(-30, 30), st.integers(0, 12))
def test_binom_signed_vs_mpmath(a, k):
    assert binom_signed(a, k) == pytest.approx(float(mp.binomial(a, k)), rel=1e-13, abs=1e-300)


@given(st.floats(0.1, 8.0))
@settings(max_examples=20)
def test_r_kernel_inverse(t):
    # [DERIVED] R R^{-1} = I on a lower-triangular Toeplitz window is exact
    xs = np.arange(0, 25)
    R = r_kernel(t, xs[:, None], xs[None, :])
    Ri = r_kernel(t, xs[:, None], xs[None, :], inverse=True)
    assert np.abs(R @ Ri - np.eye(len(xs))).max() < 1e-12


def test_r_kernel_rows_are_poisson():
    # [TRIVIAL] R(x, .) is the Poisson(t/2) pmf of x - y, times e^{-t/2}
    t = 3.0
    d = np.arange(0, 60)
    row = r_kernel(t, d, 0)
    assert row.sum() == pytest.approx(np.exp(-t / 2), rel=1e-14)
    with pytest.raises(DomainError):
        r_kernel(0.0, 0, 0)


@given(st.integers(-6, 6), st.integers(0, 20), st.floats(0.2, 6.0))
@settings(max_examples=40, deadline=None)
def test_contour_coefficient_vs_mpmath_taylor(alpha, k, t):
    # [DERIVED] independent series coefficient of (1-w)^alpha e^{t(w - 1/2)}
    mp.mp.dps = 40
    f = lambda w: (1 - w) ** alpha * mp.exp(t * (w - mp.mpf(1) / 2))
    ref = float(mp.taylor(f, 0, k)[k])
    got = float(np.ravel(contour_coefficient(np.array([alpha]), np.array([k]), t))[0])
    assert got == pytest.approx(ref, rel=1e-10, abs=1e-14 * max(1.0, abs(ref)))
    # fixed radius 1/2: roundoff floor grows like 2^k
    plain = float(np.ravel(trapezoid_coefficient(np.array([alpha]), np.array([k]), t))[0])
    assert plain == pytest.approx(ref, rel=1e-8, abs=1e-14 * 2.0 ** k)


@pytest.mark.parametrize("t", [0.5, 2.0, 6.0])
@pytest.mark.parametrize("n", [1, 3, 6])
def test_sm_routes_agree(t, n):
    D = np.arange(-n - 2, 15)
    a = sm_diff(t, n, D, "sum")
    b = sm_diff(t, n, D, "contour")
    assert np.abs(a - b).max() < 1e-11 * max(1.0, np.abs(a).max())
    assert np.all(a[D < -n] == 0)


def sn_oracle(t, n, d):
    """[DERIVED] finite Newton form at 50 digits."""
    with mp.workdps(50):
        s = mp.fsum(mp.binomial(d - 1 - j, n - 1 - j) * mp.mpf(t) ** j / mp.factorial(j)
                    for j in range(n))
        return float(mp.exp(-mp.mpf(t) / 2) * mp.mpf(2) ** (-d) * s)


@pytest.mark.parametrize("t", [0.5, 2.0, 6.0, 14.0])
@pytest.mark.parametrize("n", [1, 3, 6])
def test_sn_routes_agree(t, n):
    Dp = np.arange(-4, 14)
    ref = np.array([sn_oracle(t, n, int(d)) for d in Dp])
    scale = max(1.0, np.abs(ref).max())
    for method in ("sum", "contour") if t <= 10 else ("contour", "auto"):
        assert np.abs(sn_diff(t, n, Dp, method) - ref).max() < 1e-12 * scale
    if t <= 2:
        assert np.abs(sn_diff(t, n, Dp, "series") - ref).max() < 1e-11 * scale


def test_hitting_table_conserves_mass():
    X0 = BoundaryCurve.of([4, 1, 0, -3, -5, -6])
    for z in [-2, 0, 3, 7]:
        h = hitting_table(X0, z, 6)
        assert h.total() + h.survival == pytest.approx(1.0, abs=1e-14)


def test_walk_started_above_curve_hits_at_time_zero():
    X0 = BoundaryCurve.of([2, 0, -1])
    h = hitting_table(X0, 5, 3)
    assert h.at(0, 5) == 1.0 and h.survival == 0.0


def test_boundary_curve_validation():
    with pytest.raises(DomainError):
        BoundaryCurve.of([0, 1])
    c = BoundaryCurve.of([3, 1])
    assert c(0) == math.inf and c(3) == -math.inf
    with pytest.raises(DomainError):
        c.ints(3)


@given(st.integers(1, 6), st.integers(-6, 6), st.integers(-10, 6), st.randoms())
@settings(max_examples=40, deadline=None)
def test_g0n_hitting_equals_bvp(n, z1, z2, rnd):
    gaps = [rnd.randint(1, 3) for _ in range(7)]
    X0 = BoundaryCurve.of(list(np.cumsum(-np.array(gaps)) + 2))
    a = g0n(X0, n, z1, z2, "hitting")
    b = g0n(X0, n, z1, z2, "bvp")
    assert a == pytest.approx(b, abs=1e-9)
