"""Biorthogonal functions and the backwards heat problem."""

import numpy as np
import pytest

from kpzfp.biorthogonal import biorthogonality_matrix, psi, solve_bvp
from kpzfp.tasep_exact import curve_of
from kpzfp.tasep_sim import ParticleConfig, step


@pytest.mark.parametrize("positions,t", [([0], 1.0), ([3, 1, 0], 0.7), ([2, -1, -2, -5], 1.9)])
def test_biorthogonality_double_precision_small_n(positions, t):
    X0 = curve_of(ParticleConfig.of(positions))
    M = biorthogonality_matrix(len(positions), t, X0)
    assert np.abs(M - np.eye(len(positions))).max() < 1e-9


def test_biorthogonality_multiprecision_n8():
    X0 = curve_of(ParticleConfig.of([5, 2, 1, -1, -4, -5, -7, -10]))
    M = biorthogonality_matrix(8, 2.3, X0, dps=30)
    assert np.abs(M - np.eye(8)).max() < 1e-20


def test_bvp_solution_is_polynomial_times_power_of_two():
    # [DERIVED] 2^{-z} h(l, z) has degree k - l, so its (k-l+1)-th difference vanishes
    X0 = curve_of(ParticleConfig.of([4, 1, 0, -3]))
    n = 4
    for k in range(n):
        sol = solve_bvp(n, k, X0)
        for l in range(k + 1):
            g = sol.gpoly(l, np.arange(-15, 15))
            assert np.abs(np.diff(g, k - l + 1)).max() < 1e-9 * max(1.0, np.abs(g).max())
        assert np.allclose(sol.table[k], sol.table[k][0] * 2.0 ** (sol.zs - sol.zs[0]))


def test_psi_step_data_is_finite():
    X0 = curve_of(step(5))
    v = psi(5, 2, 1.0, X0, np.arange(-12, 4))
    assert np.all(np.isfinite(v))
