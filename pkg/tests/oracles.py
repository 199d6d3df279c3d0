"""Independent reference values for the one-point laws.

Tracy-Widom distributions from the Hastings-McLeod solution of Painleve II,
integrated with scipy from the Airy asymptotics at large s. This route shares
no code with the Fredholm determinant evaluations it checks.
"""

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.special import airy

S0 = 6.0


def _painleve(s_end):
    ai, aip, _, _ = airy(S0)
    # tails beyond S0, where q = Ai up to O(Ai^3)
    A = lambda x: airy(x)[0]
    u0 = quad(lambda x: A(x) ** 2, S0, np.inf, epsabs=1e-18)[0]
    w0 = quad(lambda x: (x - S0) * A(x) ** 2, S0, np.inf, epsabs=1e-18)[0]
    v0 = quad(A, S0, np.inf, epsabs=1e-18)[0]

    def rhs(s, y):
        q, qp, u, w, v = y
        return [qp, s * q + 2 * q ** 3, -q * q, -u, -q]

    sol = solve_ivp(rhs, (S0, s_end), [ai, aip, u0, w0, v0], rtol=1e-12, atol=1e-14,
                    method="DOP853")
    return sol.y[:, -1]


def tw_gue(s):
    """F_GUE(s) = exp(-int_s^inf (x - s) q(x)^2 dx)."""
    _, _, _, w, _ = _painleve(s)
    return float(np.exp(-w))


def tw_goe(s):
    """F_GOE(s) = exp(-1/2 int_s^inf q) F_GUE(s)^{1/2}."""
    _, _, _, w, v = _painleve(s)
    return float(np.exp(-0.5 * v - 0.5 * w))
