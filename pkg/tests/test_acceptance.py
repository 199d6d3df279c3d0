"""Acceptance suite: the 13 criteria at their stated tolerances and runtimes.

Each criterion runs its experiment spec from specs/ through the same runner
the command line uses. A criterion passes when every row of its result table
has status ok and the wall time is within its budget. One PASS/FAIL line per
criterion is printed at the end of the pytest run, or directly when this
file is executed as a script.
"""

import sys
import time
from pathlib import Path

import pytest

from kpzfp.experiments_cli.runners import run_spec
from kpzfp.experiments_cli.spec import load_spec

SPECS = Path(__file__).resolve().parent.parent / "specs"

# (number, short title, runtime budget in seconds)
CRITERIA = [
    (1, "biorthogonality, 30 random X0, n <= 8, < 1e-10", 10),
    (2, "BVP and hitting routes for g0n agree to 1e-9", 30),
    (3, "three determinant routes agree to 1e-8", 60),
    (4, "Monte Carlo within 3 sigma; lone particle Poisson to 1e-8", 300),
    (5, "Schuetz formula for N = 2 step data to 1e-8", 30),
    (6, "step and periodic literature kernels to 1e-7", 60),
    (7, "narrow wedge kernel = Airy kernel, CDF self-convergence 1e-6", 60),
    (8, "flat one-point law = Ai(x+y+.) determinant to 1e-5", 120),
    (9, "half-flat one-point law at |x1| = 4 within 1e-3 of Airy1 / Airy2", 120),
    (10, "symmetries to 1e-5; max preservation, 0 violations in 1e4", 180),
    (11, "tail exponents 1.5 +- 0.15 (right) and 3.0 +- 0.3 (left)", 180),
    (12, "scaling convergence decreasing; discretizations agree", 600),
    (13, "cutoff decay and light cone; diffusion coefficient in [1.8, 2.2]", 600),
]

RESULTS = {}


def _summary(table):
    bad = table.failures()
    if not bad:
        return f"{len(table.rows)} rows ok"
    first = bad[0]
    keys = [k for k in ("check", "limit", "x", "s", "a", "value", "reference", "error")
            if first.get(k) not in (None, "")]
    detail = ", ".join(f"{k}={first[k]:.4g}" if isinstance(first[k], float) else f"{k}={first[k]}"
                       for k in keys)
    return f"{len(bad)}/{len(table.rows)} rows not ok; first: {detail}"


def run_criterion(num, budget):
    spec = load_spec(SPECS / f"criterion{num:02d}.ini")
    t0 = time.perf_counter()
    table = run_spec(spec)
    wall = time.perf_counter() - t0
    ok = table.ok and wall < budget
    note = _summary(table)
    if wall >= budget:
        note += f"; over budget ({wall:.0f} s >= {budget} s)"
    line = f"{'PASS' if ok else 'FAIL'} criterion {num:2d}: {note} [{wall:.1f} s]"
    return ok, line, table


@pytest.mark.slow
@pytest.mark.parametrize("num,title,budget", CRITERIA, ids=[f"criterion{c[0]:02d}" for c in CRITERIA])
def test_criterion(num, title, budget):
    ok, line, table = run_criterion(num, budget)
    RESULTS[num] = f"{line}  -- {title}"
    print(line)
    assert ok, line


def acceptance_lines():
    return [RESULTS[k] for k in sorted(RESULTS)]


if __name__ == "__main__":
    failed = 0
    for num, title, budget in CRITERIA:
        ok, line, _ = run_criterion(num, budget)
        print(f"{line}  -- {title}", flush=True)
        failed += not ok
    sys.exit(1 if failed else 0)
