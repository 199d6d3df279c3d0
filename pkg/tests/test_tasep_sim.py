"""TASEP simulation: presets, sampling, coupling and estimators."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import poisson

from kpzfp.errors import DomainError, InsufficientDataError, InvalidConfigError
from kpzfp.tasep_sim import (EventLog, ParticleConfig, attractivity_check,
                             bernoulli_invariance_check, empirical_multipoint, evolve, flat,
                             half_flat, heights_batch, increment_statistics,
                             max_preservation_check, narrow_wedge, periodic, preset,
                             reference_label, sample_positions, skew_time_reversal_check, step)


def test_presets():
    assert step(3).positions == (-1, -2, -3)
    assert periodic(2).positions == (2, 0, -2, -4)
    assert half_flat(3).positions == (-1, -3, -5)
    assert flat(3, first=-1).positions == (3, 1, -1)
    assert preset("step", n=2).positions == (-1, -2)
    b = narrow_wedge(0.04, 12, "blocks")
    assert b.positions[:5] == (-1, -2, -3, -4, -5) and b.positions[5] == -11
    with pytest.raises(DomainError):
        preset("nope")


def test_config_validation_and_inverse():
    with pytest.raises(InvalidConfigError):
        ParticleConfig.of([0, 1])
    c = ParticleConfig.of([3, 1, -2], first=0)
    assert c.X(-1) == np.inf and c.X(1) == 1
    assert c.inverse(1) == 1 and c.inverse(5) == 0
    assert ParticleConfig.of([0]).X(4) == -np.inf
    with pytest.raises(InsufficientDataError):
        step(3).X(4)


@given(st.floats(0.1, 3.0))
@settings(max_examples=5, deadline=None)
def test_lone_particle_is_poisson(t):
    # [DERIVED] a lone particle jumps at rate 1
    pos = sample_positions(ParticleConfig.of([0]), t, 40000, 3)[:, 0]
    for k in range(4):
        p = float(np.mean(pos >= k))
        ref = float(poisson.sf(k - 1, t))
        assert abs(p - ref) < 5 * np.sqrt(ref * (1 - ref) / 40000) + 1e-12


def test_sampling_is_thread_count_independent():
    a = sample_positions(step(8), 1.5, 5000, 11, threads=1)
    b = sample_positions(step(8), 1.5, 5000, 11, threads=4)
    assert np.array_equal(a, b)


def test_exclusion_is_preserved():
    pos = sample_positions(step(10), 3.0, 2000, 5)
    assert np.all(np.diff(pos, axis=1) < 0)


def test_event_log_replays_to_final_state():
    cfg = ParticleConfig.of([4, 2, 1, -3])
    final, log = evolve(cfg, 2.0, 9)
    assert len(log) > 0
    assert log.replay(cfg) == final
    bad = EventLog([0.1, 0.2], [1, 1], [4, 4])
    with pytest.raises(InvalidConfigError):
        bad.replay(cfg)


def test_heights_of_step_data():
    # [DERIVED] h_0(z) = -|z| for step data, a downward wedge
    cfg = step(20)
    zs = np.arange(-5, 6)
    H = heights_batch(cfg.array[None, :], cfg.first, reference_label(cfg), zs)
    assert np.array_equal(H[0], -np.abs(zs))


def test_empirical_multipoint_rejects_zero_samples():
    with pytest.raises(DomainError):
        empirical_multipoint(step(3), 1.0, [(1, 0)], 0, 1)


def _walk(rng, start, w):
    return np.concatenate([[start], start + np.cumsum(rng.choice([-1, 1], size=w - 1))])


def test_max_preservation_and_attractivity():
    rng = np.random.default_rng(4)
    f1, f2 = _walk(rng, 0, 31), _walk(rng, 2, 31)
    assert max_preservation_check(f1, f2, 1.5, 2000, 7) == 0
    lo = np.minimum(f1, f2)
    hi = np.maximum(f1, f2)
    assert attractivity_check(lo, hi, 1.5, 2000, 8) == 0
    with pytest.raises(InvalidConfigError):
        max_preservation_check(f1, 2 * f1, 1.0, 10, 1)


def test_skew_time_reversal_monte_carlo():
    w = 41
    z = np.arange(w) - w // 2
    f = np.abs(z)
    g = np.abs(z) + 6
    (p1, s1), (p2, s2) = skew_time_reversal_check(f, g, 2.0, 6000, 13)
    assert abs(p1 - p2) < 4 * np.hypot(s1, s2)


def test_bernoulli_product_measure_is_invariant():
    out = bernoulli_invariance_check(0.3, (0, 9), 1.0, 6000, 2)
    for key, ref in (("one", 0.3), ("two", 0.09)):
        m, se = out["t"][key], out["t"][key + "_se"]
        assert np.all(np.abs(m - ref) < 5 * se)


def test_increment_statistics_step_at_time_zero():
    # [TRIVIAL] at t = 0 step heights have |h(z + d) - h(z)| = d for z >= 0
    rows = increment_statistics(step(40), 0.0, 0, [1, 3], 10, 1)
    assert [(d, m) for d, m, _ in rows] == [(1, 1.0), (3, 9.0)]
