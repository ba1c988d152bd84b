from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from tracelab.lens import (
    LensParams,
    ball_volume,
    contains,
    d_n_margin,
    lens_measures,
    scan_oracle,
    tau_ball,
)


@pytest.fixture(scope="module")
def opt():
    return tau_ball(2)


def test_params_validation():
    with pytest.raises(ValueError):
        LensParams(2, 3.0, 0.5)
    with pytest.raises(ValueError):
        LensParams(4, 1.0, 1.0)
    with pytest.raises(ValueError):
        LensParams(2, -1.0, 1.0)


def test_unit_circles_example():
    m = lens_measures(LensParams(2, 1.0, 1.0))
    assert m.interface == pytest.approx(4 * math.pi / 3, abs=1e-12)
    assert m.free_boundary == pytest.approx(2 * math.pi / 3, abs=1e-12)
    assert m.volume == pytest.approx(math.pi - (2 * math.pi / 3 - math.sqrt(3) / 2), abs=1e-12)
    rng = np.random.default_rng(1)
    pts = rng.uniform(-1, 1, (10**7, 2))
    frac = contains(LensParams(2, 1.0, 1.0), pts).mean()
    assert abs(4 * frac - m.volume) < 1e-3 * 4


def test_diameter_cut_limit():
    d = 1e7  # the arc bulges by 1/(2r), so the limit needs a large offset
    r = math.sqrt(d * d + 1.0)  # circle through (0, +-1): the chord is x1 = 0
    m = lens_measures(LensParams(2, d, r))
    assert m.interface == pytest.approx(math.pi, abs=1e-6)
    assert m.free_boundary == pytest.approx(2.0, abs=1e-6)
    assert m.volume == pytest.approx(math.pi / 2, abs=1e-6)


@settings(max_examples=200, deadline=None)
@given(st.sampled_from([2, 3]), st.floats(0.05, 20.0), st.floats(1e-6, 1 - 1e-6))
def test_measure_invariants(n, d, t):
    lo, hi = abs(d - 1.0), d + 1.0
    r = lo + t * (hi - lo)
    assume(abs(d - r) < 1.0 and d + r > 1.0 and r > 0)
    m = lens_measures(LensParams(n, d, r))
    assert abs(m.perimeter - (m.interface + m.free_boundary)) <= 1e-12 * max(1.0, m.perimeter)
    assert 0 < m.volume < ball_volume(n) + 1e-12
    assert m.phi < m.theta + 1e-12


def test_volume_monte_carlo():
    rng = np.random.default_rng(2)
    for _ in range(200):
        d = rng.uniform(0.1, 3.0)
        r = rng.uniform(abs(d - 1) + 0.01, d + 0.99)
        m = lens_measures(LensParams(2, d, r))
        pts = rng.uniform(-1, 1, (20000, 2))
        hit = contains(LensParams(2, d, r), pts)
        p = hit.mean()
        sigma = 4 * math.sqrt(p * (1 - p) / len(pts))
        assert abs(4 * p - m.volume) <= 3 * sigma + 1e-12


def test_n3_measures_monte_carlo():
    rng = np.random.default_rng(3)
    p = LensParams(3, 1.0, 0.8)
    m = lens_measures(p)
    pts = rng.uniform(-1, 1, (400000, 3))
    frac = contains(p, pts).mean()
    assert abs(8 * frac - m.volume) < 0.02


def test_tau_ball_reference(opt):
    assert 1.0 < opt.tau < 1 + 2 / math.pi
    assert opt.half_volume_residual <= 1e-8 * math.pi
    assert opt.measures.ratio == pytest.approx(opt.tau, rel=1e-12)


def test_tau_ball_tolerance_invariance(opt):
    other = tau_ball(2, tolerance=2e-12)
    assert abs(other.tau - opt.tau) <= 1e-9


def test_scan_oracle_agrees(opt):
    tau, d, r = scan_oracle(2, points=600)
    assert tau >= opt.tau * (1 - 1e-9)
    assert abs(tau - opt.tau) / opt.tau < 1e-6


def test_ratio_unimodal_along_constraint(opt):
    # ratio along |E| = pi/2 sampled on a log grid in d: one interior minimum
    from tracelab.lens import _half_volume_radius

    ds = np.exp(np.linspace(math.log(0.3), math.log(50.0), 200))
    vals = []
    for d in ds:
        r = _half_volume_radius(2, float(d), 1e-13)
        if r is not None:
            vals.append(lens_measures(LensParams(2, float(d), r)).ratio)
    v = np.array(vals)
    k = int(np.argmin(v))
    assert np.all(np.diff(v[: k + 1]) <= 1e-12)
    assert np.all(np.diff(v[k:]) >= -1e-12)
    assert v[k] >= opt.tau - 1e-9


def test_d_n_margin(opt):
    t = d_n_margin(opt)
    assert 0 < t < 1
    rng = np.random.default_rng(4)
    pts = rng.uniform(-1, 1, (10**6, 2))
    inside = pts[contains(opt.params, pts)]
    # no sampled point lies beyond the margin, and the margin is nearly reached
    assert inside[:, 0].min() >= -t - 1e-12
    assert inside[:, 0].min() <= -t + 0.02
