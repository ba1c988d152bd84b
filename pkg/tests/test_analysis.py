from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from helpers import symmetries

from tracelab.analysis import (
    CenterTooClose,
    auto_center,
    ball_separation_refute,
    classify,
    deficit_asymmetry,
    density_constant,
    distance_field,
    john_constant,
    john_feasible,
    mazya_constant,
    separated,
)
from tracelab.construction import (
    OmegaDeltaSpec,
    construction_bounds,
    distance_to_boundary,
    generate_family,
    rasterize_omega,
)
from tracelab.geometry import GridDomain, disk, rectangle
from tracelab.lens import tau_ball
from tracelab.solver import DisconnectedDomain


def strip(l: int, cells: int = 16) -> GridDomain:
    """The rectangle ``[0, l] x [0, 1]`` with ``cells`` cells across its width."""
    return rectangle(l * cells, cells, spacing=1 / cells)


@pytest.fixture(scope="module")
def omega_family():
    return generate_family(OmegaDeltaSpec(2, 0.2, 2, 4))


@pytest.fixture(scope="module")
def omega(omega_family):
    dom, _ = rasterize_omega(omega_family, 256)
    return dom


def test_distance_field():
    d = disk(64)
    f = distance_field(d)
    c = auto_center(d, f)
    assert f[c] == pytest.approx(1.0, abs=2 * d.spacing)
    assert np.all(f[~d.mask] == 0)
    exact = distance_field(d, lambda p: 1 - np.linalg.norm(p, axis=1))
    assert np.abs(f - exact)[d.mask].max() <= 1.5 * d.spacing


def test_disk_john_constant():
    rep = john_constant(disk(128))
    assert rep.J_lo < rep.J_hi <= 1.2
    assert rep.J_hi - rep.J_lo <= 0.01 * rep.J_hi
    assert rep.monotone
    assert rep.r0 == pytest.approx(1.0, abs=0.02)


@pytest.mark.parametrize("l", [2, 4, 8])
def test_rectangle_john_constant(l):
    e = strip(l)
    rep = john_constant(e, density=False)
    assert l - 1 <= rep.J_hi <= l + 2
    assert rep.monotone


def test_john_monotone_in_J():
    e = strip(4)
    dist = distance_field(e)
    c = auto_center(e, dist)
    flags = [john_feasible(e, c, J, dist) for J in np.linspace(0.5, 10, 40)]
    first = flags.index(True)
    assert all(flags[first:]) and not any(flags[:first])


def test_john_symmetry_invariance():
    e = strip(3, 12)
    ref = john_constant(e, density=False).J_bracket
    for m in symmetries(e.mask):
        rep = john_constant(GridDomain(m, e.spacing), density=False)
        assert rep.J_bracket == pytest.approx(ref, rel=1e-12)


def test_john_errors():
    with pytest.raises(CenterTooClose):
        john_constant(rectangle(3, 3))
    with pytest.raises(CenterTooClose):
        john_constant(disk(32), center=(0, 0))
    two = np.zeros((8, 20), bool)
    two[1:7, 1:7] = two[1:7, 12:19] = True
    with pytest.raises(DisconnectedDomain):
        john_constant(GridDomain(two))


def test_omega_delta_john_bound(omega_family, omega):
    fam = omega_family
    rep = john_constant(omega, analytic=lambda p: distance_to_boundary(fam, p), density=False)
    rows = construction_bounds(fam).generations
    # the deepest represented generation forces J of order 2^-(k+2) k!/sqrt(2)
    k = 4
    assert rep.J_hi >= 0.5 * rows[k - 2].john_ratio
    assert rep.monotone


def test_density_constant():
    d = disk(128)
    c_h = density_constant(d, 0.9)
    assert 1.5 <= c_h <= 2 + 0.3
    s = strip(8, 32)
    # a ball on an edge, r/sqrt(2) from a corner, meets r(1 + sqrt(2)) of boundary
    assert density_constant(s, 0.45) == pytest.approx(1 + math.sqrt(2), rel=0.05)
    with pytest.raises(ValueError):
        density_constant(d, 2 * d.spacing)


def test_no_separation_failure_on_disk():
    assert ball_separation_refute(disk(64), S=2.0, samples=24) is None


def test_separation_witness_on_omega(omega_family, omega):
    fam = omega_family
    dist_fn = lambda p: distance_to_boundary(fam, p)  # noqa: E731
    rep = john_constant(omega, analytic=dist_fn, density=False)
    S = 0.5 * rep.J_hi
    w = ball_separation_refute(omega, rep.center, S=S, samples=64, J=rep.J_hi, analytic=dist_fn)
    assert w is not None
    # the witness is re-checked independently: y sits outside the ball and is not cut off from the center
    h = omega.spacing
    d_y = math.dist(w.y, w.eta) * h
    assert d_y >= w.radius
    assert not separated(omega, rep.center, w.eta, w.radius, w.y)
    # with a ball wider than any prefix, nothing can fail
    assert ball_separation_refute(omega, rep.center, S=10 * rep.J_hi, samples=16, J=rep.J_hi, analytic=dist_fn) is None


def test_separated():
    e = strip(4, 4)
    c = (2, 14)
    # radius 2.8 cells spans the four-cell strip; 0.4 cells leaves a way around
    assert separated(e, c, (2, 8), 0.7, (2, 1))
    assert not separated(e, c, (2, 8), 0.1, (2, 1))


def test_deficit_examples():
    d = deficit_asymmetry(disk(256))
    assert abs(d.deficit) < 0.01 * 2 * math.pi
    assert d.asymmetry < 0.01 * math.pi
    sq = deficit_asymmetry(rectangle(128, 128, spacing=math.sqrt(math.pi) / 128))
    assert sq.deficit == pytest.approx(4 * math.sqrt(math.pi) - 2 * math.pi, rel=0.02)
    assert sq.asymmetry > 0
    assert sq.center == pytest.approx((0.0, 0.0), abs=math.sqrt(math.pi) / 128)


def test_deficit_on_omega(omega_family, omega):
    rep = deficit_asymmetry(omega)
    deleted = float(np.sum(math.pi * omega_family.deleted**2))
    h = omega.spacing
    # the boundary cells of the outer disk add a lattice error of order h
    assert rep.asymmetry <= deleted + 2 * math.pi * h * 1.5


def test_mazya_examples():
    sq = mazya_constant(rectangle(2, 2))
    assert sq.certified_exact == Fraction(2)
    assert sq.bruteforce <= sq.certified
    dom = mazya_constant(rectangle(2, 1))
    assert dom.certified_exact == Fraction(3)
    assert dom.bruteforce_exact == Fraction(3)


def test_mazya_on_disk():
    ref = tau_ball(2).tau
    rep = mazya_constant(disk(64), volume_mode="dinkelbach")
    assert rep.bruteforce is None
    assert rep.certified == pytest.approx(1 / (ref - 1), rel=0.05)


def test_classify():
    r = classify(disk(32))
    out = r.to_dict()
    assert out["john"]["J_hi"] <= 1.3
    assert set(out) >= {"tau", "mazya_certified", "john", "deficit", "asymmetry", "C_H", "r0"}
    small = classify(rectangle(2, 2)).to_dict()
    assert small["john"] is None and small["mazya_bruteforce"] == 2.0
    with pytest.raises(CenterTooClose):
        classify(rectangle(2, 2), center=(1, 1))
