"""Half-moon sets ``B^n \\ closed B(P, r)`` and the analytic trace constant of the ball.

The cutting center ``P = (-d, 0, ...)`` sits on the negative first axis.  With
``alpha`` the angle at the origin between ``-e1`` and an intersection point ``Q``
and ``beta`` the angle at ``P`` between ``PO`` and ``PQ``::

    cos(alpha) = (d^2 + 1 - r^2) / (2 d)
    cos(beta)  = (d^2 + r^2 - 1) / (2 d r)

the interface (the part of the unit sphere kept) subtends ``pi - alpha`` on
each side of ``+e1`` and the free boundary is the cap of ``dB(P, r)`` of
half-angle ``beta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

__all__ = [
    "LensParams",
    "LensMeasures",
    "TauBallResult",
    "lens_measures",
    "lens_measures_array",
    "ball_volume",
    "sphere_area",
    "contains",
    "tau_ball",
    "scan_oracle",
    "d_n_margin",
    "ConvergenceError",
]

D_BRACKET = (0.05, 1.0e3)


class ConvergenceError(RuntimeError):
    pass


def ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def sphere_area(n: int) -> float:
    return n * ball_volume(n)


@dataclass(frozen=True)
class LensParams:
    n: int
    d: float
    r: float

    def __post_init__(self) -> None:
        if self.n not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.n}")
        if not (self.d > 0 and self.r > 0):
            raise ValueError("d and r must be positive")
        if not (abs(self.d - self.r) < 1.0 < self.d + self.r):
            raise ValueError(f"circles do not intersect: d={self.d}, r={self.r}")


@dataclass(frozen=True)
class LensMeasures:
    volume: float
    perimeter: float
    interface: float
    free_boundary: float
    phi: float
    theta: float

    @property
    def ratio(self) -> float:
        return self.perimeter / self.interface


def _triangle_area(d, r):
    """Area of the triangle with sides ``1, d, r`` by Kahan's stable Heron formula."""
    sides = np.sort(np.stack(np.broadcast_arrays(np.ones_like(d), d, r)), axis=0)
    c, b, a = sides[0], sides[1], sides[2]
    q = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c))
    return 0.25 * np.sqrt(np.maximum(q, 0.0))


def _angles(d, r):
    """Half-angles ``(alpha, beta)`` of the common chord seen from O and from P."""
    k4 = 4.0 * _triangle_area(d, r)
    alpha = np.arctan2(k4, (d - r) * (d + r) + 1.0)
    beta = np.arctan2(k4, d * d + r * r - 1.0)
    return alpha, beta


def _segment(x):
    """``x - sin x cos x``: twice the area of a unit-circle segment of half-angle ``x``."""
    x = np.asarray(x, dtype=float)
    small = x < 1e-2
    xs = np.where(small, x, 0.0)
    # 2x^3/3 - 2x^5/15 + 4x^7/315 - 2x^9/2835, accurate to 1e-22 relative below 1e-2
    series = xs**3 * (2.0 / 3.0 - xs * xs * (2.0 / 15.0 - xs * xs * (4.0 / 315.0 - xs * xs * 2.0 / 2835.0)))
    return np.where(small, series, x - 0.5 * np.sin(2.0 * x))


def lens_measures_array(n: int, d, r):
    """Vectorised ``(volume, interface, free_boundary)``; caller ensures intersection."""
    d = np.asarray(d, dtype=float)
    r = np.asarray(r, dtype=float)
    alpha, beta = _angles(d, r)
    if n == 2:
        # the lens is the union of a unit-circle segment and a radius-r segment
        cut = _segment(alpha) + r * r * _segment(beta)
        volume = math.pi - cut
        interface = 2.0 * math.pi - 2.0 * alpha
        free = 2.0 * r * beta
    elif n == 3:
        s1 = np.sin(0.5 * alpha)
        s2 = np.sin(0.5 * beta)
        h1 = 2.0 * s1 * s1
        h2 = 2.0 * r * s2 * s2
        cut = math.pi * h1 * h1 * (3.0 - h1) / 3.0 + math.pi * h2 * h2 * (3.0 * r - h2) / 3.0
        volume = 4.0 * math.pi / 3.0 - cut
        interface = 2.0 * math.pi * (1.0 + np.cos(alpha))
        free = 2.0 * math.pi * r * h2
    else:
        raise ValueError(f"dimension must be 2 or 3, got {n}")
    return volume, interface, free


def lens_measures(p: LensParams) -> LensMeasures:
    alpha, beta = (float(a) for a in _angles(p.d, p.r))
    volume, interface, free = (float(v) for v in lens_measures_array(p.n, p.d, p.r))
    return LensMeasures(
        volume=volume,
        perimeter=interface + free,
        interface=interface,
        free_boundary=free,
        phi=beta,
        theta=math.pi - alpha,
    )


def contains(p: LensParams, points: np.ndarray) -> np.ndarray:
    """Membership in the open half-moon for an ``(m, n)`` array of points."""
    pts = np.asarray(points, dtype=float)
    sq = np.sum(pts * pts, axis=-1)
    shifted = pts.copy()
    shifted[..., 0] += p.d
    return (sq < 1.0) & (np.sum(shifted * shifted, axis=-1) > p.r * p.r)


@dataclass(frozen=True)
class TauBallResult:
    tau: float
    params: LensParams
    measures: LensMeasures
    half_volume_residual: float
    evaluations: int = 0

    def to_dict(self) -> dict:
        m = self.measures
        return {
            "tau": self.tau,
            "n": self.params.n,
            "d": self.params.d,
            "r": self.params.r,
            "phi": m.phi,
            "theta": m.theta,
            "volume": m.volume,
            "interface": m.interface,
            "free_boundary": m.free_boundary,
            "half_volume_residual": self.half_volume_residual,
        }


def _r_interval(d: float) -> tuple[float, float]:
    return abs(d - 1.0), d + 1.0


def _half_volume_radius(n: int, d: float, tol: float) -> float | None:
    """Cutting radius with ``|E| = |B|/2`` at offset ``d``; None when unreachable.

    ``|E|`` is strictly decreasing in ``r`` on the intersecting range.
    """
    target = 0.5 * ball_volume(n)
    lo, hi = _r_interval(d)
    f = lambda r: float(lens_measures_array(n, d, r)[0]) - target  # noqa: E731
    flo = f(lo)
    if not flo > 0.0:
        return None
    return optimize.brentq(f, lo, hi, xtol=tol * min(1.0, d), rtol=4 * np.finfo(float).eps, maxiter=500)


def _golden(f, a: float, b: float, xtol: float, max_iter: int) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    e = a + invphi * (b - a)
    fc, fe = f(c), f(e)
    for _ in range(max_iter):
        if b - a <= xtol:
            return 0.5 * (a + b)
        if fc <= fe:
            b, e, fe = e, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, e, fe
            e = a + invphi * (b - a)
            fe = f(e)
    raise ConvergenceError(f"golden-section search did not reach xtol={xtol} in {max_iter} steps")


def _chord_limit(n: int) -> float:
    # straight cut through the center: the hemisphere over the equatorial disk
    if n == 2:
        return (math.pi + 2.0) / math.pi
    return (2.0 * math.pi + math.pi) / (2.0 * math.pi)


def tau_ball(n: int = 2, tolerance: float = 1e-12, max_iter: int = 500) -> TauBallResult:
    """Minimise ``P(E)/H(dE n S)`` over half-moons on the manifold ``|E| = |B|/2``.

    The radius is eliminated by root finding, then ``log d`` is searched by a
    coarse bracket followed by golden-section refinement.
    """
    if n not in (2, 3):
        raise ValueError(f"dimension must be 2 or 3, got {n}")
    evals = 0

    def ratio(logd: float) -> float:
        nonlocal evals
        evals += 1
        d = math.exp(logd)
        r = _half_volume_radius(n, d, tolerance)
        if r is None:
            return math.inf
        vol, inter, free = lens_measures_array(n, d, r)
        return float((inter + free) / inter)

    lo, hi = math.log(D_BRACKET[0]), math.log(D_BRACKET[1])
    grid = np.linspace(lo, hi, 401)
    vals = np.array([ratio(t) for t in grid])
    k = int(np.argmin(vals))
    if not math.isfinite(vals[k]):
        raise ConvergenceError("no half-volume configuration in the d bracket")
    a = grid[max(k - 1, 0)]
    b = grid[min(k + 1, len(grid) - 1)]
    x = _golden(ratio, a, b, xtol=1e-11, max_iter=max_iter)
    d = math.exp(x)
    r = _half_volume_radius(n, d, tolerance)
    if r is None:
        raise ConvergenceError("optimum left the feasible range")
    params = LensParams(n, d, r)
    meas = lens_measures(params)
    tau = meas.perimeter / meas.interface
    if tau > _chord_limit(n):
        raise ConvergenceError("optimizer did not beat the straight-cut competitor")
    return TauBallResult(
        tau=tau,
        params=params,
        measures=meas,
        half_volume_residual=abs(meas.volume - 0.5 * ball_volume(n)),
        evaluations=evals,
    )


def scan_oracle(n: int = 2, points: int = 2000, zooms: int = 12, shrink: float = 3.0) -> tuple[float, float, float]:
    """Brute-force minimum of the ratio over a log-spaced ``(d, r)`` grid.

    Feasible points are those with ``|E| <= |B|/2``.  The first pass covers the
    whole bracket; each zoom re-scans a window ``shrink`` times narrower around
    the incumbent.  Returns ``(tau, d, r)``.
    """
    half = 0.5 * ball_volume(n)
    ld = np.linspace(math.log(D_BRACKET[0]), math.log(D_BRACKET[1]), points)
    lr = np.linspace(math.log(1e-3), math.log(D_BRACKET[1] + 1.0), points)
    best = (math.inf, math.nan, math.nan)
    for z in range(zooms + 1):
        D, R = np.meshgrid(np.exp(ld), np.exp(lr), indexing="ij")
        ok = (np.abs(D - R) < 1.0) & (1.0 < D + R)
        vol, inter, free = lens_measures_array(n, np.where(ok, D, 2.0), np.where(ok, R, 2.0))
        ok &= (vol <= half) & (vol > 0) & (inter > 0)
        val = np.where(ok, (inter + free) / np.where(inter > 0, inter, 1.0), np.inf)
        k = np.unravel_index(int(np.argmin(val)), val.shape)
        if val[k] < best[0]:
            best = (float(val[k]), float(D[k]), float(R[k]))
        wd = (ld[-1] - ld[0]) / shrink
        wr = (lr[-1] - lr[0]) / shrink
        cd, cr = math.log(best[1]), math.log(best[2])
        ld = np.linspace(cd - wd / 2, cd + wd / 2, points)
        lr = np.linspace(cr - wr / 2, cr + wr / 2, points)
    return best


def d_n_margin(result: TauBallResult, tol: float = 1e-14) -> float:
    """Supremum of ``t`` such that the optimal half-moon meets ``{x1 <= -t}``.

    Decided by bisection on whether the line ``x1 = -t`` crosses the half-moon.
    """
    p = result.params

    def meets(t: float) -> bool:
        if abs(t) >= 1.0:
            return False
        half_chord = math.sqrt(1.0 - t * t)
        off = -t + p.d  # signed offset of the line from P
        if abs(off) >= p.r:
            return True
        return half_chord > math.sqrt(p.r * p.r - off * off)

    lo, hi = -1.0, 1.0
    if not meets(lo + 1e-12):
        raise ConvergenceError("half-moon does not meet the left half of the ball")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if meets(mid):
            lo = mid
        else:
            hi = mid
    return lo
