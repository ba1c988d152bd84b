"""Domain classification on the grid.

John constants by exact label-setting feasibility, boundary density, a
heuristic ball-separation refuter, isoperimetric deficit and asymmetry, and
the Maz'ya constant implied by the trace constant.

John curves are 8-connected lattice paths with Euclidean step lengths; a
diagonal step needs both side cells in the domain.  For a trial constant
``J`` the label

    S(y) = min(J d(y), max_w S(w) - |y - w|),    S(x0) = J d(x0),

is the largest prefix length with which a curve can arrive at ``y`` and still
reach the center.  Labels only decrease along steps, so a max-heap settles
each cell once and the search is exact on the lattice graph.  A cell ``x`` has
a John curve iff ``S(x) >= 0``.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numba
import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .geometry import GridDomain, Metric, cell_centers, metric_offsets, perimeter
from .solver import (
    DisconnectedDomain,
    Exactness,
    TauResult,
    is_connected,
    mazya_ratio_bruteforce_exact,
    tau_grid,
)

__all__ = [
    "CenterTooClose",
    "JohnReport",
    "DeficitReport",
    "MazyaReport",
    "SeparationWitness",
    "AnalysisReport",
    "distance_field",
    "auto_center",
    "john_labels",
    "john_feasible",
    "john_constant",
    "density_constant",
    "ball_separation_refute",
    "separated",
    "deficit_asymmetry",
    "mazya_constant",
    "classify",
]

DistanceFn = Callable[[np.ndarray], np.ndarray]


class CenterTooClose(ValueError):
    pass


# --------------------------------------------------------------------------- distances


def distance_field(omega: GridDomain, analytic: DistanceFn | None = None) -> np.ndarray:
    """Distance from each cell center of the domain to its boundary; 0 outside.

    Without ``analytic`` the boundary sits half a cell beyond the last cell
    center, measured with an exact Euclidean distance transform.  ``analytic``
    maps an ``(m, 2)`` array of points to their exact distances.
    """
    mask = omega.mask
    out = np.zeros(mask.shape)
    if analytic is None:
        edt = ndimage.distance_transform_edt(np.pad(mask, 1))[1:-1, 1:-1]
        out[mask] = (edt[mask] - 0.5) * omega.spacing
        return out
    x, y = cell_centers(mask.shape, omega.spacing)
    pts = np.column_stack([x[mask], y[mask]])
    out[mask] = np.maximum(np.asarray(analytic(pts), dtype=float), 0.0)
    return out


def auto_center(omega: GridDomain, dist: np.ndarray | None = None) -> tuple[int, int]:
    """Deepest cell; ties go to the one nearest the array middle, then row-major."""
    d = distance_field(omega) if dist is None else dist
    best = d.max()
    ii, jj = np.nonzero(d >= best - 1e-12 * max(best, 1.0))
    mid_i, mid_j = (omega.height - 1) / 2, (omega.width - 1) / 2
    k = min(range(ii.size), key=lambda t: ((ii[t] - mid_i) ** 2 + (jj[t] - mid_j) ** 2, ii[t], jj[t]))
    return int(ii[k]), int(jj[k])


# --------------------------------------------------------------------------- John


@numba.njit(cache=True)
def _labels(ok, dist, J, ci, cj, h):  # pragma: no cover - compiled
    hgt, wid = ok.shape
    S = np.full((hgt, wid), -np.inf)
    parent = np.full((hgt, wid), -1, np.int64)
    done = np.zeros((hgt, wid), np.bool_)
    diag = h * math.sqrt(2.0)
    S[ci, cj] = J * dist[ci, cj]
    heap = [(-S[ci, cj], ci * wid + cj)]
    while len(heap) > 0:
        negs, k = heapq.heappop(heap)
        i = k // wid
        j = k - i * wid
        if done[i, j]:
            continue
        done[i, j] = True
        s = -negs
        for di in range(-1, 2):
            for dj in range(-1, 2):
                if di == 0 and dj == 0:
                    continue
                a = i + di
                b = j + dj
                if a < 0 or a >= hgt or b < 0 or b >= wid:
                    continue
                if not ok[a, b] or done[a, b]:
                    continue
                if di != 0 and dj != 0:
                    if not (ok[i, b] and ok[a, j]):
                        continue
                    step = diag
                else:
                    step = h
                v = min(J * dist[a, b], s - step)
                if v > S[a, b]:
                    S[a, b] = v
                    parent[a, b] = k
                    if v >= 0.0:
                        heapq.heappush(heap, (-v, a * wid + b))
    return S, parent


def john_labels(omega: GridDomain, center: tuple[int, int], J: float, dist: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Labels ``S`` and parent pointers (flat indices, -1 for none) at constant ``J``."""
    ci, cj = center
    return _labels(omega.mask, dist, float(J), int(ci), int(cj), float(omega.spacing))


def john_feasible(omega: GridDomain, center: tuple[int, int], J: float, dist: np.ndarray) -> bool:
    S, _ = john_labels(omega, center, J, dist)
    return bool(np.all(S[omega.mask] >= 0.0))


@dataclass(frozen=True)
class JohnReport:
    center: tuple[int, int]
    r0: float
    J_bracket: tuple[float, float]
    witness_point: tuple[int, int]
    C_H: float
    evaluations: int = 0
    monotone: bool = True

    @property
    def J_lo(self) -> float:
        return self.J_bracket[0]

    @property
    def J_hi(self) -> float:
        return self.J_bracket[1]

    def to_dict(self) -> dict:
        return {
            "center": list(self.center),
            "r0": self.r0,
            "J_lo": self.J_bracket[0],
            "J_hi": self.J_bracket[1],
            "witness_point": list(self.witness_point),
            "C_H": self.C_H,
            "evaluations": self.evaluations,
            "monotone": self.monotone,
        }


def _resolve_center(omega: GridDomain, center, dist: np.ndarray) -> tuple[int, int]:
    if center is None or center == "auto":
        return auto_center(omega, dist)
    i, j = (int(c) for c in center)
    if not (0 <= i < omega.height and 0 <= j < omega.width) or not omega.mask[i, j]:
        raise CenterTooClose(f"center {center} is not a cell of the domain")
    return i, j


def john_constant(
    omega: GridDomain,
    center: tuple[int, int] | str | None = "auto",
    analytic: DistanceFn | None = None,
    rel_width: float = 0.01,
    density: bool = True,
    max_J: float = 1e6,
) -> JohnReport:
    """Bracket the least ``J`` for which every cell has a lattice John curve.

    Bisection stops once the bracket is narrower than ``rel_width * J_hi``.
    The witness is the infeasible cell at ``J_lo`` that came closest to a
    curve.  ``C_H`` is :func:`density_constant` up to the inradius, or nan when
    ``density`` is off or the inradius is below four cells.
    """
    if not omega.mask.any():
        raise DisconnectedDomain("empty domain")
    if not is_connected(omega.mask):
        raise DisconnectedDomain("the domain is not 4-connected")
    dist = distance_field(omega, analytic)
    c = _resolve_center(omega, center, dist)
    h = omega.spacing
    r0 = float(dist[c])
    if r0 < 2 * h - 1e-12 * h:
        raise CenterTooClose(f"center {c} is {r0 / h:.3g} cells from the boundary, need 2")
    evals = 0

    def feasible(J: float) -> bool:
        nonlocal evals
        evals += 1
        return john_feasible(omega, c, J, dist)

    # J < 2/3 always fails next to the boundary; start the bracket there
    lo, hi = 0.5, 1.0
    while feasible(hi) is False:
        lo, hi = hi, 2 * hi
        if hi > max_J:
            raise DisconnectedDomain(f"no John constant below {max_J}")
    if feasible(lo):
        raise AssertionError("a constant of 1/2 cannot be feasible next to the boundary")
    while hi - lo > rel_width * hi:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    S, _ = john_labels(omega, c, lo, dist)
    bad = omega.mask & (S < 0)
    score = np.where(bad, S, -np.inf)
    flat = int(np.argmax(score)) if np.isfinite(score).any() else int(np.argmax(bad))
    witness = (flat // omega.width, flat % omega.width)
    monotone = feasible(1.1 * hi) and not feasible(0.9 * lo)
    C_H = math.nan
    if density and r0 > 4 * h:
        C_H = density_constant(omega, r0)
    return JohnReport(c, r0, (lo, hi), witness, C_H, evals, monotone)


# --------------------------------------------------------------------------- density


def _boundary_pairs(omega: GridDomain):
    """Endpoints (row, col) of each boundary pair and its length."""
    mask = omega.mask
    pad = 2
    p = np.pad(mask, pad)
    a_pts, b_pts, lens = [], [], []
    for (dy, dx), w in metric_offsets(omega.metric):
        hp, wp = p.shape
        ys, yt = slice(0, hp - dy), slice(dy, hp)
        if dx >= 0:
            xs, xt = slice(0, wp - dx), slice(dx, wp)
        else:
            xs, xt = slice(-dx, wp), slice(0, wp + dx)
        cut = p[ys, xs] != p[yt, xt]
        ii, jj = np.nonzero(cut)
        ii0 = ii + ys.start - pad
        jj0 = jj + xs.start - pad
        a_pts.append(np.column_stack([ii0, jj0]))
        b_pts.append(np.column_stack([ii0 + dy, jj0 + dx]))
        weight = 1.0 if omega.metric is Metric.L1 else w
        lens.append(np.full(ii.size, weight * omega.spacing))
    return np.concatenate(a_pts), np.concatenate(b_pts), np.concatenate(lens)


def density_constant(omega: GridDomain, r0: float) -> float:
    """``sup H(boundary in B(x, r)) / r`` over boundary cells and dyadic ``r`` in ``[4h, r0)``.

    A pair lies in ``B(x, r)`` when both of its cell centers do, matching the
    windowed perimeter with the window set to the ball's cells.
    """
    h = omega.spacing
    if r0 <= 4 * h:
        raise ValueError(f"r0 = {r0} must exceed four cells ({4 * h})")
    a, b, w = _boundary_pairs(omega)
    if w.size == 0:
        raise ValueError("the domain has no boundary")
    inside = np.zeros(len(a), dtype=bool)
    shape = omega.mask.shape
    valid_a = (a[:, 0] >= 0) & (a[:, 0] < shape[0]) & (a[:, 1] >= 0) & (a[:, 1] < shape[1])
    inside[valid_a] = omega.mask[a[valid_a, 0], a[valid_a, 1]]
    owner = np.where(inside[:, None], a, b)
    cells = np.unique(owner, axis=0).astype(float)
    mid = 0.5 * (a + b)
    tree = cKDTree(mid)
    radii = []
    r = 4 * h
    while r < r0:
        radii.append(r)
        r *= 2
    best = 0.0
    a_f, b_f = a.astype(float), b.astype(float)
    for r in radii:
        rr = r / h
        for x, hits in zip(cells, tree.query_ball_point(cells, rr)):
            if not hits:
                continue
            hits = np.asarray(hits)
            da = np.sum((a_f[hits] - x) ** 2, axis=1)
            db = np.sum((b_f[hits] - x) ** 2, axis=1)
            keep = (da < rr * rr) & (db < rr * rr)
            best = max(best, float(w[hits[keep]].sum()) / r)
    return best


# --------------------------------------------------------------------------- ball separation


@dataclass(frozen=True)
class SeparationWitness:
    z: tuple[int, int]
    eta: tuple[int, int]
    y: tuple[int, int]
    radius: float

    def to_dict(self) -> dict:
        return {"z": list(self.z), "eta": list(self.eta), "y": list(self.y), "radius": self.radius}


def separated(omega: GridDomain, center: tuple[int, int], eta: tuple[int, int], radius: float, y: tuple[int, int]) -> bool:
    """Whether ``y`` lies in a different component of the domain minus the sphere than ``center``.

    The sphere splits the lattice into cells strictly inside and cells
    strictly outside the ball; components are 4-connected.
    """
    h = omega.spacing
    ii, jj = np.indices(omega.mask.shape)
    r2 = ((ii - eta[0]) ** 2 + (jj - eta[1]) ** 2) * h * h
    outside = omega.mask & (r2 > radius * radius)
    inner = omega.mask & (r2 < radius * radius)
    for part in (outside, inner):
        if part[y] and part[center]:
            lab, _ = ndimage.label(part)
            return bool(lab[y] != lab[center])
    return True


def _path(parent: np.ndarray, start: tuple[int, int]) -> list[tuple[int, int]]:
    wid = parent.shape[1]
    out = [start]
    k = int(parent[start])
    while k >= 0:
        cell = (k // wid, k % wid)
        out.append(cell)
        k = int(parent[cell])
    return out


def ball_separation_refute(
    omega: GridDomain,
    center: tuple[int, int] | str | None = "auto",
    S: float = 2.0,
    samples: int = 32,
    seed: int = 0,
    J: float | None = None,
    analytic: DistanceFn | None = None,
) -> SeparationWitness | None:
    """Search the label-setting John curves for a ball-separation violation.

    Curves come from the parent pointers at constant ``J`` (by default the
    upper end of the John bracket).  Along the curve from a sampled ``z``,
    every ``eta`` is tested: either the whole prefix lies in
    ``B(eta, S d(eta))``, or each prefix cell outside it must be separated
    from the center.  Returns the first failing ``(z, eta, y)`` or None.
    A witness only refutes the tested curves.
    """
    dist = distance_field(omega, analytic)
    c = _resolve_center(omega, center, dist)
    if J is None:
        J = john_constant(omega, c, analytic, density=False).J_hi
    labels, parent = john_labels(omega, c, J, dist)
    ok = omega.mask & (labels >= 0)
    cells = np.argwhere(ok)
    rng = np.random.default_rng(seed)
    # the cells closest to the boundary are the likeliest witnesses; add a random sample
    order = np.argsort(dist[ok], kind="stable")
    picks = list(order[: samples // 2]) + list(rng.choice(len(cells), size=min(samples - samples // 2, len(cells)), replace=False))
    h = omega.spacing
    for p in picks:
        z = (int(cells[p][0]), int(cells[p][1]))
        path = np.array(_path(parent, z))
        for t in range(1, len(path)):
            eta = (int(path[t][0]), int(path[t][1]))
            radius = S * dist[eta]
            prefix = path[: t + 1]
            far = np.sum((prefix - path[t]) ** 2, axis=1) * h * h >= radius * radius
            if not far.any():
                continue
            for y in prefix[far]:
                y = (int(y[0]), int(y[1]))
                if not separated(omega, c, eta, radius, y):
                    return SeparationWitness(z, eta, y, float(radius))
    return None


# --------------------------------------------------------------------------- deficit


@dataclass(frozen=True)
class DeficitReport:
    deficit: float
    asymmetry: float
    quotient: float
    radius: float
    center: tuple[float, float]
    perimeter: float

    def to_dict(self) -> dict:
        return {
            "deficit": self.deficit,
            "asymmetry": self.asymmetry,
            "quotient": self.quotient,
            "radius": self.radius,
            "center": list(self.center),
            "perimeter": self.perimeter,
        }


def _sym_diff(mask: np.ndarray, count: int, fy: float, fx: float, rr: float) -> int:
    """``|E delta B|`` in cells for the lattice ball at fractional index ``(fy, fx)``."""
    i0, i1 = math.floor(fy - rr), math.ceil(fy + rr)
    j0, j1 = math.floor(fx - rr), math.ceil(fx + rr)
    ii, jj = np.ogrid[i0 : i1 + 1, j0 : j1 + 1]
    ball = (ii - fy) ** 2 + (jj - fx) ** 2 < rr * rr
    bi, bj = np.nonzero(ball)
    bi, bj = bi + i0, bj + j0
    valid = (bi >= 0) & (bi < mask.shape[0]) & (bj >= 0) & (bj < mask.shape[1])
    hit = int(np.count_nonzero(mask[bi[valid], bj[valid]]))
    return count + bi.size - 2 * hit


def deficit_asymmetry(e: GridDomain, max_iter: int = 200) -> DeficitReport:
    """Isoperimetric deficit against the equal-area disk and the Fraenkel asymmetry.

    The ball center starts at the centroid, moves by whole cells while that
    helps, then by quarter cells, with ``max_iter`` moves in total.
    """
    mask = e.mask
    count = int(mask.sum())
    if count == 0:
        raise ValueError("empty set")
    h = e.spacing
    area = count * h * h
    r = math.sqrt(area / math.pi)
    per = perimeter(e)
    deficit = per - 2 * math.pi * r
    rr = r / h
    ii, jj = np.nonzero(mask)
    fy, fx = float(ii.mean()), float(jj.mean())
    best = _sym_diff(mask, count, fy, fx, rr)
    moves = 0
    for step in (1.0, 0.25):
        improved = True
        while improved and moves < max_iter:
            improved = False
            for dy, dx in ((step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)):
                v = _sym_diff(mask, count, fy + dy, fx + dx, rr)
                if v < best:
                    best, fy, fx = v, fy + dy, fx + dx
                    improved = True
                    moves += 1
                    break
    asym = best * h * h
    quotient = deficit / asym**2 if asym > 0 else math.inf
    cx = (fx - (e.width - 1) / 2) * h
    cy = ((e.height - 1) / 2 - fy) * h
    return DeficitReport(deficit, asym, quotient, r, (cx, cy), per)


# --------------------------------------------------------------------------- Maz'ya


@dataclass(frozen=True)
class MazyaReport:
    tau: float
    certified: float
    bruteforce: float | None
    exactness: Exactness
    certified_exact: Fraction | None = None
    bruteforce_exact: Fraction | None = None

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "certified": self.certified,
            "bruteforce": self.bruteforce,
            "exactness": self.exactness.value,
        }


def mazya_constant(omega: GridDomain, max_cells: int = 20, tau: TauResult | None = None, **solver_options) -> MazyaReport:
    """``(tau - 1)^-1`` from the trace constant, with the exhaustive ratio when small.

    Raises ``AssertionError`` if the exhaustive ratio exceeds the certified one.
    """
    res = tau_grid(omega, **solver_options) if tau is None else tau
    if res.tau_exact is not None:
        cert_exact = None if res.tau_exact <= 1 else 1 / (res.tau_exact - 1)
        certified = math.inf if cert_exact is None else float(cert_exact)
    else:
        cert_exact = None
        certified = math.inf if res.tau <= 1 else 1.0 / (res.tau - 1.0)
    brute = brute_exact = None
    if omega.cells <= max_cells:
        b = mazya_ratio_bruteforce_exact(omega, max_cells)
        brute = float(b)
        brute_exact = b if isinstance(b, Fraction) else None
        if cert_exact is not None and brute_exact is not None:
            if brute_exact > cert_exact:
                raise AssertionError(f"exhaustive ratio {brute_exact} exceeds certified {cert_exact}")
        elif brute > certified * (1 + 1e-9):
            raise AssertionError(f"exhaustive ratio {brute} exceeds certified {certified}")
    return MazyaReport(res.tau, certified, brute, res.exactness, cert_exact, brute_exact)


# --------------------------------------------------------------------------- classify


@dataclass(frozen=True)
class AnalysisReport:
    tau: float
    mazya: MazyaReport
    john: JohnReport | None
    deficit: DeficitReport

    def to_dict(self) -> dict:
        john = self.john
        out = {
            "tau": self.tau,
            "exactness": self.mazya.exactness.value,
            "mazya_certified": self.mazya.certified,
            "john": None if john is None else {"J_lo": john.J_lo, "J_hi": john.J_hi},
            "center": None if john is None else list(john.center),
            "witness_point": None if john is None else list(john.witness_point),
            "r0": None if john is None else john.r0,
            "C_H": None if john is None else john.C_H,
            "deficit": self.deficit.deficit,
            "asymmetry": self.deficit.asymmetry,
        }
        if self.mazya.bruteforce is not None:
            out["mazya_bruteforce"] = self.mazya.bruteforce
        return out


def classify(
    omega: GridDomain,
    center: tuple[int, int] | str | None = "auto",
    max_cells: int = 20,
    analytic: DistanceFn | None = None,
    **solver_options,
) -> AnalysisReport:
    """Trace, Maz'ya, John, density and deficit figures of one domain.

    The John part is None when no cell lies two cells deep.
    """
    maz = mazya_constant(omega, max_cells=max_cells, **solver_options)
    try:
        john = john_constant(omega, center, analytic)
    except CenterTooClose:
        if center not in (None, "auto"):
            raise
        john = None
    return AnalysisReport(maz.tau, maz, john, deficit_asymmetry(omega))
