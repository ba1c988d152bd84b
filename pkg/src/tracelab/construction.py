"""Finite truncations of the domain ``Omega^delta = B^n minus D^delta``.

Generation ``k`` carries points ``E_k`` on the sphere of radius ``1 - 2^-k``;
each point ``x`` owns a core ball of radius ``2^{-k-2} / (k!)^n`` and a deleted
ball of radius ``2^{-k} / (k!)^{1/delta}``.  ``D^delta`` is the union of the
closed deleted balls over generations ``k0..K``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import GridDomain, Metric, cell_centers, disk, symmetric_difference_perimeter
from .lens import LensParams, TauBallResult, ball_volume, d_n_margin, sphere_area, tau_ball

__all__ = [
    "OmegaDeltaSpec",
    "Ball",
    "BallFamily",
    "FamilyCheck",
    "InvariantViolation",
    "GenerationRow",
    "DensityRow",
    "ConstructionReport",
    "CoverageReport",
    "K0Report",
    "TauGapReport",
    "GapFit",
    "generate_family",
    "verify_family",
    "find_k0",
    "construction_bounds",
    "rasterize_omega",
    "distance_to_boundary",
    "halfmoon_seed",
    "tau_gap_study",
    "fit_gap",
    "delta_for_epsilon",
    "intersection_volume",
    "family_svg",
    "core_radius",
    "deleted_radius",
    "generation_count",
]

LOG_TINY = math.log(1e-300)
# points per generation is C(n) (k!)^(n-1) with C(n) = 2 in both dimensions
POINTS_CONSTANT = 2


class InvariantViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class OmegaDeltaSpec:
    n: int = 2
    delta: float = 0.2
    k0: int = 2
    K: int = 6
    points_per_generation: str = "auto"

    def __post_init__(self) -> None:
        if self.n not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.n}")
        if not 0.0 < self.delta < 1.0 / self.n**2:
            raise ValueError(f"delta must lie in (0, 1/n^2) = (0, {1.0 / self.n**2}), got {self.delta}")
        if self.k0 < 2:
            raise ValueError("k0 must be at least 2")
        if self.k0 > self.K:
            raise ValueError(f"k0={self.k0} exceeds K={self.K}")
        if self.rule not in ("equal-angle", "fibonacci"):
            raise ValueError(f"unknown point rule {self.points_per_generation!r}")
        if self.rule == "equal-angle" and self.n != 2:
            raise ValueError("the equal-angle rule is planar")
        if self.rule == "fibonacci" and self.n != 3:
            raise ValueError("the Fibonacci rule is for n = 3")

    @property
    def rule(self) -> str:
        if self.points_per_generation == "auto":
            return "equal-angle" if self.n == 2 else "fibonacci"
        return self.points_per_generation

    def with_K(self, K: int) -> "OmegaDeltaSpec":
        return OmegaDeltaSpec(self.n, self.delta, self.k0, K, self.points_per_generation)


def _log_fact(k: int) -> float:
    return math.lgamma(k + 1)


def core_radius(n: int, k: int) -> float:
    return 2.0 ** (-k - 2) / math.factorial(k) ** n


def deleted_radius(delta: float, k: int) -> float:
    log_r = -k * math.log(2.0) - _log_fact(k) / delta
    if log_r < LOG_TINY:
        raise OverflowError(f"deleted radius at generation {k} underflows (log radius {log_r:.1f})")
    return math.exp(log_r)


def generation_count(n: int, k: int) -> int:
    return POINTS_CONSTANT * math.factorial(k) ** (n - 1)


@dataclass(frozen=True)
class Ball:
    center: tuple
    generation: int
    core_radius: float
    deleted_radius: float


@dataclass(frozen=True)
class BallFamily:
    spec: OmegaDeltaSpec
    centers: np.ndarray = field(repr=False)
    generation: np.ndarray = field(repr=False)
    core: np.ndarray = field(repr=False)
    deleted: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return int(self.generation.size)

    @property
    def generations(self) -> range:
        return range(self.spec.k0, self.spec.K + 1)

    def select(self, k: int) -> np.ndarray:
        return self.generation == k

    def balls(self) -> list[Ball]:
        return [
            Ball(tuple(float(v) for v in c), int(g), float(a), float(b))
            for c, g, a, b in zip(self.centers, self.generation, self.core, self.deleted)
        ]


# --------------------------------------------------------------------------- point sets


def _circle_points(k: int) -> np.ndarray:
    m = generation_count(2, k)
    radius = 1.0 - 2.0**-k
    ang = math.pi / 2 + 2.0 * math.pi * np.arange(m) / m
    pts = radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    # exact mirror images: the angle set is closed under t -> pi - t
    j = np.arange(m)
    mirror = (m - j) % m
    pts[:, 0] = np.where(j <= mirror, pts[:, 0], -pts[mirror, 0])
    pts[:, 1] = np.where(j <= mirror, pts[:, 1], pts[mirror, 1])
    return pts


def _fibonacci_points(k: int) -> np.ndarray:
    """Mirror-symmetric spiral points on the sphere of radius ``1 - 2^-k``.

    A spiral set on the cap ``x1 >= a`` is reflected through ``{x1 = 0}``.  The
    gap ``a`` is half the typical spacing so that mirror pairs stay apart.
    """
    m = generation_count(3, k)
    radius = 1.0 - 2.0**-k
    half = m // 2
    spacing = math.sqrt(4.0 * math.pi / m)
    a = min(0.5 * spacing, 0.5)
    i = np.arange(half) + 0.5
    x1 = a + (1.0 - a) * (1.0 - i / half)
    rho = np.sqrt(np.maximum(1.0 - x1 * x1, 0.0))
    golden = math.pi * (3.0 - math.sqrt(5.0))
    t = golden * np.arange(half)
    cap = np.stack([x1, rho * np.cos(t), rho * np.sin(t)], axis=1)
    mirror = cap * np.array([-1.0, 1.0, 1.0])
    return radius * np.concatenate([cap, mirror])


def generate_family(spec: OmegaDeltaSpec, verify: bool = True) -> BallFamily:
    """Ball family of generations ``k0..K``; invariants are re-checked unless ``verify`` is off."""
    centers, gens, cores, dels = [], [], [], []
    for k in range(spec.k0, spec.K + 1):
        pts = _circle_points(k) if spec.rule == "equal-angle" else _fibonacci_points(k)
        centers.append(pts)
        gens.append(np.full(len(pts), k, dtype=np.int64))
        cores.append(np.full(len(pts), core_radius(spec.n, k)))
        dels.append(np.full(len(pts), deleted_radius(spec.delta, k)))
    fam = BallFamily(
        spec=spec,
        centers=np.concatenate(centers),
        generation=np.concatenate(gens),
        core=np.concatenate(cores),
        deleted=np.concatenate(dels),
    )
    if verify:
        check = verify_family(fam)
        if not check.ok:
            raise InvariantViolation(check.failures())
    return fam


# --------------------------------------------------------------------------- verification


@dataclass(frozen=True)
class GenerationCheck:
    k: int
    count: int
    min_separation: float
    separation_bound: float
    covering_radius: float
    covering_bound: float
    covering_exact: bool

    @property
    def ok(self) -> bool:
        return self.min_separation >= self.separation_bound and self.covering_radius <= self.covering_bound


@dataclass(frozen=True)
class FamilyCheck:
    sphere_error: float
    deleted_within_core: bool
    min_core_gap: float
    pairs_checked: int
    exhaustive: bool
    symmetry_error: float
    generations: tuple

    @property
    def ok(self) -> bool:
        return (
            self.sphere_error <= 1e-12
            and self.deleted_within_core
            and self.min_core_gap > 0.0
            and self.symmetry_error <= 1e-12
            and all(g.ok for g in self.generations)
        )

    def failures(self) -> str:
        out = []
        if self.sphere_error > 1e-12:
            out.append(f"centers off their spheres by {self.sphere_error:.3g}")
        if not self.deleted_within_core:
            out.append("a deleted ball is larger than its core ball")
        if self.min_core_gap <= 0.0:
            out.append(f"doubled core balls overlap (gap {self.min_core_gap:.3g})")
        if self.symmetry_error > 1e-12:
            out.append(f"family not symmetric in x1 (error {self.symmetry_error:.3g})")
        out += [f"generation {g.k}: separation/covering violated" for g in self.generations if not g.ok]
        return "; ".join(out) or "ok"


def _min_pair_gap(centers: np.ndarray, radius: np.ndarray, chunk: int = 2048) -> tuple[float, int]:
    """``min |x - y| - radius_x - radius_y`` over all unordered pairs."""
    m = len(centers)
    best = math.inf
    pairs = 0
    for a in range(0, m, chunk):
        ca, ra = centers[a : a + chunk], radius[a : a + chunk]
        for b in range(a, m, chunk):
            cb, rb = centers[b : b + chunk], radius[b : b + chunk]
            d = np.sqrt(((ca[:, None, :] - cb[None, :, :]) ** 2).sum(axis=-1))
            gap = d - ra[:, None] - rb[None, :]
            if a == b:
                iu = np.triu_indices(len(ca), 1)
                gap = gap[iu]
            if gap.size:
                best = min(best, float(gap.min()))
                pairs += gap.size
    return best, pairs


def _covering(pts: np.ndarray, radius: float, n: int, samples: int, seed: int) -> tuple[float, bool]:
    """Covering radius of ``pts`` on their sphere; exact on circles, sampled on spheres."""
    if n == 2:
        ang = np.sort(np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2.0 * math.pi))
        gaps = np.diff(np.concatenate([ang, ang[:1] + 2.0 * math.pi]))
        return float(2.0 * radius * math.sin(gaps.max() / 4.0)), True
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((samples, 3))
    z *= radius / np.linalg.norm(z, axis=1, keepdims=True)
    d, _ = cKDTree(pts).query(z)
    return float(d.max()), False


def verify_family(fam: BallFamily, exhaustive: bool | None = None, samples: int = 200_000, seed: int = 0) -> FamilyCheck:
    """Re-check every ball family invariant.

    Doubled-core disjointness is tested on all pairs when ``exhaustive`` (the
    default up to ``K = 6``) and otherwise on the pairs a k-d tree reports
    within the largest possible overlap distance.
    """
    spec = fam.spec
    n = spec.n
    exhaustive = spec.K <= 6 and len(fam) <= 50_000 if exhaustive is None else exhaustive
    shell = 1.0 - 2.0 ** (-fam.generation.astype(float))
    norms = np.linalg.norm(fam.centers, axis=1)
    sphere_error = float(np.max(np.abs(norms - shell) / shell))
    within = bool(np.all(fam.deleted <= fam.core))
    doubled = 2.0 * fam.core
    if exhaustive:
        gap, pairs = _min_pair_gap(fam.centers, doubled)
    else:
        tree = cKDTree(fam.centers)
        close = tree.query_pairs(2.0 * float(doubled.max()), output_type="ndarray")
        if len(close):
            d = np.linalg.norm(fam.centers[close[:, 0]] - fam.centers[close[:, 1]], axis=1)
            gap = float((d - doubled[close[:, 0]] - doubled[close[:, 1]]).min())
        else:
            gap = float(2.0 * doubled.max())  # no pair within reach: separated by more than this
        pairs = len(close)
    mirrored = fam.centers * np.r_[-1.0, np.ones(n - 1)]
    d, _ = cKDTree(fam.centers).query(mirrored)
    symmetry_error = float(d.max())
    gens = []
    for k in fam.generations:
        pts = fam.centers[fam.select(k)]
        sep, _ = _min_pair_gap(pts, np.zeros(len(pts))) if len(pts) <= 20_000 else _tree_separation(pts)
        cov, exact = _covering(pts, 1.0 - 2.0**-k, n, samples, seed + k)
        fk = math.factorial(k)
        gens.append(GenerationCheck(k, len(pts), sep, 1.0 / (n * fk), cov, 2.0 * math.sqrt(n) / fk, exact))
    return FamilyCheck(sphere_error, within, gap, pairs, exhaustive, symmetry_error, tuple(gens))


def _tree_separation(pts: np.ndarray) -> tuple[float, int]:
    d, _ = cKDTree(pts).query(pts, k=2)
    return float(d[:, 1].min()), len(pts)


# --------------------------------------------------------------------------- intersections


def _cap(radius, sagitta, n: int):
    """Area (n = 2) or volume (n = 3) of the part of a ball beyond a plane at depth ``sagitta``."""
    radius = np.asarray(radius, dtype=float)
    h = np.clip(np.asarray(sagitta, dtype=float), 0.0, 2.0 * radius)
    if n == 3:
        return math.pi * h * h * (3.0 * radius - h) / 3.0
    half = np.arctan2(np.sqrt(h * (2.0 * radius - h)), radius - h)
    theta = 2.0 * half
    small = theta < 1e-3
    t = np.where(small, theta, 0.0)
    series = t**3 / 6.0 - t**5 / 120.0 + t**7 / 5040.0
    return 0.5 * radius**2 * np.where(small, series, theta - np.sin(theta))


def intersection_volume(a, b, d, n: int = 2):
    """Measure of ``B(p, a) ∩ B(q, b)`` with ``|p - q| = d``, stable for very unequal radii."""
    a, b, d = (np.asarray(v, dtype=float) for v in (a, b, d))
    a, b, d = np.broadcast_arrays(a, b, d)
    out = np.zeros(a.shape)
    full = d <= np.abs(a - b)
    small = np.minimum(a, b)
    out = np.where(full, ball_volume(n) * small**n, out)
    part = ~full & (d < a + b)
    if np.any(part):
        ap, bp, dp = a[part], b[part], d[part]
        # signed distance from p to the radical plane, written to avoid cancellation
        xa = ((dp - bp) * (dp + bp) + ap * ap) / (2.0 * dp)
        ha = ap - xa
        hb = bp - (dp - xa)
        out = out.copy()
        out[part] = _cap(ap, ha, n) + _cap(bp, hb, n)
    return out


# --------------------------------------------------------------------------- k0


@dataclass(frozen=True)
class K0Window:
    k: int
    checked: int
    contained: bool
    min_margin: float
    coverage_ratio: float

    @property
    def ok(self) -> bool:
        return self.contained and self.coverage_ratio >= 0.5


@dataclass(frozen=True)
class K0Report:
    k0: int
    d_n: float
    window: tuple
    monotone: bool


def find_k0(delta: float, lens_opt: TauBallResult | None = None, n: int | None = None, max_k0: int = 12, span: int = 3) -> K0Report:
    """Smallest ``k0 >= 2`` whose window ``[k0, k0 + span]`` passes the half-moon checks.

    For every generation in the window, each point with ``x1 > -d_n/3`` must
    have its closed deleted ball strictly inside the optimal half-moon, and
    the deleted balls must put at least half of their measure in it.
    """
    lens_opt = tau_ball(n or 2) if lens_opt is None else lens_opt
    p: LensParams = lens_opt.params
    n = p.n
    dn = d_n_margin(lens_opt)
    cut = np.zeros(n)
    cut[0] = -p.d
    for k0 in range(2, max_k0 + 1):
        rows = []
        for k in range(k0, k0 + span + 1):
            spec = OmegaDeltaSpec(n, delta, k, k)
            pts = _circle_points(k) if spec.rule == "equal-angle" else _fibonacci_points(k)
            rho = deleted_radius(delta, k)
            near = pts[:, 0] > -dn / 3.0
            to_sphere = 1.0 - np.linalg.norm(pts, axis=1)
            to_cut = np.linalg.norm(pts - cut, axis=1) - p.r
            margin = np.minimum(to_sphere, to_cut) - rho
            contained = bool(np.all(margin[near] > 0.0))
            # every deleted ball lies inside the unit ball, so only the cutting ball removes measure
            inside = ball_volume(n) * rho**n - intersection_volume(rho, p.r, np.linalg.norm(pts - cut, axis=1), n)
            ratio = float(inside.sum() / (len(pts) * ball_volume(n) * rho**n))
            rows.append(K0Window(k, int(near.sum()), contained, float(margin[near].min()), ratio))
        radii = [deleted_radius(delta, w.k) for w in rows]
        monotone = all(x > y for x, y in zip(radii, radii[1:]))
        if all(w.ok for w in rows) and monotone:
            return K0Report(k0, dn, tuple(rows), monotone)
    raise InvariantViolation(f"no k0 <= {max_k0} passes the half-moon checks")


# --------------------------------------------------------------------------- bounds


@dataclass(frozen=True)
class GenerationRow:
    k: int
    count: int
    deleted_radius: float
    boundary: float
    volume: float
    cumulative_boundary: float
    cumulative_volume: float
    john_ratio: float


@dataclass(frozen=True)
class DensityRow:
    r: float
    k_r: int
    ratio: float
    omitted_bound: float
    resolved: bool


@dataclass(frozen=True)
class ConstructionReport:
    spec: OmegaDeltaSpec
    generations: tuple
    total_boundary: float
    total_volume: float
    tail_boundary: float
    bound_constant: float
    dominated: bool
    density: tuple
    density_slope: float

    def to_dict(self) -> dict:
        return {
            "delta": self.spec.delta,
            "n": self.spec.n,
            "k0": self.spec.k0,
            "K": self.spec.K,
            "total_boundary": self.total_boundary,
            "total_volume": self.total_volume,
            "tail_boundary": self.tail_boundary,
            "bound_constant": self.bound_constant,
            "dominated": self.dominated,
            "density_slope": self.density_slope,
            "generations": [vars(g) for g in self.generations],
            "density": [vars(d) for d in self.density],
        }


def _ball_boundary(n: int, rho: float) -> float:
    return sphere_area(n) * rho ** (n - 1)


def _log_term(n: int, delta: float, k: int) -> float:
    """log of the total deleted boundary measure of generation ``k``."""
    return (
        math.log(POINTS_CONSTANT * sphere_area(n))
        + (n - 1) * _log_fact(k)
        + (n - 1) * (-k * math.log(2.0) - _log_fact(k) / delta)
    )


def _tail(n: int, delta: float, K: int) -> float:
    """Bound on the boundary measure of all generations beyond ``K``.

    Consecutive terms shrink by ``(k+1)^{(n-1)(1-1/delta)} / 2^{n-1}``, which
    decreases in ``k``, so the tail is at most its first term over ``1 - q``.
    """
    first = math.exp(_log_term(n, delta, K + 1))
    q = (K + 2) ** ((n - 1) * (1.0 - 1.0 / delta)) / 2.0 ** (n - 1)
    return first / (1.0 - q)


def density_table(fam: BallFamily, z=None, radii=None) -> tuple:
    """``|D ∩ B(z, r)| / |B(z, r)|`` by exact ball intersections, with the truncation bound."""
    n, delta = fam.spec.n, fam.spec.delta
    if z is None:
        z = np.zeros(n)
        z[1] = 1.0
    z = np.asarray(z, dtype=float)
    radii = [2.0**-j for j in range(3, 9)] if radii is None else radii
    dist = np.linalg.norm(fam.centers - z, axis=1)
    rows = []
    for r in radii:
        near = dist < r + fam.deleted
        vol = float(intersection_volume(fam.deleted[near], r, dist[near], n).sum())
        ball = ball_volume(n) * r**n
        # deeper generations: every omitted deleted ball counted in full
        omitted = 0.0
        for k in range(fam.spec.K + 1, fam.spec.K + 40):
            try:
                rho = deleted_radius(delta, k)
            except OverflowError:
                break
            omitted += generation_count(n, k) * ball_volume(n) * rho**n
        k_r = math.ceil(-math.log2(r)) - 1
        ratio = vol / ball
        rows.append(DensityRow(r, k_r, ratio, omitted / ball, bool(ratio > 0.0 and omitted / ball <= 1e-2 * ratio)))
    return tuple(rows)


def density_slope(rows) -> float:
    """Least-squares slope of ``log ratio`` against ``log k_r`` over resolved rows."""
    pts = [(math.log(r.k_r), math.log(r.ratio)) for r in rows if r.resolved and r.k_r > 0]
    if len(pts) < 2:
        return math.nan
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])


def construction_bounds(fam: BallFamily) -> ConstructionReport:
    """Analytic boundary and volume sums, the constant ``C1``, John ratios and densities."""
    spec = fam.spec
    n, delta = spec.n, spec.delta
    rows = []
    cb = cv = 0.0
    for k in fam.generations:
        m = int(fam.select(k).sum())
        rho = deleted_radius(delta, k)
        b = m * _ball_boundary(n, rho)
        v = m * ball_volume(n) * rho**n
        cb += b
        cv += v
        john = n**-0.5 * 2.0 ** (-(k + 2)) * math.factorial(k)
        rows.append(GenerationRow(k, m, rho, b, v, cb, cv, john))
    scale = math.exp((n - 1) / delta * _log_fact(spec.k0))
    dens = density_table(fam)
    return ConstructionReport(
        spec=spec,
        generations=tuple(rows),
        total_boundary=cb,
        total_volume=cv,
        tail_boundary=_tail(n, delta, spec.K),
        bound_constant=cb * scale,
        dominated=bool(cb <= 2.0 * rows[0].boundary),
        density=dens,
        density_slope=density_slope(dens),
    )


# --------------------------------------------------------------------------- rasterization


@dataclass(frozen=True)
class CoverageReport:
    resolution: int
    threshold: float
    represented: tuple
    unrepresented: tuple
    represented_boundary: float
    unrepresented_boundary: float
    tail_boundary: float

    def to_dict(self) -> dict:
        return {
            "resolution": self.resolution,
            "threshold": self.threshold,
            "represented_generations": list(self.represented),
            "unrepresented_generations": list(self.unrepresented),
            "represented_boundary": self.represented_boundary,
            "unrepresented_boundary": self.unrepresented_boundary,
            "tail_boundary": self.tail_boundary,
        }


def rasterize_omega(fam: BallFamily, resolution: int, metric: Metric | str = Metric.CROFTON16) -> tuple[GridDomain, CoverageReport]:
    """Unit disk minus every deleted ball with radius at least ``2h``.

    The right half of the mask is computed and mirrored, so the result is
    exactly symmetric under column reflection.
    """
    if fam.spec.n != 2:
        raise ValueError("rasterization is planar")
    if resolution < 64:
        raise ValueError("resolution must be at least 64")
    base = disk(resolution, metric=Metric.parse(metric))
    h = base.spacing
    keep = fam.deleted >= 2.0 * h
    mask = base.mask.copy()
    hgt, wid = mask.shape
    xs, ys = cell_centers(base.mask.shape, h)
    right = slice(wid // 2, wid)
    if keep.any():
        tree = cKDTree(fam.centers[keep])
        pts = np.stack([xs[:, right].ravel(), ys[:, right].ravel()], axis=1)
        hits = tree.query_ball_point(pts, r=float(fam.deleted[keep].max()))
        rad = fam.deleted[keep]
        cen = fam.centers[keep]
        inside = np.zeros(len(pts), dtype=bool)
        for i, cand in enumerate(hits):
            if cand:
                c = np.asarray(cand)
                inside[i] = bool(np.any(np.linalg.norm(cen[c] - pts[i], axis=1) <= rad[c]))
        half = mask[:, right] & ~inside.reshape(hgt, -1)
        mask[:, right] = half
        mask[:, : wid - wid // 2] = half[:, ::-1]
    rep = sorted({int(k) for k in fam.generation[keep]})
    unrep = [k for k in fam.generations if k not in rep]
    per_gen = {k: float(fam.select(k).sum()) * _ball_boundary(2, deleted_radius(fam.spec.delta, k)) for k in fam.generations}
    cov = CoverageReport(
        resolution=resolution,
        threshold=2.0 * h,
        represented=tuple(rep),
        unrepresented=tuple(unrep),
        represented_boundary=sum(per_gen[k] for k in rep),
        unrepresented_boundary=sum(per_gen[k] for k in unrep),
        tail_boundary=_tail(2, fam.spec.delta, fam.spec.K),
    )
    return base.with_mask(mask), cov


def distance_to_boundary(fam: BallFamily, points: np.ndarray, neighbours: int = 16) -> np.ndarray:
    """Exact Euclidean distance from points of ``Omega`` to its boundary.

    The boundary is the unit sphere together with every deleted sphere of
    the family, resolved on the grid or not.
    """
    pts = np.asarray(points, dtype=float)
    out = 1.0 - np.linalg.norm(pts, axis=1)
    k = min(neighbours, len(fam))
    if k == 0:
        return out
    tree = cKDTree(fam.centers)
    d, idx = tree.query(pts, k=k)
    d = d.reshape(len(pts), k)
    idx = idx.reshape(len(pts), k)
    to_balls = np.min(d - fam.deleted[idx], axis=1)
    # a farther centre could only win if its distance minus the largest radius beat the best
    unsure = d[:, -1] - fam.deleted.max() < to_balls
    if np.any(unsure):
        dd = np.linalg.norm(pts[unsure, None, :] - fam.centers[None, :, :], axis=-1) - fam.deleted
        to_balls[unsure] = dd.min(axis=1)
    return np.minimum(out, to_balls)


def halfmoon_seed(domain: GridDomain, lens_opt: TauBallResult, steps: int = 11, spread: float = 0.05) -> list[np.ndarray]:
    """Rasterised optimal half-moons with slightly enlarged cutting radii, clipped to the domain."""
    xs, ys = cell_centers(domain.mask.shape, domain.spacing)
    p = lens_opt.params
    out = []
    for dr in np.linspace(0.0, spread, steps):
        m = (xs * xs + ys * ys < 1.0) & ((xs + p.d) ** 2 + ys * ys > (p.r + dr) ** 2)
        out.append(m & domain.mask)
    return out


# --------------------------------------------------------------------------- gap study


@dataclass(frozen=True)
class GapFit:
    c3: float
    c0: float
    exponent_scale: float
    intercept: float
    points: int


@dataclass(frozen=True)
class TauGapReport:
    delta: float
    k0: int
    K: int
    resolution: int
    tau_ball_ref: float
    tau_omega_estimate: float
    tau_disk_grid: float
    gap: float
    gap_grid: float
    exactness: str
    lambda_bracket: tuple
    mu_of_delta: float
    c3: float
    c0: float
    coverage: CoverageReport

    def to_dict(self) -> dict:
        d = {k: v for k, v in vars(self).items() if k != "coverage"}
        d["lambda_bracket"] = list(self.lambda_bracket)
        d["coverage"] = self.coverage.to_dict()
        return d


def fit_gap(deltas, gaps, k0: int, n: int = 2) -> GapFit:
    """Fit ``log gap = log C3 + s * (-(n-1)/delta * log k0!)`` over positive gaps.

    ``C3`` is then raised to the smallest value with every gap below
    ``mu(delta) = C3 (k0!)^{-(n-1)/delta}`` and ``c0`` is the largest constant
    with ``c0 mu(delta) <= gap`` at every point; both use the analytic
    exponent.
    """
    x = np.array([-(n - 1) / d * _log_fact(k0) for d in deltas])
    g = np.asarray(gaps, dtype=float)
    ok = g > 0
    if ok.sum() == 0:
        return GapFit(math.nan, math.nan, math.nan, math.nan, 0)
    if ok.sum() >= 2:
        s, a = np.polyfit(x[ok], np.log(g[ok]), 1)
    else:
        s, a = math.nan, math.nan
    c3 = float(np.max(g[ok] / np.exp(x[ok])))
    c0 = float(np.min(g[ok] / (c3 * np.exp(x[ok]))))
    return GapFit(c3, c0, float(s), float(a), int(ok.sum()))


def delta_for_epsilon(epsilon: float, c3: float, k0: int, n: int = 2) -> float:
    """The ``delta`` with ``mu(delta) = C3 (k0!)^{-(n-1)/delta} = epsilon / 2``."""
    if not (0 < epsilon < 2 * c3):
        raise ValueError(f"epsilon must lie in (0, 2 C3) = (0, {2 * c3})")
    return -(n - 1) * _log_fact(k0) / math.log(epsilon / (2.0 * c3))


def tau_gap_study(
    deltas,
    resolution: int,
    k0: int = 2,
    K: int = 6,
    lens_opt: TauBallResult | None = None,
    metric: Metric | str = Metric.CROFTON16,
    solver_options: dict | None = None,
    map_fn=map,
) -> list[TauGapReport]:
    """Trace-constant gap between the disk and ``Omega^delta`` for each ``delta``.

    The disk itself is solved on the same grid with the same options, so
    ``gap_grid`` isolates the effect of the represented balls from the
    discretisation error carried by ``gap``.  ``map_fn`` may be a parallel map;
    results do not depend on it.  The half-moon seeds make the directional
    searches redundant, so they are off unless ``solver_options`` asks.
    """
    from .solver import tau_grid

    lens_opt = tau_ball(2) if lens_opt is None else lens_opt
    opts = {"volume_mode": "dinkelbach", "directions": 0} | dict(solver_options or {})
    jobs = [("disk", None)] + [("omega", d) for d in deltas]

    def run(job):
        kind, delta = job
        if kind == "disk":
            dom, cov = disk(resolution, metric=Metric.parse(metric)), None
        else:
            fam = generate_family(OmegaDeltaSpec(2, delta, k0, K))
            dom, cov = rasterize_omega(fam, resolution, metric)
        return tau_grid(dom, seeds=halfmoon_seed(dom, lens_opt), **opts), cov

    results = list(map_fn(run, jobs))
    disk_res = results[0][0]
    gaps = [lens_opt.tau - r.tau for r, _ in results[1:]]
    fit = fit_gap(deltas, gaps, k0)
    out = []
    for delta, (res, cov), gap in zip(deltas, results[1:], gaps):
        mu = fit.c3 * math.exp(-1.0 / delta * _log_fact(k0)) if math.isfinite(fit.c3) else math.nan
        out.append(
            TauGapReport(
                delta=float(delta),
                k0=k0,
                K=K,
                resolution=resolution,
                tau_ball_ref=lens_opt.tau,
                tau_omega_estimate=res.tau,
                tau_disk_grid=disk_res.tau,
                gap=gap,
                gap_grid=disk_res.tau - res.tau,
                exactness=res.exactness.value,
                lambda_bracket=tuple(res.lambda_bracket),
                mu_of_delta=mu,
                c3=fit.c3,
                c0=fit.c0,
                coverage=cov,
            )
        )
    return out


def symmetric_difference_check(fam: BallFamily, resolution: int) -> tuple[float, float]:
    """``(P(B Δ Omega) on the grid, analytic boundary of represented balls)``."""
    dom, cov = rasterize_omega(fam, resolution)
    base = disk(resolution, metric=dom.metric)
    return symmetric_difference_perimeter(base.mask, dom.mask, spacing=dom.spacing, metric=dom.metric), cov.represented_boundary


# --------------------------------------------------------------------------- SVG


def family_svg(fam: BallFamily, size: int = 800) -> str:
    """SVG drawing of the unit circle and every deleted ball as ``path`` elements."""
    if fam.spec.n != 2:
        raise ValueError("SVG output is planar")
    half = size / 2.0
    scale = 0.48 * size

    def circle(cx: float, cy: float, r: float, style: str) -> str:
        x0 = half + scale * (cx - r)
        x1 = half + scale * (cx + r)
        y = half - scale * cy
        rr = scale * r
        return (
            f'<path d="M {x0:.6f} {y:.6f} A {rr:.9g} {rr:.9g} 0 1 0 {x1:.6f} {y:.6f} '
            f'A {rr:.9g} {rr:.9g} 0 1 0 {x0:.6f} {y:.6f} Z" {style}/>'
        )

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        circle(0.0, 0.0, 1.0, 'fill="none" stroke="black" stroke-width="1"'),
    ]
    for c, k, r in zip(fam.centers, fam.generation, fam.deleted):
        lines.append(circle(float(c[0]), float(c[1]), float(r), f'fill="red" stroke="none" data-generation="{int(k)}"'))
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
