"""Pixel-grid sets of finite perimeter.

A set is a boolean occupancy mask on a square lattice of spacing ``h``.  Cell
``(i, j)`` has its center at ``x = (j - (W-1)/2) h``, ``y = ((H-1)/2 - i) h``,
so the physical origin sits at the middle of the array and row 0 is the top.

Perimeters are pairwise: a boundary "edge" is an unordered pair of cells
``(a, a + e)`` with ``e`` drawn from the metric's offset list and exactly one
of the two cells in the set.  Everything outside the array counts as empty,
which is the same as padding each mask with a ring of ``False`` cells.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping

import numpy as np

__all__ = [
    "Metric",
    "GridDomain",
    "GridSubset",
    "EdgeClassification",
    "SetAlgebra",
    "metric_offsets",
    "area",
    "perimeter",
    "interface_measure",
    "edge_classification",
    "set_algebra",
    "symmetric_difference_perimeter",
    "density_ratio",
    "rasterize",
    "disk",
    "rectangle",
]

PAD = 2  # largest offset component of any metric


class Metric(str, enum.Enum):
    L1 = "l1"
    CROFTON16 = "crofton16"

    @classmethod
    def parse(cls, value: "Metric | str") -> "Metric":
        if isinstance(value, Metric):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown metric {value!r}; expected 'l1' or 'crofton16'") from None


def _crofton16_offsets() -> tuple[tuple[tuple[int, int], float], ...]:
    # One representative per undirected lattice direction of the 16-neighborhood.
    # Weight of direction e is dphi / (2 |e|) in units of h, where dphi is the
    # half-angle span between the neighbouring directions (a Voronoi split of [0, pi)).
    dirs = [(0, 1), (1, 2), (1, 1), (2, 1), (1, 0), (2, -1), (1, -1), (1, -2)]
    # (dy, dx) with dy pointing to the next row; the angle only matters up to reflection
    angles = [math.atan2(dy, dx) % math.pi for dy, dx in dirs]
    order = sorted(range(len(dirs)), key=lambda k: angles[k])
    out = []
    for pos, k in enumerate(order):
        prev_a = angles[order[pos - 1]] - (math.pi if pos == 0 else 0.0)
        next_a = angles[order[(pos + 1) % len(order)]] + (math.pi if pos == len(order) - 1 else 0.0)
        dphi = 0.5 * (next_a - prev_a)
        dy, dx = dirs[k]
        out.append(((dy, dx), dphi / (2.0 * math.hypot(dy, dx))))
    return tuple(out)


_OFFSETS: dict[Metric, tuple[tuple[tuple[int, int], float], ...]] = {
    Metric.L1: (((0, 1), 1.0), ((1, 0), 1.0)),
    Metric.CROFTON16: _crofton16_offsets(),
}


def metric_offsets(metric: Metric | str) -> tuple[tuple[tuple[int, int], float], ...]:
    """``((dy, dx), weight)`` pairs; weights are per unit spacing."""
    return _OFFSETS[Metric.parse(metric)]


@dataclass(frozen=True, eq=False)
class GridDomain:
    """Binary occupancy mask on a uniform lattice of spacing ``spacing``."""

    mask: np.ndarray
    spacing: float = 1.0
    metric: Metric = Metric.L1

    def __post_init__(self) -> None:
        mask = np.array(self.mask, dtype=bool, copy=True)
        if mask.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
        if not (self.spacing > 0 and math.isfinite(self.spacing)):
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "spacing", float(self.spacing))
        object.__setattr__(self, "metric", Metric.parse(self.metric))

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def cells(self) -> int:
        return int(self.mask.sum())

    def with_mask(self, mask: np.ndarray) -> "GridDomain":
        return GridDomain(mask, self.spacing, self.metric)

    def with_metric(self, metric: Metric | str) -> "GridDomain":
        return GridDomain(self.mask, self.spacing, Metric.parse(metric))

    def with_spacing(self, spacing: float) -> "GridDomain":
        return GridDomain(self.mask, spacing, self.metric)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Physical ``(x, y)`` of every cell center, each of shape ``mask.shape``."""
        return cell_centers(self.mask.shape, self.spacing)

    def cell_of(self, point: tuple[float, float]) -> tuple[int, int]:
        """Array index of the cell whose center is nearest to ``point``."""
        x, y = point
        j = int(round(x / self.spacing + (self.width - 1) / 2))
        i = int(round((self.height - 1) / 2 - y / self.spacing))
        return i, j

    def center_of(self, cell: tuple[int, int]) -> tuple[float, float]:
        i, j = cell
        return ((j - (self.width - 1) / 2) * self.spacing, ((self.height - 1) / 2 - i) * self.spacing)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GridDomain):
            return NotImplemented
        return (
            self.spacing == other.spacing
            and self.metric == other.metric
            and self.mask.shape == other.mask.shape
            and bool(np.array_equal(self.mask, other.mask))
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class GridSubset:
    """A competitor ``F`` contained cellwise in ``parent``."""

    parent: GridDomain
    mask: np.ndarray

    def __post_init__(self) -> None:
        mask = np.array(self.mask, dtype=bool, copy=True)
        if mask.shape != self.parent.mask.shape:
            raise ValueError(f"subset shape {mask.shape} != parent shape {self.parent.mask.shape}")
        if np.any(mask & ~self.parent.mask):
            raise ValueError("subset mask is not contained in the parent mask")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @property
    def domain(self) -> GridDomain:
        return self.parent.with_mask(self.mask)


def cell_centers(shape: tuple[int, int], spacing: float) -> tuple[np.ndarray, np.ndarray]:
    h, w = shape
    x = (np.arange(w) - (w - 1) / 2) * spacing
    y = ((h - 1) / 2 - np.arange(h)) * spacing
    return np.broadcast_to(x[None, :], shape), np.broadcast_to(y[:, None], shape)


def _pad(mask: np.ndarray, mode: str = "constant") -> np.ndarray:
    widths = [(0, 0)] * (mask.ndim - 2) + [(PAD, PAD), (PAD, PAD)]
    if mode == "edge":
        return np.pad(mask, widths, mode="edge")
    return np.pad(mask, widths)


def _pairs(padded: np.ndarray, offset: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Views ``(a, b)`` over the last two axes with ``b`` shifted by ``offset``."""
    dy, dx = offset
    hp, wp = padded.shape[-2:]
    ys = slice(0, hp - dy)
    yt = slice(dy, hp)
    if dx >= 0:
        xs, xt = slice(0, wp - dx), slice(dx, wp)
    else:
        xs, xt = slice(-dx, wp), slice(0, wp + dx)
    return padded[..., ys, xs], padded[..., yt, xt]


def _iter_pairs(
    metric: Metric, *masks: np.ndarray, window: np.ndarray | None = None
) -> Iterator[tuple[float, list[tuple[np.ndarray, np.ndarray]], np.ndarray | None]]:
    padded = [_pad(m) for m in masks]
    gp = None if window is None else _pad(np.asarray(window, dtype=bool), mode="edge")
    for offset, weight in metric_offsets(metric):
        views = [_pairs(p, offset) for p in padded]
        inside = None
        if gp is not None:
            ga, gb = _pairs(gp, offset)
            inside = ga & gb
        yield weight, views, inside


def _sum_edges(weight_counts: list[tuple[float, int]], metric: Metric, spacing: float) -> float:
    if metric is Metric.L1:
        return spacing * float(sum(c for _, c in weight_counts))
    return spacing * math.fsum(w * c for w, c in weight_counts)


def _check_window(window: np.ndarray | None, shape: tuple[int, ...]) -> np.ndarray | None:
    if window is None:
        return None
    window = np.asarray(window, dtype=bool)
    if window.shape != shape:
        raise ValueError(f"window shape {window.shape} != mask shape {shape}")
    return window


def area(domain: GridDomain) -> float:
    """``h**2`` times the number of occupied cells."""
    return domain.spacing**2 * float(np.count_nonzero(domain.mask))


def boundary_edge_count(mask: np.ndarray, metric: Metric | str = Metric.L1, window: np.ndarray | None = None):
    """Per-offset counts of boundary pairs, as ``[(weight, count), ...]``."""
    metric = Metric.parse(metric)
    mask = np.asarray(mask, dtype=bool)
    window = _check_window(window, mask.shape)
    out = []
    for weight, [(a, b)], inside in _iter_pairs(metric, mask, window=window):
        cut = a != b
        if inside is not None:
            cut &= inside
        out.append((weight, int(np.count_nonzero(cut))))
    return out


def perimeter(
    domain: GridDomain | np.ndarray,
    window: np.ndarray | None = None,
    *,
    spacing: float | None = None,
    metric: Metric | str | None = None,
) -> float:
    """Perimeter of a mask, optionally relative to a cell window ``G``.

    A pair is inside ``G`` when both of its cells are (cells beyond the array
    inherit the membership of the nearest array cell).
    """
    if isinstance(domain, GridDomain):
        mask = domain.mask
        spacing = domain.spacing if spacing is None else spacing
        metric = domain.metric if metric is None else metric
    else:
        mask = np.asarray(domain, dtype=bool)
        spacing = 1.0 if spacing is None else spacing
        metric = Metric.L1 if metric is None else metric
    metric = Metric.parse(metric)
    return _sum_edges(boundary_edge_count(mask, metric, window), metric, spacing)


def _as_subset_mask(e: GridDomain, f: GridSubset | GridDomain | np.ndarray) -> np.ndarray:
    if isinstance(f, GridSubset):
        if f.parent.mask.shape != e.mask.shape:
            raise ValueError("subset belongs to a grid of different dimensions")
        return f.mask
    fm = f.mask if isinstance(f, GridDomain) else np.asarray(f, dtype=bool)
    if fm.shape != e.mask.shape:
        raise ValueError(f"dimension mismatch: {fm.shape} vs {e.mask.shape}")
    return fm


def interface_measure(e: GridDomain, f: GridSubset | GridDomain | np.ndarray) -> float:
    """Length of the part of the boundary of ``f`` lying on the boundary of ``e``.

    Counted are pairs leaving ``f`` into the complement of ``e``; for ``F`` inside
    ``E`` these are exactly the pairs where both boundaries carry the same normal.
    """
    fm = _as_subset_mask(e, f)
    counts = []
    for weight, [(ea, eb), (fa, fb)], _ in _iter_pairs(e.metric, e.mask, fm):
        same = ((fa & ea) & ~(fb | eb)) | ((fb & eb) & ~(fa | ea))
        counts.append((weight, int(np.count_nonzero(same))))
    return _sum_edges(counts, e.metric, e.spacing)


@dataclass(frozen=True)
class EdgeClassification:
    """Partition of the boundary pairs of ``F`` relative to ``E`` (lengths)."""

    f_inside_e: float
    f_outside_e: float
    same_normal: float
    opposite_normal: float

    @property
    def total(self) -> float:
        return self.f_inside_e + self.f_outside_e + self.same_normal + self.opposite_normal


def _classify_counts(ea, eb, fa, fb, inside=None) -> dict[str, np.ndarray]:
    """Boolean pair masks for the quantities entering the set-operation identities."""
    de = ea != eb
    df = fa != fb
    e1 = ea & eb
    e0 = ~(ea | eb)
    f1 = fa & fb
    f0 = ~(fa | fb)
    same = de & df & (ea == fa)
    opposite = de & df & (ea != fa)
    out = {
        "dE": de,
        "dF": df,
        "dE_F1": de & f1,
        "dE_F0": de & f0,
        "dF_E1": df & e1,
        "dF_E0": df & e0,
        "same": same,
        "opposite": opposite,
        "d_cap": (ea & fa) != (eb & fb),
        "d_cup": (ea | fa) != (eb | fb),
        "d_minus": (ea & ~fa) != (eb & ~fb),
    }
    if inside is not None:
        out = {k: v & inside for k, v in out.items()}
    return out


def edge_classification(
    e: GridDomain, f: GridSubset | GridDomain | np.ndarray, window: np.ndarray | None = None
) -> EdgeClassification:
    fm = _as_subset_mask(e, f)
    window = _check_window(window, e.mask.shape)
    acc: dict[str, list[tuple[float, int]]] = {k: [] for k in ("dF_E1", "dF_E0", "same", "opposite")}
    for weight, [(ea, eb), (fa, fb)], inside in _iter_pairs(e.metric, e.mask, fm, window=window):
        cls = _classify_counts(ea, eb, fa, fb, inside)
        for k in acc:
            acc[k].append((weight, int(np.count_nonzero(cls[k]))))
    m, h = e.metric, e.spacing
    return EdgeClassification(
        f_inside_e=_sum_edges(acc["dF_E1"], m, h),
        f_outside_e=_sum_edges(acc["dF_E0"], m, h),
        same_normal=_sum_edges(acc["same"], m, h),
        opposite_normal=_sum_edges(acc["opposite"], m, h),
    )


@dataclass(frozen=True)
class SetAlgebra:
    """Masks, relative perimeters and identity residuals for a pair ``(E, F)``."""

    intersection: np.ndarray
    union: np.ndarray
    difference: np.ndarray
    classification: EdgeClassification
    perimeters: Mapping[str, float]
    terms: Mapping[str, float]
    residuals: tuple[float, float, float]
    submodular_residual: float


def _identity_terms(counts: Mapping[str, float]) -> tuple[tuple[float, float, float], float]:
    r_cap = counts["d_cap"] - (counts["dE_F1"] + counts["dF_E1"] + counts["same"])
    r_minus = counts["d_minus"] - (counts["dE_F0"] + counts["dF_E1"] + counts["opposite"])
    r_cup = counts["d_cup"] - (counts["dE_F0"] + counts["dF_E0"] + counts["same"])
    # P(E n F) + P(E u F) = P(E) + P(F) - 2 H({nu_E = -nu_F})
    sub = counts["d_cap"] + counts["d_cup"] - counts["dE"] - counts["dF"] + 2 * counts["opposite"]
    return (r_cap, r_minus, r_cup), sub


def set_algebra(
    e: GridDomain | np.ndarray,
    f: GridDomain | np.ndarray,
    window: np.ndarray | None = None,
    *,
    spacing: float | None = None,
    metric: Metric | str | None = None,
) -> SetAlgebra:
    """Intersection, union, difference of two masks and the three perimeter identities.

    Identities checked pairwise, all relative to the window ``G``::

        P(E n F) = P(E; F1) + P(F; E1) + H(same)
        P(E - F) = P(E; F0) + P(F; E1) + H(opposite)
        P(E u F) = P(E; F0) + P(F; E0) + H(same)

    where a pair is in ``F1`` (``F0``) when both of its cells are in (out of) ``F``.
    In L1 the residuals are exact integer multiples of ``h``.
    """
    if isinstance(e, GridDomain):
        em = e.mask
        spacing = e.spacing if spacing is None else spacing
        metric = e.metric if metric is None else metric
    else:
        em = np.asarray(e, dtype=bool)
    spacing = 1.0 if spacing is None else spacing
    metric = Metric.parse(Metric.L1 if metric is None else metric)
    fm = f.mask if isinstance(f, GridDomain) else np.asarray(f, dtype=bool)
    if fm.shape != em.shape:
        raise ValueError(f"dimension mismatch: {fm.shape} vs {em.shape}")
    window = _check_window(window, em.shape)

    acc: dict[str, list[tuple[float, int]]] = {}
    for weight, [(ea, eb), (fa, fb)], inside in _iter_pairs(metric, em, fm, window=window):
        for k, v in _classify_counts(ea, eb, fa, fb, inside).items():
            acc.setdefault(k, []).append((weight, int(np.count_nonzero(v))))
    if metric is Metric.L1:
        # exact integer arithmetic, scaled by h at the end
        ints = {k: sum(c for _, c in v) for k, v in acc.items()}
        (r1, r2, r3), sub = _identity_terms(ints)
        lengths = {k: spacing * float(v) for k, v in ints.items()}
        residuals = (spacing * r1, spacing * r2, spacing * r3)
        sub_res = spacing * sub
    else:
        lengths = {k: _sum_edges(v, metric, spacing) for k, v in acc.items()}
        residuals, sub_res = _identity_terms(lengths)

    perims = {
        "E": lengths["dE"],
        "F": lengths["dF"],
        "E&F": lengths["d_cap"],
        "E|F": lengths["d_cup"],
        "E-F": lengths["d_minus"],
    }
    cls = EdgeClassification(
        f_inside_e=lengths["dF_E1"],
        f_outside_e=lengths["dF_E0"],
        same_normal=lengths["same"],
        opposite_normal=lengths["opposite"],
    )
    return SetAlgebra(
        intersection=em & fm,
        union=em | fm,
        difference=em & ~fm,
        classification=cls,
        perimeters=perims,
        terms=lengths,
        residuals=tuple(residuals),
        submodular_residual=sub_res,
    )


def identity_residuals_batch(e: np.ndarray, f: np.ndarray, window: np.ndarray | None = None) -> np.ndarray:
    """Integer L1 residuals for a batch of mask pairs of shape ``(B, H, W)``.

    Returns an ``(B, 4)`` int array: the three set-operation identities and the
    submodularity identity with its opposite-normal correction.
    """
    e = np.asarray(e, dtype=bool)
    f = np.asarray(f, dtype=bool)
    if e.shape != f.shape or e.ndim != 3:
        raise ValueError("expected two (B, H, W) mask stacks of equal shape")
    if window is not None:
        window = np.broadcast_to(np.asarray(window, dtype=bool), e.shape)
    totals: dict[str, np.ndarray] = {}
    for _, [(ea, eb), (fa, fb)], inside in _iter_pairs(Metric.L1, e, f, window=window):
        for k, v in _classify_counts(ea, eb, fa, fb, inside).items():
            c = v.reshape(v.shape[0], -1).sum(axis=1, dtype=np.int64)
            totals[k] = totals.get(k, 0) + c
    (r1, r2, r3), sub = _identity_terms(totals)
    return np.stack([r1, r2, r3, sub], axis=1)


def symmetric_difference_perimeter(a: GridDomain, b: GridDomain | np.ndarray) -> float:
    bm = b.mask if isinstance(b, GridDomain) else np.asarray(b, dtype=bool)
    if bm.shape != a.mask.shape:
        raise ValueError(f"dimension mismatch: {bm.shape} vs {a.mask.shape}")
    return perimeter(a.with_mask(a.mask ^ bm))


def density_ratio(domain: GridDomain, center: tuple[float, float], radius: float) -> float:
    """Fraction of the lattice ball ``B(center, radius)`` occupied by the set.

    Both numerator and denominator count cell centers, including lattice sites
    outside the array (which are empty), so a full ball gives exactly 1.
    """
    h = domain.spacing
    if radius < 2 * h:
        raise ValueError(f"radius {radius} is below two cells ({2 * h})")
    cx, cy = center
    hgt, wid = domain.mask.shape
    # lattice sites are at integer offsets from the array's cell centers
    fx = cx / h + (wid - 1) / 2
    fy = (hgt - 1) / 2 - cy / h
    rr = radius / h
    j0, j1 = math.floor(fx - rr), math.ceil(fx + rr)
    i0, i1 = math.floor(fy - rr), math.ceil(fy + rr)
    jj, ii = np.meshgrid(np.arange(j0, j1 + 1), np.arange(i0, i1 + 1))
    inball = (jj - fx) ** 2 + (ii - fy) ** 2 < rr * rr
    total = int(np.count_nonzero(inball))
    valid = inball & (ii >= 0) & (ii < hgt) & (jj >= 0) & (jj < wid)
    hit = int(np.count_nonzero(domain.mask[ii[valid], jj[valid]]))
    return hit / total


def rasterize(
    inside: Callable[[np.ndarray, np.ndarray], np.ndarray],
    shape: tuple[int, int],
    spacing: float,
    metric: Metric | str = Metric.L1,
) -> GridDomain:
    """Cell belongs to the set iff its center does."""
    x, y = cell_centers(shape, spacing)
    return GridDomain(np.asarray(inside(x, y), dtype=bool), spacing, Metric.parse(metric))


def disk(
    resolution: int, radius: float = 1.0, metric: Metric | str = Metric.CROFTON16, center=(0.0, 0.0)
) -> GridDomain:
    """Disk of ``radius`` at spacing ``1/resolution``, with at least one empty ring."""
    h = 1.0 / resolution
    cx, cy = center
    half = math.ceil((radius + max(abs(cx), abs(cy))) / h) + 1
    shape = (2 * half, 2 * half)
    return rasterize(lambda x, y: (x - cx) ** 2 + (y - cy) ** 2 < radius * radius, shape, h, metric)


def rectangle(cols: int, rows: int, spacing: float = 1.0, metric: Metric | str = Metric.L1) -> GridDomain:
    """A ``cols x rows`` block of cells centered in an array with one empty ring."""
    m = np.zeros((rows + 2, cols + 2), dtype=bool)
    m[1:-1, 1:-1] = True
    return GridDomain(m, spacing, Metric.parse(metric))
