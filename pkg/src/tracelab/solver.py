"""Trace constant of grid domains by ratio minimisation over cuts.

For a level ``lam`` the inner problem is::

    min_F  P(F) - lam * H(dE n dF) + mu * |F|,      F subset of E,

a submodular pairwise energy minimised exactly by one s/t min-cut.  The volume
constraint ``|F| <= |E|/2`` is handled through the Lagrange multiplier ``mu``:
a breakpoint search over ``mu`` finds the largest-volume feasible minimiser,
and the dual value certifies (or fails to certify) that no feasible competitor
beats ``lam``.  Dinkelbach updates move ``lam`` down to the best competitor
found; if the dual cannot certify the final level, a bisection on ``lam``
brackets the answer and the result is flagged ``PENALTY_BRACKETED``.

In L1 every quantity is an integer multiple of ``h`` (lengths) or ``h**2``
(areas), so levels and multipliers are kept as exact fractions and the flow
network is solved on integer capacities.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import breadth_first_order, maximum_flow

from .geometry import GridDomain, GridSubset, Metric, metric_offsets

__all__ = [
    "Exactness",
    "TauResult",
    "CutInstance",
    "SolverError",
    "FeasibleSetEmpty",
    "DisconnectedDomain",
    "CellBudgetExceeded",
    "tau_grid",
    "tau_bruteforce",
    "mazya_ratio_bruteforce",
    "is_connected",
]

INT_CAP = 2**30  # keeps every capacity and the flow value inside int32
# volume fractions (fixed in, allowed) of the directional boxes
BOXES = ((0.2, 0.7), (0.3, 0.6), (0.35, 0.75), (0.0, 0.75))
BAND_WIDTHS = (4.0, 2.0, 1.0)


class SolverError(RuntimeError):
    pass


class FeasibleSetEmpty(SolverError):
    pass


class DisconnectedDomain(SolverError):
    pass


class CellBudgetExceeded(SolverError):
    pass


class Exactness(str, enum.Enum):
    EXACT = "exact"
    PENALTY_BRACKETED = "penalty_bracketed"


@dataclass(frozen=True)
class TauResult:
    tau: float
    optimizer: GridSubset
    lambda_bracket: tuple[float, float]
    volume_penalty: float
    feasible: bool
    iterations: int
    exactness: Exactness
    perimeter: float = math.nan
    interface: float = math.nan
    dual_gap: float = 0.0
    tau_exact: Fraction | None = None
    flows: int = 0

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "lambda_bracket": list(self.lambda_bracket),
            "volume_penalty": self.volume_penalty,
            "feasible": self.feasible,
            "iterations": self.iterations,
            "exactness": self.exactness.value,
            "perimeter": self.perimeter,
            "interface": self.interface,
            "optimizer_area": float(self.optimizer.mask.sum()) * self.optimizer.parent.spacing**2,
            "dual_gap": self.dual_gap,
            "flows": self.flows,
        }


def is_connected(mask: np.ndarray) -> bool:
    _, count = ndimage.label(np.asarray(mask, dtype=bool))
    return count == 1


# --------------------------------------------------------------------------- cut graph


@dataclass
class CutInstance:
    """Flow network for ``P(F) - lam H(dE n dF) + mu |F|`` over the cells of ``E``.

    Lengths are in units of ``h`` and areas in cells: ``pair_w`` are metric
    weights of interior pairs, ``boundary`` the exposed length of each cell.
    """

    domain: GridDomain
    rows: np.ndarray
    cols: np.ndarray
    pair_i: np.ndarray
    pair_j: np.ndarray
    pair_w: np.ndarray
    boundary: np.ndarray
    integral: bool
    _perm: np.ndarray = field(repr=False, default=None)
    _shape: tuple[int, int] = (0, 0)
    _indptr: np.ndarray = field(repr=False, default=None)
    _indices: np.ndarray = field(repr=False, default=None)
    flows: int = 0

    @classmethod
    def build(cls, domain: GridDomain) -> "CutInstance":
        mask = domain.mask
        rows, cols = np.nonzero(mask)
        n = rows.size
        index = -np.ones(mask.shape, dtype=np.int64)
        index[rows, cols] = np.arange(n)
        padded = np.pad(index, 2, constant_values=-1)
        integral = domain.metric is Metric.L1
        boundary = np.zeros(n, dtype=np.int64 if integral else float)
        pi, pj, pw = [], [], []
        for (dy, dx), w in metric_offsets(domain.metric):
            wv = 1 if integral else w
            for sgn in (1, -1):
                nb = padded[2 + sgn * dy : 2 + sgn * dy + mask.shape[0], 2 + sgn * dx : 2 + sgn * dx + mask.shape[1]]
                nbv = nb[rows, cols]
                np.add.at(boundary, np.nonzero(nbv < 0)[0], wv)
                if sgn == 1:
                    keep = nbv >= 0
                    pi.append(np.arange(n)[keep])
                    pj.append(nbv[keep])
                    pw.append(np.full(int(keep.sum()), wv, dtype=np.int64 if integral else float))
        inst = cls(
            domain=domain,
            rows=rows,
            cols=cols,
            pair_i=np.concatenate(pi) if pi else np.zeros(0, np.int64),
            pair_j=np.concatenate(pj) if pj else np.zeros(0, np.int64),
            pair_w=np.concatenate(pw) if pw else np.zeros(0),
            boundary=boundary,
            integral=integral,
        )
        inst._prepare()
        return inst

    @property
    def n(self) -> int:
        return self.rows.size

    def _prepare(self) -> None:
        n = self.n
        s, t = n, n + 1
        m = self.pair_i.size
        src = np.concatenate([self.pair_i, self.pair_j, np.full(n, s), np.arange(n)])
        dst = np.concatenate([self.pair_j, self.pair_i, np.arange(n), np.full(n, t)])
        order = np.arange(src.size, dtype=np.int64)
        g = coo_matrix((order + 1, (src, dst)), shape=(n + 2, n + 2)).tocsr()
        g.sort_indices()
        self._perm = g.data.astype(np.int64) - 1
        self._indptr = g.indptr
        self._indices = g.indices
        self._shape = (n + 2, n + 2)
        self._m = m
        incident = np.zeros(n, dtype=self.pair_w.dtype)
        np.add.at(incident, self.pair_i, self.pair_w)
        np.add.at(incident, self.pair_j, self.pair_w)
        self._incident = incident
        self.last_error = 0.0

    # quantities in h-units ------------------------------------------------------
    def measures(self, x: np.ndarray):
        """``(P(F), H(F), |F|)`` for a boolean node vector, in h-units and cells."""
        x = np.asarray(x, dtype=bool)
        cut = x[self.pair_i] != x[self.pair_j]
        inter = self.boundary[x].sum()
        perim = self.pair_w[cut].sum() + inter
        if self.integral:
            return int(perim), int(inter), int(x.sum())
        return float(perim), float(inter), int(x.sum())

    def energy(self, x: np.ndarray, lam, mu):
        p, hh, v = self.measures(x)
        return p - lam * hh + mu * v

    # min cut --------------------------------------------------------------------
    def _node_caps(self, lam, mu, forbid, force):
        """``(pair, source, sink, error)`` integer capacities.

        ``error`` bounds, in h-units, how far the true energy of any cut can
        differ from its rounded value; it is zero on the exact integer path.
        """
        n = self.n
        if self.integral and isinstance(lam, Fraction) and isinstance(mu, Fraction):
            den = math.lcm(lam.denominator, mu.denominator)
            caps = self._fix(
                self.pair_w.astype(np.int64) * den,
                self.boundary.astype(np.int64) * int((lam - 1) * den),
                np.full(n, int(mu * den), dtype=np.int64),
                self._incident.astype(np.int64) * den,
                forbid,
                force,
            )
            if caps is not None:
                return (*caps, 0.0)
        lam_f, mu_f = float(lam), float(mu)
        src_f = np.asarray(self.boundary, dtype=float) * (lam_f - 1.0)
        inc_f = np.asarray(self._incident, dtype=float)
        scale = INT_CAP / (4.0 * max(2.0 * src_f.sum() + mu_f * n + inc_f.sum() + n, 1e-300))
        caps = self._fix(
            np.rint(np.asarray(self.pair_w, dtype=float) * scale).astype(np.int64),
            np.rint(src_f * scale).astype(np.int64),
            np.full(n, int(round(mu_f * scale)), dtype=np.int64),
            np.rint(inc_f * scale).astype(np.int64),
            forbid,
            force,
        )
        if caps is None:
            raise SolverError("capacities overflow the 32-bit flow range")
        # every arc is off by at most half a unit; two cuts are compared
        return (*caps, (self.pair_i.size + 2 * n) / scale)

    @staticmethod
    def _fix(pw, src, sink, inc, forbid, force):
        if forbid is not None:
            sink[forbid] = src[forbid] + inc[forbid] + 1
        if force is not None:
            src[force] = sink[force] + inc[force] + 1
        big = max(int(src.sum()), int(sink.sum()), int(pw.max(initial=0)))
        return None if big >= INT_CAP else (pw, src, sink)

    def solve(self, lam, mu, forbid: np.ndarray | None = None, force: np.ndarray | None = None):
        """Minimal and maximal minimisers of ``P - lam H + mu |F|`` (boolean node vectors).

        Cells flagged in ``forbid`` never enter ``F``; cells in ``force`` always do.
        The rounding error bound of the last call is kept in ``last_error``.
        """
        n = self.n
        pw, src, sink, error = self._node_caps(lam, mu, forbid, force)
        self.last_error = error
        caps = np.concatenate([pw, pw, src, sink])
        data = caps[self._perm].astype(np.int32)
        g = csr_matrix((data, self._indices, self._indptr), shape=self._shape)
        res = maximum_flow(g, n, n + 1, method="dinic")
        self.flows += 1
        residual = (g - res.flow).tocsr()
        residual.data = (residual.data > 0).astype(np.int8)
        residual.eliminate_zeros()
        reach_s = breadth_first_order(residual, n, directed=True, return_predecessors=False)
        fmin = np.zeros(n + 2, dtype=bool)
        fmin[reach_s] = True
        reach_t = breadth_first_order(residual.T.tocsr(), n + 1, directed=True, return_predecessors=False)
        fmax = np.ones(n + 2, dtype=bool)
        fmax[reach_t] = False
        return fmin[:n], fmax[:n]

    def to_mask(self, x: np.ndarray) -> np.ndarray:
        m = np.zeros(self.domain.mask.shape, dtype=bool)
        m[self.rows[x], self.cols[x]] = True
        return m

    def from_mask(self, mask: np.ndarray) -> np.ndarray:
        return np.asarray(mask, dtype=bool)[self.rows, self.cols]


# --------------------------------------------------------------------------- search


@dataclass
class _Candidate:
    x: np.ndarray
    perimeter: object
    interface: object
    volume: int

    def ratio(self):
        if self.interface == 0:
            return math.inf
        if isinstance(self.perimeter, int):
            return Fraction(self.perimeter, self.interface)
        return self.perimeter / self.interface


@dataclass
class _Search:
    candidates: list
    lower_bound: object
    mu: object
    large: np.ndarray | None = None


class _Solver:
    """Candidate generation and dual bounds at a fixed level ``lam``."""

    def __init__(self, inst: CutInstance, tol: float, directions: int, polish: bool, max_mu_iter: int = 200):
        self.inst = inst
        self.n = inst.n
        self.exact = inst.integral
        self.half = Fraction(self.n, 2) if self.exact else self.n / 2
        self.tol = tol
        self.max_mu_iter = max_mu_iter
        self.polish = polish
        self.regions = _direction_regions(inst, directions)
        # warm starts of the multiplier search, keyed by the forbidden region
        self._warm: dict[int, tuple[np.ndarray, np.ndarray, object]] = {}

    def cand(self, x: np.ndarray) -> _Candidate:
        p, h, v = self.inst.measures(x)
        return _Candidate(x.copy(), p, h, v)

    def feasible(self, c: _Candidate) -> bool:
        return 0 < c.volume <= self.half and c.interface > 0

    def mu_search(
        self,
        lam,
        forbid: np.ndarray | None = None,
        force: np.ndarray | None = None,
        key: int | None = None,
    ) -> _Search:
        """Breakpoint search for the dual-optimal multiplier at level ``lam``.

        Minimises ``P - lam H`` over ``force <= F <= ~forbid`` with
        ``|F| <= |E|/2`` through the Lagrangian ``+ mu (|F| - |E|/2)``.  Keeps an
        infeasible set ``lo`` and a feasible set ``hi``; the next multiplier is
        where their penalised energies tie.  The returned lower bound is the
        dual value at the final multiplier, widened by the rounding error of
        the cut.  It is ``inf`` when ``force`` alone exceeds the volume bound.
        """
        inst, half = self.inst, self.half
        f = lambda c: c.perimeter - lam * c.interface  # noqa: E731
        allowed = np.ones(self.n, dtype=bool) if forbid is None else ~forbid
        base = np.zeros(self.n, dtype=bool) if force is None else force.copy()
        if base.sum() > half:
            return _Search([], math.inf, self.num(0))
        if key is not None and key in self._warm:
            lo_x, hi_x, mu_guess = self._warm[key]
        else:
            lo_x, hi_x, mu_guess = allowed, base, None
        lo, hi = self.cand(lo_x), self.cand(hi_x)
        seen = [lo, hi]
        if lo.volume <= half:
            # the volume bound is inactive on the whole box
            mu = self.num(0)
            xmin, xmax = inst.solve(lam, mu, forbid, force)
            cmin, cmax = self.cand(xmin), self.cand(xmax)
            seen += [cmin, cmax]
            lower = min(f(cmin), f(cmax)) - inst.last_error
            return _Search([c for c in seen if self.feasible(c)], lower, mu, None)
        if mu_guess is not None:
            xmin, xmax = inst.solve(lam, mu_guess, forbid, force)
            for c in (self.cand(xmin), self.cand(xmax)):
                seen.append(c)
                if c.volume > half:
                    if f(c) + mu_guess * c.volume <= f(lo) + mu_guess * lo.volume:
                        lo = c
                elif f(c) + mu_guess * c.volume <= f(hi) + mu_guess * hi.volume:
                    hi = c
        mu = None
        g = None
        for _ in range(self.max_mu_iter):
            mu = (f(hi) - f(lo)) / (lo.volume - hi.volume)
            if mu < 0:
                mu = self.num(0)
            xmin, xmax = inst.solve(lam, mu, forbid, force)
            cmin, cmax = self.cand(xmin), self.cand(xmax)
            seen += [cmin, cmax]
            g = min(f(cmin) + mu * cmin.volume, f(cmax) + mu * cmax.volume)
            if mu == 0 and cmax.volume <= half:
                hi = cmax  # constraint inactive
                break
            line = f(lo) + mu * lo.volume
            slack = 0 if self.exact else self.tol * (abs(line) + float(inst.boundary.sum())) + inst.last_error
            if g >= line - slack:
                break
            pen = lambda c: f(c) + mu * c.volume  # noqa: E731,B023
            big = [c for c in (cmin, cmax) if c.volume > half]
            small = [c for c in (cmin, cmax) if c.volume <= half]
            if big and small:
                hi, lo = small[0], big[0]
                break
            if big:
                lo = min(big, key=pen)
            else:
                hi = min(small, key=pen)
        else:
            raise SolverError("multiplier search did not converge")
        if key is not None:
            self._warm[key] = (lo.x, hi.x, mu)
        lower = g - mu * half - inst.last_error
        return _Search([c for c in seen if self.feasible(c)], lower, mu, lo.x)

    def certify(self, lam, max_flows: int, slack=0):
        """Decide ``P(F) - lam H(F) >= -slack`` for every admissible ``F``.

        Branch and bound over cells fixed in or out of ``F``; each node is
        bounded by its Lagrangian dual.  Fixing one cell in removes the empty
        set from the relaxation, which is what lets the bound reach zero.
        Returns ``("certified", None)``, ``("improved", candidate)`` or
        ``("budget", None)``.
        """
        inst, n = self.inst, self.n
        start = inst.flows
        order = np.argsort(-np.asarray(inst.boundary, dtype=float), kind="stable")
        xy = np.stack([inst.cols, inst.rows], axis=1).astype(float)
        stack = [(np.zeros(n, dtype=bool), np.zeros(n, dtype=bool))]
        while stack:
            if inst.flows - start > max_flows:
                return "budget", None
            force, forbid = stack.pop()
            if force.any():
                s = self.mu_search(lam, forbid, force)
                for c in s.candidates:
                    if c.ratio() < lam and _beats(c, lam, slack):
                        return "improved", c
                if s.lower_bound >= -slack:
                    continue
                free = ~force & ~forbid
                pool = free & s.large if s.large is not None else free
                if not pool.any():
                    pool = free
                if not pool.any():
                    continue
                # branch on the free cell farthest from the fixed-in cells
                centre = xy[force].mean(axis=0)
                idx = np.nonzero(pool)[0]
                c = idx[int(np.argmax(((xy[idx] - centre) ** 2).sum(axis=1)))]
            else:
                free = ~forbid
                if not free.any():
                    continue
                c = next(i for i in order if free[i])
            out = forbid.copy()
            out[c] = True
            inn = force.copy()
            inn[c] = True
            stack.append((force, out))
            stack.append((inn, forbid))
        return "certified", None

    def num(self, v):
        return Fraction(v) if self.exact else float(v)

    def candidates(self, lam) -> tuple[list, _Search]:
        """Feasible competitors found at level ``lam`` plus the global dual search.

        Besides the global multiplier search, each direction contributes a
        half-slab cut with the volume bound inactive and a few boxes that fix
        a leading slab into ``F`` and a trailing slab out of it.
        """
        main = self.mu_search(lam, key=-1)
        found = list(main.candidates)
        zero = self.num(0)
        for k, (half, boxes) in enumerate(self.regions):
            xmin, xmax = self.inst.solve(lam, zero, ~half)
            found += [c for c in (self.cand(xmin), self.cand(xmax)) if self.feasible(c)]
            for j, (force, allowed) in enumerate(boxes):
                found += self.mu_search(lam, ~allowed, force if force.any() else None, key=(k, j)).candidates
        return found, main

    def band_refine(self, c: _Candidate, widths=BAND_WIDTHS, repeats: int = 3) -> _Candidate:
        """Re-optimise ``c`` inside bands around its free boundary.

        Cells farther than ``w`` cells from the free boundary keep their side;
        the band is re-cut with the multiplier search at the level of the
        incumbent.  A narrow band spans a narrow volume range, where the
        penalty tracks the volume bound closely.
        """
        best = c
        for w in widths:
            for _ in range(repeats):
                force, forbid = self._band(best, w)
                s = self.mu_search(best.ratio(), forbid, force if force.any() else None)
                if not s.candidates:
                    break
                nb = min(s.candidates, key=lambda q: q.ratio())
                if nb.ratio() < best.ratio():
                    best = nb
                else:
                    break
        if self.polish:
            best = self.local_search(best)
        return best

    def _band(self, c: _Candidate, w: float) -> tuple[np.ndarray, np.ndarray]:
        inst = self.inst
        f = inst.to_mask(c.x)
        rest = inst.domain.mask & ~f
        dist = np.where(f, ndimage.distance_transform_edt(f), ndimage.distance_transform_edt(rest))
        near = dist[inst.rows, inst.cols] <= w
        return c.x & ~near, ~c.x & ~near

    def local_search(self, c: _Candidate, max_moves: int | None = None) -> _Candidate:
        """Greedy single-cell flips that keep the competitor feasible."""
        inst = self.inst
        x = c.x.copy()
        p, h, v = c.perimeter, c.interface, c.volume
        pw = inst.pair_w
        b = inst.boundary
        max_moves = 4 * self.n if max_moves is None else max_moves
        for _ in range(max_moves):
            cut = x[inst.pair_i] != x[inst.pair_j]
            sign = np.where(cut, -pw, pw)
            dpair = np.zeros(self.n, dtype=pw.dtype)
            np.add.at(dpair, inst.pair_i, sign)
            np.add.at(dpair, inst.pair_j, sign)
            add = np.where(x, -1, 1)
            new_h = h + add * b
            new_p = p + dpair + add * b
            new_v = v + add
            ok = (new_v > 0) & (new_v <= self.half) & (new_h > 0)
            if not ok.any():
                break
            if self.exact:
                # compare new_p/new_h < p/h by cross multiplication
                better = ok & (new_p * h < p * new_h)
                if not better.any():
                    break
                idx = np.nonzero(better)[0]
                k = idx[0]
                for j in idx[1:]:
                    if new_p[j] * new_h[k] < new_p[k] * new_h[j]:
                        k = j
            else:
                r = np.where(ok, new_p / np.where(new_h > 0, new_h, 1), np.inf)
                k = int(np.argmin(r))
                if not r[k] < (p / h) * (1 - 1e-14):
                    break
            x[k] = ~x[k]
            if self.exact:
                p, h, v = int(new_p[k]), int(new_h[k]), int(new_v[k])
            else:
                p, h, v = float(new_p[k]), float(new_h[k]), int(new_v[k])
        return self.cand(x)


def _beats(c: _Candidate, lam, slack) -> bool:
    """Whether ``c`` beats level ``lam`` by more than ``slack`` in energy."""
    return c.perimeter - lam * c.interface < -slack


def _direction_regions(inst: CutInstance, directions: int) -> list[tuple[np.ndarray, list]]:
    """Per direction: the leading half of ``E`` and the ``(force, allowed)`` boxes."""
    out = []
    n = inst.n
    if directions <= 0 or n < 2:
        return out
    x = inst.cols.astype(float)
    y = -inst.rows.astype(float)
    for k in range(directions):
        a = 2 * math.pi * k / directions
        proj = np.round(x * math.cos(a) + y * math.sin(a), 9)
        order = np.lexsort((np.arange(n), -proj))

        def lead(frac: float) -> np.ndarray:
            m = np.zeros(n, dtype=bool)
            m[order[: int(frac * n)]] = True
            return m

        boxes = [(lead(f1), lead(f2)) for f1, f2 in BOXES]
        out.append((lead(0.5), boxes))
    return out


def _check_domain(e: GridDomain) -> None:
    if not e.mask.any():
        raise FeasibleSetEmpty("empty domain")
    if not is_connected(e.mask):
        raise DisconnectedDomain("domain is not 4-connected")
    if int(e.mask.sum()) < 2:
        raise FeasibleSetEmpty("a single cell admits no competitor with 0 < |F| <= |E|/2")


def tau_grid(
    e: GridDomain,
    metric: Metric | str | None = None,
    lambda_tolerance: float = 1e-9,
    volume_mode: str = "bracket",
    seeds: Iterable[np.ndarray] = (),
    mu_hint: float | None = None,
    directions: int | None = None,
    polish: bool | None = None,
    certify_flows: int | None = None,
    max_iter: int = 200,
) -> TauResult:
    """Trace constant of a 4-connected grid domain.

    ``volume_mode`` is ``"bracket"`` (Dinkelbach, then a branch-and-bound
    certificate at the incumbent, then bisection on the level if that runs
    out of its ``certify_flows`` budget) or ``"dinkelbach"`` (stop after the
    Dinkelbach phase; the lower end of the bracket is then the trivial 1).  ``seeds`` are optional starting competitors and
    ``mu_hint`` (per unit area) warm-starts the multiplier search.
    ``directions`` sets the number of directional slab and box searches
    (8, or 4 above 20000 cells) and
    single-cell ``polish`` defaults on for grids of at most 4096 cells.  The
    certificate gets ``certify_flows`` max-flow calls, by default only on
    grids of at most 400 cells.
    """
    if metric is not None:
        e = e.with_metric(metric)
    if volume_mode not in ("bracket", "dinkelbach"):
        raise ValueError(f"unknown volume_mode {volume_mode!r}")
    _check_domain(e)
    inst = CutInstance.build(e)
    n = inst.n
    directions = (8 if n <= 20000 else 4) if directions is None else directions
    polish = (n <= 4096) if polish is None else polish
    solver = _Solver(inst, tol=max(lambda_tolerance, 1e-12), directions=directions, polish=polish)
    exact = inst.integral

    def better(c, ref):
        return c.ratio() < ref.ratio()

    # initial competitor: the boundary cell with the longest exposed length
    x0 = np.zeros(n, dtype=bool)
    x0[int(np.argmax(inst.boundary))] = True
    best = solver.cand(x0)
    # the leading half of E in each direction is a feasible competitor
    for half, _ in solver.regions:
        c = solver.cand(half)
        if solver.feasible(c) and better(c, best):
            best = c
    for s in seeds:
        c = solver.cand(inst.from_mask(np.asarray(s, dtype=bool) & e.mask))
        if solver.feasible(c) and better(c, best):
            best = c
    if mu_hint is not None:
        m = mu_hint * e.spacing
        solver._warm[-1] = (np.ones(n, bool), np.zeros(n, bool), Fraction(m).limit_denominator(10**6) if exact else m)

    def improve(level):
        nonlocal best
        found, main = solver.candidates(level)
        for c in found:
            if better(c, best):
                best = c
        best = solver.band_refine(best)
        return main

    iterations = 0
    main = None
    while iterations < max_iter:
        lam = best.ratio()
        iterations += 1
        main = improve(lam)
        if not best.ratio() < lam - (0 if exact else lambda_tolerance * lam):
            break

    def slack():
        return 0 if exact else lambda_tolerance * float(best.interface)

    # certification: branch and bound at the incumbent level, then bisection
    # on the level when the budget runs out
    budget = certify_flows if certify_flows is not None else (2000 if n <= 64 else 500 if n <= 400 else 0)
    lo = Fraction(1) if exact else 1.0  # P(F) >= H(F) for every F
    certified = False
    if volume_mode == "bracket" and budget > 0:
        while iterations < max_iter:
            iterations += 1
            lam = best.ratio()
            status, c = solver.certify(lam, budget, slack())
            if status == "improved":
                best = c
                continue
            if status == "certified":
                lo, certified = lam, True
            break
        while not certified and iterations < max_iter:
            hi = best.ratio()
            if float(hi - lo) <= lambda_tolerance * float(hi):
                break
            iterations += 1
            mid = (lo + hi) / 2
            status, c = solver.certify(mid, budget, slack())
            if status == "improved":
                best = c
            elif status == "certified":
                lo = mid
            else:
                break
    lam = best.ratio()

    h = e.spacing
    gap = (main.lower_bound if main is not None and main.lower_bound is not None else 0)
    return TauResult(
        tau=float(lam),
        optimizer=GridSubset(e, inst.to_mask(best.x)),
        lambda_bracket=(float(lo), float(lam)),
        volume_penalty=float(main.mu) / h if main is not None else 0.0,
        feasible=bool(solver.feasible(best)),
        iterations=iterations,
        exactness=Exactness.EXACT if certified else Exactness.PENALTY_BRACKETED,
        perimeter=float(best.perimeter) * h,
        interface=float(best.interface) * h,
        dual_gap=float(gap) * h,
        tau_exact=lam if exact else None,
        flows=inst.flows,
    )


# --------------------------------------------------------------------------- oracles


def _cell_graph(e: GridDomain):
    inst = CutInstance.build(e)
    return inst


def _enumerate_masks(n: int) -> np.ndarray:
    """All ``2**n`` boolean vectors as rows (bit ``k`` of the row index is cell ``k``)."""
    codes = np.arange(1 << n, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n)) & 1).astype(bool)


def _batched_measures(inst: CutInstance, x: np.ndarray):
    cut = x[:, inst.pair_i] != x[:, inst.pair_j]
    inter = x @ inst.boundary
    perim = cut @ inst.pair_w + inter
    vol = x.sum(axis=1)
    return perim, inter, vol


def tau_bruteforce(e: GridDomain, max_cells: int = 22) -> TauResult:
    """Exhaustive minimum over all subsets with ``0 < |F| <= |E|/2`` and positive interface."""
    n = int(e.mask.sum())
    if n > max_cells:
        raise CellBudgetExceeded(f"{n} cells exceed the brute-force budget of {max_cells}")
    if n < 2:
        raise FeasibleSetEmpty("a single cell admits no competitor with 0 < |F| <= |E|/2")
    inst = CutInstance.build(e)
    best_num, best_den, best_code = None, None, None
    chunk = 1 << 16
    for start in range(0, 1 << n, chunk):
        codes = np.arange(start, min(start + chunk, 1 << n), dtype=np.int64)
        x = ((codes[:, None] >> np.arange(n)) & 1).astype(bool)
        perim, inter, vol = _batched_measures(inst, x)
        ok = (vol > 0) & (2 * vol <= n) & (inter > 0)
        if not ok.any():
            continue
        p = perim[ok]
        q = inter[ok]
        c = codes[ok]
        if inst.integral:
            # exact comparison of fractions p/q through cross multiplication
            k = 0
            for idx in range(1, p.size):
                if p[idx] * q[k] < p[k] * q[idx]:
                    k = idx
            cand = (int(p[k]), int(q[k]), int(c[k]))
        else:
            r = p / q
            k = int(np.argmin(r))
            cand = (float(p[k]), float(q[k]), int(c[k]))
        if best_num is None or cand[0] * best_den < best_num * cand[1]:
            best_num, best_den, best_code = cand
    x = ((best_code >> np.arange(n)) & 1).astype(bool)
    h = e.spacing
    tau_exact = Fraction(best_num, best_den) if inst.integral else None
    tau = float(tau_exact) if tau_exact is not None else best_num / best_den
    return TauResult(
        tau=tau,
        optimizer=GridSubset(e, inst.to_mask(x)),
        lambda_bracket=(tau, tau),
        volume_penalty=0.0,
        feasible=True,
        iterations=1 << n,
        exactness=Exactness.EXACT,
        perimeter=float(best_num) * h,
        interface=float(best_den) * h,
        tau_exact=tau_exact,
    )


def mazya_ratio_bruteforce(omega: GridDomain, max_cells: int = 20) -> float:
    """Smallest admissible constant in ``min(P(F; ext), P(O \\ F; ext)) <= C P(F; O)``.

    Sup over nonempty proper subsets ``F`` of the cell set.  ``P(F; ext)`` is the
    boundary of ``F`` lying on the boundary of the domain; ``P(F; O)`` the part
    inside.  Returns ``inf`` if some proper subset has no interior boundary.
    """
    return float(mazya_ratio_bruteforce_exact(omega, max_cells))


def mazya_ratio_bruteforce_exact(omega: GridDomain, max_cells: int = 20):
    n = int(omega.mask.sum())
    if n > max_cells:
        raise CellBudgetExceeded(f"{n} cells exceed the brute-force budget of {max_cells}")
    if n < 2:
        raise FeasibleSetEmpty("need at least two cells for a proper subset")
    inst = CutInstance.build(omega)
    total_b = inst.boundary.sum()
    best = None
    chunk = 1 << 16
    full = (1 << n) - 1
    for start in range(1, full, chunk):
        codes = np.arange(start, min(start + chunk, full), dtype=np.int64)
        x = ((codes[:, None] >> np.arange(n)) & 1).astype(bool)
        perim, inter, _ = _batched_measures(inst, x)
        inner = perim - inter
        outer = np.minimum(inter, total_b - inter)
        if np.any(inner == 0):
            return math.inf
        if inst.integral:
            k = 0
            for idx in range(1, outer.size):
                if outer[idx] * inner[k] > outer[k] * inner[idx]:
                    k = idx
            cand = Fraction(int(outer[k]), int(inner[k]))
        else:
            r = outer / inner
            cand = float(r.max())
        if best is None or cand > best:
            best = cand
    return best
