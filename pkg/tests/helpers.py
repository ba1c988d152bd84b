"""Shared generators for the test suite."""

from __future__ import annotations

import numpy as np

from tracelab.geometry import GridDomain


def random_polyomino(rng: np.random.Generator, cells: int, metric: str = "l1") -> GridDomain:
    """A 4-connected mask of exactly ``cells`` cells, grown from one seed, with an empty ring."""
    occupied = {(0, 0)}
    while len(occupied) < cells:
        frontier = sorted(
            {(i + di, j + dj) for i, j in occupied for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1))} - occupied
        )
        occupied.add(frontier[rng.integers(len(frontier))])
    ii = np.array([c[0] for c in occupied])
    jj = np.array([c[1] for c in occupied])
    m = np.zeros((ii.max() - ii.min() + 3, jj.max() - jj.min() + 3), dtype=bool)
    m[ii - ii.min() + 1, jj - jj.min() + 1] = True
    return GridDomain(m, 1.0, metric)


def symmetries(mask: np.ndarray):
    """The eight images of a mask under the square-lattice symmetry group."""
    for k in range(4):
        r = np.rot90(mask, k)
        yield r
        yield r.T
