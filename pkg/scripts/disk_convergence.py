"""Grid trace constant of rasterized disks against the half-moon reference."""

from __future__ import annotations

import time
from dataclasses import dataclass

from _config import emit, parse

from tracelab.construction import halfmoon_seed
from tracelab.geometry import disk
from tracelab.lens import tau_ball
from tracelab.solver import tau_grid


@dataclass(frozen=True)
class Config:
    """Disk convergence study (Crofton16 metric)."""

    resolutions: tuple = (64, 128, 256)
    directions: int = 0


def main(argv=None):
    cfg, out = parse(Config, argv)
    ref = tau_ball(2)
    rows = []
    for n in map(int, cfg.resolutions):
        t = time.perf_counter()
        e = disk(n)
        r = tau_grid(e, seeds=halfmoon_seed(e, ref), volume_mode="dinkelbach", directions=cfg.directions)
        rows.append({"N": n, "tau": r.tau, "rel_error": (r.tau - ref.tau) / ref.tau, "seconds": time.perf_counter() - t})
    emit(cfg, {"tau_ball": ref.tau, "rows": rows}, out)


if __name__ == "__main__":
    main()
