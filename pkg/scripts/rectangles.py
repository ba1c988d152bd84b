"""Trace and Maz'ya constants of the 2l x 2 rectangles."""

from __future__ import annotations

from dataclasses import dataclass

from _config import emit, parse

from tracelab.analysis import mazya_constant
from tracelab.geometry import rectangle


@dataclass(frozen=True)
class Config:
    """Rectangle family R_l = [0, 2l] x [0, 2] on the unit lattice."""

    lengths: tuple = (1, 2, 4, 8)


def main(argv=None):
    cfg, out = parse(Config, argv)
    rows = []
    for l in map(int, cfg.lengths):
        rep = mazya_constant(rectangle(2 * l, 2))
        rows.append({"l": l, "tau": rep.tau, "mazya_certified": rep.certified, "mazya_bruteforce": rep.bruteforce})
    emit(cfg, {"rows": rows}, out)


if __name__ == "__main__":
    main()
