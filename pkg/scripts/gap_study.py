"""Trace-constant gap and John growth of the truncated domains."""

from __future__ import annotations

from dataclasses import dataclass

from _config import emit, parse

from tracelab.analysis import john_constant
from tracelab.construction import (
    OmegaDeltaSpec,
    distance_to_boundary,
    generate_family,
    rasterize_omega,
    tau_gap_study,
)


@dataclass(frozen=True)
class Config:
    """Gap tau(disk) - tau(Omega^delta) and the John bracket at two truncations."""

    deltas: tuple = (0.1, 0.15, 0.2)
    resolution: int = 512
    k0: int = 2
    K: int = 6
    john_K: tuple = (3, 5)


def main(argv=None):
    cfg, out = parse(Config, argv)
    gaps = [r.to_dict() for r in tau_gap_study(list(cfg.deltas), cfg.resolution, cfg.k0, cfg.K)]
    john = []
    for d in cfg.deltas:
        row = {"delta": d}
        for K in map(int, cfg.john_K):
            fam = generate_family(OmegaDeltaSpec(2, d, cfg.k0, K))
            dom, _ = rasterize_omega(fam, cfg.resolution)
            rep = john_constant(dom, analytic=lambda p, f=fam: distance_to_boundary(f, p), density=False)
            row[f"K{K}"] = list(rep.J_bracket)
        john.append(row)
    emit(cfg, {"gaps": gaps, "john": john}, out)


if __name__ == "__main__":
    main()
