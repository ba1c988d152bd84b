"""Density of the deleted balls near a boundary point of the disk."""

from __future__ import annotations

from dataclasses import dataclass

from _config import emit, parse

from tracelab.construction import OmegaDeltaSpec, density_slope, density_table, generate_family


@dataclass(frozen=True)
class Config:
    """|D cap B(z, r)| / |B(z, r)| at z = (0, 1) over dyadic r."""

    delta: float = 0.2
    k0: int = 2
    K: int = 6
    levels: int = 8


def main(argv=None):
    cfg, out = parse(Config, argv)
    fam = generate_family(OmegaDeltaSpec(2, cfg.delta, cfg.k0, cfg.K))
    rows = density_table(fam, radii=[2.0**-j for j in range(3, 3 + cfg.levels)])
    emit(cfg, {"rows": [vars(r) for r in rows], "slope": density_slope(rows)}, out)


if __name__ == "__main__":
    main()
