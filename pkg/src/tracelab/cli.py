"""``trace-lab`` command line.

Every subcommand has a flat option schema.  Values come from built-in
defaults, then an optional JSON config file (``--config``), then explicit
flags, later sources winning.  Unknown or ill-typed config keys exit with
status 2, computational failures with 1.  JSON reports have sorted keys and
17 significant digits; all files are written atomically after the
computation has finished.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import enum
import hashlib
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

import numpy as np

__all__ = ["Option", "SCHEMAS", "ConfigError", "resolve_config", "dumps", "run", "main"]


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------- value kinds


def _int(v: Any) -> int:
    if isinstance(v, bool):
        raise ConfigError(f"expected an integer, got {v!r}")
    if isinstance(v, int):
        return v
    if isinstance(v, str):
        try:
            return int(v)
        except ValueError:
            pass
    raise ConfigError(f"expected an integer, got {v!r}")


def _float(v: Any) -> float:
    if isinstance(v, bool):
        raise ConfigError(f"expected a number, got {v!r}")
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        try:
            return float(v)
        except ValueError:
            pass
    raise ConfigError(f"expected a number, got {v!r}")


def _str(v: Any) -> str:
    if not isinstance(v, str):
        raise ConfigError(f"expected a string, got {v!r}")
    return v


def _bool(v: Any) -> bool:
    if isinstance(v, bool):
        return v
    raise ConfigError(f"expected true or false, got {v!r}")


def _floats(v: Any) -> list[float]:
    if isinstance(v, str):
        parts = [p for p in v.split(",") if p.strip()]
        return [_float(p.strip()) for p in parts]
    if isinstance(v, list) and v:
        return [_float(p) for p in v]
    raise ConfigError(f"expected a non-empty list of numbers, got {v!r}")


def _auto_int(v: Any) -> int | str:
    if v == "auto":
        return "auto"
    return _int(v)


def _cell(v: Any) -> tuple[int, int] | str:
    if v == "auto":
        return "auto"
    if isinstance(v, str):
        v = v.split(",")
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return (_int(v[0].strip() if isinstance(v[0], str) else v[0]), _int(v[1].strip() if isinstance(v[1], str) else v[1]))
    raise ConfigError(f"expected 'auto' or 'row,col', got {v!r}")


@dataclass(frozen=True)
class Option:
    name: str
    kind: Callable[[Any], Any]
    default: Any
    help: str
    choices: tuple | None = None
    nullable: bool = False

    @property
    def flag(self) -> str:
        return "--" + self.name.replace("_", "-")

    def convert(self, value: Any) -> Any:
        if value is None and (self.nullable or self.default is None):
            return None
        try:
            out = self.kind(value)
        except ConfigError as exc:
            raise ConfigError(f"{self.name}: {exc}") from None
        if self.choices is not None and out not in self.choices:
            raise ConfigError(f"{self.name}: {out!r} not in {list(self.choices)}")
        return out


COMMON = (
    Option("seed", _int, 0, "integer seed for randomized drivers"),
    Option("threads", _int, None, "worker threads (count; falls back to TRACE_LAB_THREADS, then 1)", nullable=True),
    Option("out", _str, None, "JSON report path (file; stdout when omitted)", nullable=True),
)

METRICS = ("l1", "crofton16")

SCHEMAS: dict[str, tuple[Option, ...]] = {
    "tau-ball": (
        Option("n", _int, 2, "dimension (2 or 3)", choices=(2, 3)),
        Option("tolerance", _float, 1e-12, "root-finder and golden-section tolerance (dimensionless)"),
    ),
    "tau-grid": (
        Option("mask", _str, None, "input PBM mask (file; sidecar <mask>.json gives spacing and metric)"),
        Option("metric", _str, None, "perimeter metric, overrides the sidecar", choices=METRICS, nullable=True),
        Option("spacing", _float, None, "cell side h (length units), overrides the sidecar", nullable=True),
        Option("tol", _float, 1e-9, "level tolerance on lambda (dimensionless)"),
        Option("volume_mode", _str, "bracket", "volume handling", choices=("bracket", "dinkelbach")),
        Option("certify_flows", _int, None, "max-flow budget for the certificate (count)", nullable=True),
        Option("optimizer", _str, None, "optimizer PBM path (file; default <out stem>.optimizer.pbm)", nullable=True),
    ),
    "omega-delta": (
        Option("delta", _float, 0.2, "deleted-ball exponent delta (dimensionless, 0 < delta < 1/n^2)"),
        Option("n", _int, 2, "dimension (2 or 3)", choices=(2, 3)),
        Option("k0", _auto_int, "auto", "first generation (integer >= 2, or 'auto')"),
        Option("K", _int, 6, "last generation (integer)"),
        Option("resolution", _int, 512, "cells per unit length N, h = 1/N (0 skips rasterization)"),
        Option("metric", _str, "crofton16", "perimeter metric of the rasterized mask", choices=METRICS),
        Option("mask", _str, None, "rasterized mask output (PBM file)", nullable=True),
        Option("svg", _str, None, "figure output (SVG file)", nullable=True),
        Option("csv", _str, None, "generation and density tables (CSV file prefix)", nullable=True),
    ),
    "classify": (
        Option("mask", _str, None, "input PBM mask (file; sidecar <mask>.json gives spacing and metric)"),
        Option("metric", _str, None, "perimeter metric, overrides the sidecar", choices=METRICS, nullable=True),
        Option("spacing", _float, None, "cell side h (length units), overrides the sidecar", nullable=True),
        Option("center", _cell, "auto", "John center cell as 'row,col' (array indices) or 'auto'"),
        Option("max_cells", _int, 20, "largest domain for the exhaustive Maz'ya ratio (cells)"),
        Option("tol", _float, 1e-9, "level tolerance on lambda (dimensionless)"),
    ),
    "gap-study": (
        Option("deltas", _floats, [0.1, 0.15, 0.2], "comma-separated delta values (dimensionless)"),
        Option("resolution", _int, 256, "cells per unit length N, h = 1/N"),
        Option("k0", _int, 2, "first generation (integer >= 2)"),
        Option("K", _int, 6, "last generation (integer)"),
        Option("metric", _str, "crofton16", "perimeter metric", choices=METRICS),
        Option("john", _bool, False, "also bracket the John constant at K = 3 and K = 5 (analytic distances)"),
        Option("csv", _str, None, "gap table output (CSV file)", nullable=True),
    ),
    "identities": (
        Option("trials", _int, 100, "random mask pairs (count)"),
        Option("size", _int, 8, "side of each random mask (cells)"),
        Option("density", _float, 0.5, "probability that a cell is occupied (dimensionless)"),
        Option("exhaustive", _bool, False, "also run every pair of 3x3 masks (2^18 pairs)"),
        Option("window", _bool, True, "also test a random relative window G per trial"),
    ),
}


def _options(command: str) -> tuple[Option, ...]:
    return SCHEMAS[command] + COMMON


def json_schema() -> dict:
    """Published JSON config schema: allowed keys, defaults and help per subcommand."""
    out = {}
    for cmd in SCHEMAS:
        out[cmd] = {
            o.name: {"default": o.default, "help": o.help, **({"choices": list(o.choices)} if o.choices else {})}
            for o in _options(cmd)
        }
        out[cmd]["subcommand"] = {"default": cmd, "help": "must equal the subcommand if present"}
    return out


def resolve_config(command: str, file_values: dict | None, flag_values: dict) -> dict:
    """Defaults, overridden by config-file values, overridden by flags; every key validated."""
    opts = {o.name: o for o in _options(command)}
    cfg = {name: o.default for name, o in opts.items()}
    for source in (file_values or {}, flag_values):
        for key, value in source.items():
            if key == "subcommand":
                if value != command:
                    raise ConfigError(f"config is for {value!r}, not {command!r}")
                continue
            if key not in opts:
                raise ConfigError(f"unknown key {key!r} for {command}")
            cfg[key] = opts[key].convert(value)
    for name in ("mask",):
        if name in opts and opts[name].default is None and command in ("tau-grid", "classify") and cfg[name] is None:
            raise ConfigError(f"{command} needs --mask")
    if cfg["threads"] is None:
        env = os.environ.get("TRACE_LAB_THREADS")
        cfg["threads"] = opts["threads"].convert(env) if env else 1
    if cfg["threads"] < 1:
        raise ConfigError("threads must be at least 1")
    return cfg


# --------------------------------------------------------------------------- output


def _plain(obj: Any) -> Any:
    """Recursively convert reports into JSON-ready values."""
    if hasattr(obj, "to_dict") and callable(obj.to_dict):
        return _plain(obj.to_dict())
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, enum.Enum):
        return _plain(obj.value)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating, Fraction)):
        return float(obj)
    return obj


def _fmt(x: float) -> str:
    return format(x, ".17g") if math.isfinite(x) else "null"


def _encode(obj: Any, out: list[str]) -> None:
    if obj is None:
        out.append("null")
    elif isinstance(obj, bool):
        out.append("true" if obj else "false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(_fmt(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        out.append("{")
        for i, k in enumerate(sorted(obj)):
            if i:
                out.append(", ")
            out.append(json.dumps(k) + ": ")
            _encode(obj[k], out)
        out.append("}")
    elif isinstance(obj, list):
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(", ")
            _encode(v, out)
        out.append("]")
    else:
        raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps(obj: Any) -> str:
    """Deterministic JSON: sorted keys, 17 significant digits, non-finite as null."""
    out: list[str] = []
    _encode(_plain(obj), out)
    return "".join(out) + "\n"


def _csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) if isinstance(v, float) else v for v in _plain(row)])
    return buf.getvalue()


def _mapper(threads: int):
    if threads <= 1:
        return map, None
    pool = ThreadPoolExecutor(max_workers=threads)
    return pool.map, pool


# --------------------------------------------------------------------------- subcommands


def _tau_ball(cfg: dict) -> tuple[dict, dict]:
    from .lens import tau_ball

    res = tau_ball(cfg["n"], tolerance=cfg["tolerance"])
    return res.to_dict(), {}


def _load(cfg: dict):
    from .maskio import load_domain

    try:
        return load_domain(cfg["mask"], cfg["spacing"], cfg["metric"])
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read mask: {exc}") from None


def _tau_grid(cfg: dict) -> tuple[dict, dict]:
    from .maskio import encode_pbm
    from .solver import tau_grid

    dom = _load(cfg)
    res = tau_grid(dom, lambda_tolerance=cfg["tol"], volume_mode=cfg["volume_mode"], certify_flows=cfg["certify_flows"])
    report = res.to_dict()
    report["metric"] = dom.metric.value
    report["spacing"] = dom.spacing
    report["cells"] = dom.cells
    if res.tau_exact is not None:
        report["tau_exact"] = f"{res.tau_exact.numerator}/{res.tau_exact.denominator}"
    files = {}
    target = cfg["optimizer"]
    if target is None and cfg["out"] is not None:
        target = str(Path(cfg["out"]).with_suffix("")) + ".optimizer.pbm"
    if target is not None:
        files[target] = encode_pbm(res.optimizer.mask)
        report["optimizer_mask"] = target
    return report, files


def _omega_delta(cfg: dict) -> tuple[dict, dict]:
    from .construction import (
        OmegaDeltaSpec,
        construction_bounds,
        family_svg,
        find_k0,
        generate_family,
        rasterize_omega,
        verify_family,
    )
    from .lens import tau_ball
    from .maskio import encode_pbm

    n = cfg["n"]
    k0 = cfg["k0"]
    report: dict = {}
    if k0 == "auto":
        k0r = find_k0(cfg["delta"], tau_ball(n), n=n)
        k0 = k0r.k0
        report["k0_search"] = k0r
    spec = OmegaDeltaSpec(n, cfg["delta"], k0, cfg["K"])
    fam = generate_family(spec, verify=False)
    check = verify_family(fam, seed=cfg["seed"])
    report["family_check"] = check
    report["family_ok"] = check.ok
    bounds = construction_bounds(fam)
    report["construction"] = bounds
    report["balls"] = len(fam)
    files: dict = {}
    if cfg["resolution"] and n == 2:
        dom, cov = rasterize_omega(fam, cfg["resolution"], cfg["metric"])
        report["coverage"] = cov
        report["cells"] = dom.cells
        if cfg["mask"]:
            files[cfg["mask"]] = encode_pbm(dom.mask)
            files[cfg["mask"] + ".json"] = dumps({"metric": dom.metric.value, "spacing": dom.spacing}).encode()
    if cfg["svg"]:
        files[cfg["svg"]] = family_svg(fam).encode()
    if cfg["csv"]:
        gen = [dataclasses.astuple(g) for g in bounds.generations]
        header = [f.name for f in dataclasses.fields(bounds.generations[0])] if gen else []
        files[cfg["csv"] + ".generations.csv"] = _csv(header, gen).encode()
        den = [dataclasses.astuple(d) for d in bounds.density]
        header = [f.name for f in dataclasses.fields(bounds.density[0])] if den else []
        files[cfg["csv"] + ".density.csv"] = _csv(header, den).encode()
    if not check.ok:
        raise RuntimeError(f"family invariants violated: {check.failures()}")
    return report, files


def _classify(cfg: dict) -> tuple[dict, dict]:
    from .analysis import classify

    dom = _load(cfg)
    rep = classify(dom, cfg["center"], max_cells=cfg["max_cells"], lambda_tolerance=cfg["tol"])
    return rep.to_dict(), {}


GAP_COLUMNS = [
    "delta",
    "k0",
    "K",
    "resolution",
    "tau_ball_ref",
    "tau_omega_estimate",
    "tau_disk_grid",
    "gap",
    "gap_grid",
    "exactness",
    "mu_of_delta",
]


def _gap_study(cfg: dict) -> tuple[dict, dict]:
    from .construction import tau_gap_study

    fn, pool = _mapper(cfg["threads"])
    try:
        reports = tau_gap_study(cfg["deltas"], cfg["resolution"], cfg["k0"], cfg["K"], metric=cfg["metric"], map_fn=fn)
        john = _gap_john(cfg, fn) if cfg["john"] else None
    finally:
        if pool is not None:
            pool.shutdown()
    out = {"reports": reports, "all_gaps_positive": all(r.gap > 0 for r in reports)}
    rows = [[getattr(r, c) for c in GAP_COLUMNS] for r in reports]
    header = list(GAP_COLUMNS)
    if john is not None:
        out["john"] = john
        header += ["J_hi_K3", "J_hi_K5"]
        rows = [row + [j["K3"]["J_hi"], j["K5"]["J_hi"]] for row, j in zip(rows, john)]
    files = {cfg["csv"]: _csv(header, rows).encode()} if cfg["csv"] else {}
    return out, files


def _gap_john(cfg: dict, fn) -> list[dict]:
    from .analysis import john_constant
    from .construction import OmegaDeltaSpec, distance_to_boundary, generate_family, rasterize_omega

    def job(args):
        delta, K = args
        fam = generate_family(OmegaDeltaSpec(2, delta, cfg["k0"], K))
        dom, _ = rasterize_omega(fam, cfg["resolution"], cfg["metric"])
        return john_constant(dom, "auto", analytic=lambda p: distance_to_boundary(fam, p), density=False).to_dict()

    jobs = [(d, K) for d in cfg["deltas"] for K in (3, 5)]
    res = list(fn(job, jobs))
    return [{"delta": d, "K3": res[2 * i], "K5": res[2 * i + 1]} for i, d in enumerate(cfg["deltas"])]


def _identities(cfg: dict) -> tuple[dict, dict]:
    from .geometry import identity_residuals_batch

    rng = np.random.default_rng(cfg["seed"])
    t, s = cfg["trials"], cfg["size"]
    if t < 1 or s < 1:
        raise ConfigError("trials and size must be positive")
    e = rng.random((t, s, s)) < cfg["density"]
    f = rng.random((t, s, s)) < cfg["density"]
    names = ["intersection", "difference", "union", "submodular"]
    res = identity_residuals_batch(e, f)
    report: dict = {
        "trials": t,
        "size": s,
        "metric": "l1",
        "max_abs_residual": {k: int(np.abs(res[:, i]).max()) for i, k in enumerate(names)},
        "digest": hashlib.sha256(np.packbits(e).tobytes() + np.packbits(f).tobytes()).hexdigest(),
    }
    ok = not res.any()
    if cfg["window"]:
        g = rng.random((t, s, s)) < 0.7
        rw = np.concatenate([identity_residuals_batch(e[i : i + 1], f[i : i + 1], g[i]) for i in range(t)])
        report["max_abs_residual_windowed"] = {k: int(np.abs(rw[:, i]).max()) for i, k in enumerate(names)}
        ok = ok and not rw.any()
    if cfg["exhaustive"]:
        codes = np.arange(512)
        masks = ((codes[:, None] >> np.arange(9)) & 1).astype(bool).reshape(512, 3, 3)
        worst = np.zeros(4, dtype=np.int64)
        for i in range(512):
            r = identity_residuals_batch(np.broadcast_to(masks[i], masks.shape), masks)
            worst = np.maximum(worst, np.abs(r).max(axis=0))
        report["exhaustive_3x3"] = {"pairs": 512 * 512, **{k: int(worst[i]) for i, k in enumerate(names)}}
        ok = ok and not worst.any()
    report["all_zero"] = bool(ok)
    if not ok:
        raise RuntimeError("identity residual nonzero: " + dumps(report))
    return report, {}


COMMANDS: dict[str, Callable[[dict], tuple[dict, dict]]] = {
    "tau-ball": _tau_ball,
    "tau-grid": _tau_grid,
    "omega-delta": _omega_delta,
    "classify": _classify,
    "gap-study": _gap_study,
    "identities": _identities,
}

HELP = {
    "tau-ball": "trace constant of the unit ball from the half-moon family",
    "tau-grid": "trace constant of a PBM mask by exact ratio minimization",
    "omega-delta": "build, verify and rasterize a truncated counterexample domain",
    "classify": "trace, Maz'ya, John, density and deficit figures of a PBM mask",
    "gap-study": "trace-constant gap between the disk and truncated domains",
    "identities": "randomized check of the perimeter set-operation identities",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trace-lab", description=__doc__.splitlines()[0])
    p.add_argument("--schema", action="store_true", help="print the JSON config schema and exit")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    for cmd, opts in SCHEMAS.items():
        sp = sub.add_parser(cmd, help=HELP[cmd], description=HELP[cmd])
        sp.add_argument("--config", help="JSON config file (flat keys of this subcommand)", default=argparse.SUPPRESS)
        for o in opts + COMMON:
            extra = {} if o.choices is None else {"choices": [str(c) for c in o.choices]}
            text = f"{o.help} [default: {o.default}]"
            if o.kind is _bool:
                sp.add_argument(o.flag, dest=o.name, action=argparse.BooleanOptionalAction, default=argparse.SUPPRESS, help=text)
            else:
                sp.add_argument(o.flag, dest=o.name, default=argparse.SUPPRESS, help=text, **extra)
    return p


def run(command: str, cfg: dict) -> int:
    """Execute a resolved config; returns the exit status."""
    try:
        report, files = COMMANDS[command](cfg)
    except ConfigError as exc:
        print(f"trace-lab: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # computational failure
        print(f"trace-lab: {command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    from .maskio import atomic_write

    # neither the thread count nor the report path changes results
    shown = {k: v for k, v in cfg.items() if k not in ("threads", "out")}
    text = dumps({"command": command, "config": shown, "result": report})
    for path, data in files.items():
        atomic_write(path, data)
    if cfg["out"]:
        atomic_write(cfg["out"], text)
    else:
        sys.stdout.write(text)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    if args.pop("schema", False):
        sys.stdout.write(dumps(json_schema()))
        return 0
    command = args.pop("command", None)
    if command is None:
        parser.print_help()
        return 2
    file_values = None
    if "config" in args:
        path = args.pop("config")
        try:
            file_values = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            print(f"trace-lab: cannot read config {path}: {exc}", file=sys.stderr)
            return 2
        if not isinstance(file_values, dict):
            print("trace-lab: config must be a JSON object", file=sys.stderr)
            return 2
    try:
        cfg = resolve_config(command, file_values, args)
    except ConfigError as exc:
        print(f"trace-lab: {exc}", file=sys.stderr)
        return 2
    return run(command, cfg)


if __name__ == "__main__":
    sys.exit(main())
