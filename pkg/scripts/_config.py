"""Frozen-dataclass configs with one ``--flag`` per field."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys


def parse(cls, argv=None):
    p = argparse.ArgumentParser(description=(cls.__doc__ or "").strip())
    for f in dataclasses.fields(cls):
        kind = f.type if isinstance(f.type, type) else eval(f.type)  # noqa: S307 - annotations are literal types
        if kind is tuple or str(f.type).startswith("tuple"):
            p.add_argument("--" + f.name.replace("_", "-"), type=float, nargs="+", default=f.default)
        else:
            p.add_argument("--" + f.name.replace("_", "-"), type=kind, default=f.default)
    p.add_argument("--out", default=None, help="JSON result path (stdout when omitted)")
    args = vars(p.parse_args(argv))
    out = args.pop("out")
    return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in args.items()}), out


def emit(cfg, result, out):
    text = json.dumps({"config": dataclasses.asdict(cfg), "result": result}, indent=2, sort_keys=True, default=float)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")
