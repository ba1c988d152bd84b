"""PBM mask files with a JSON sidecar for spacing and metric.

Both PBM flavours are read: P1 (ASCII digits) and P4 (packed bits, most
significant bit first, rows padded to whole bytes).  A ``1`` pixel is an
occupied cell.  The sidecar ``<mask>.json`` holds ``{"spacing", "metric"}``.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .geometry import GridDomain, Metric

__all__ = ["read_pbm", "write_pbm", "sidecar_path", "load_domain", "save_domain", "atomic_write"]


def atomic_write(path: str | os.PathLike, data: bytes | str) -> None:
    """Write through a temporary file in the same directory and rename it into place."""
    path = Path(path)
    raw = data.encode() if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _tokens(data: bytes):
    """Whitespace-separated header tokens with ``#`` comments removed; yields (token, end offset)."""
    pos, n = 0, len(data)
    while pos < n:
        c = data[pos : pos + 1]
        if c == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            start = pos
            while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
                pos += 1
            yield data[start:pos], pos


def read_pbm(path: str | os.PathLike) -> np.ndarray:
    data = Path(path).read_bytes()
    toks = _tokens(data)
    try:
        magic, _ = next(toks)
        w, _ = next(toks)
        hgt, end = next(toks)
    except StopIteration:
        raise ValueError(f"{path}: truncated PBM header") from None
    width, height = int(w), int(hgt)
    if width <= 0 or height <= 0:
        raise ValueError(f"{path}: bad PBM size {width}x{height}")
    if magic == b"P4":
        stride = (width + 7) // 8
        body = data[end + 1 : end + 1 + stride * height]
        if len(body) != stride * height:
            raise ValueError(f"{path}: truncated P4 raster")
        bits = np.unpackbits(np.frombuffer(body, dtype=np.uint8).reshape(height, stride), axis=1, bitorder="big")
        return bits[:, :width].astype(bool)
    if magic == b"P1":
        # comments may follow the header; strip them before collecting digits
        text = b"\n".join(line.split(b"#", 1)[0] for line in data[end:].splitlines())
        digits = [c for c in text if c in b"01"]
        if len(digits) < width * height:
            raise ValueError(f"{path}: truncated P1 raster")
        return (np.array(digits[: width * height], dtype=np.uint8) == ord("1")).reshape(height, width)
    raise ValueError(f"{path}: not a PBM file (magic {magic!r})")


def encode_pbm(mask: np.ndarray, binary: bool = True) -> bytes:
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValueError("mask must be 2-D")
    height, width = mask.shape
    if binary:
        body = np.packbits(mask.astype(np.uint8), axis=1, bitorder="big").tobytes()
        return f"P4\n{width} {height}\n".encode() + body
    rows = (" ".join("1" if v else "0" for v in row) for row in mask)
    return f"P1\n{width} {height}\n".encode() + "\n".join(rows).encode() + b"\n"


def write_pbm(path: str | os.PathLike, mask: np.ndarray, binary: bool = True) -> None:
    atomic_write(path, encode_pbm(mask, binary))


def sidecar_path(path: str | os.PathLike) -> Path:
    return Path(str(path) + ".json")


def load_domain(path: str | os.PathLike, spacing: float | None = None, metric: Metric | str | None = None) -> GridDomain:
    """Mask plus sidecar; explicit arguments override the sidecar, which overrides ``h = 1``, L1."""
    mask = read_pbm(path)
    meta = {}
    side = sidecar_path(path)
    if side.exists():
        meta = json.loads(side.read_text())
    h = spacing if spacing is not None else meta.get("spacing", 1.0)
    m = metric if metric is not None else meta.get("metric", "l1")
    return GridDomain(mask, float(h), Metric.parse(m))


def save_domain(path: str | os.PathLike, domain: GridDomain, binary: bool = True) -> None:
    write_pbm(path, domain.mask, binary)
    meta = {"metric": domain.metric.value, "spacing": domain.spacing}
    atomic_write(sidecar_path(path), json.dumps(meta, sort_keys=True) + "\n")
