"""CSV and PPM writers with deterministic formatting."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def fmt(x) -> str:
    """Text form of a table cell; reals get 17 significant digits."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    return "" if x is None else str(x)


def write_csv(path, preamble: Sequence[str], columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Write ``rows`` under ``columns``, after the free-form ``preamble`` lines."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        for line in preamble:
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(x) for x in r])
    return path


def read_csv(path) -> tuple[list[str], list[str], list[list[str]]]:
    """Split a file written by :func:`write_csv` into preamble, header and rows.

    Preamble lines are those starting with ``#`` or containing ``=``.
    """
    lines = Path(path).read_text().splitlines()
    k = 0
    while k < len(lines) and (lines[k].startswith("#") or "=" in lines[k]):
        k += 1
    rows = list(csv.reader(lines[k:]))
    return lines[:k], rows[0], rows[1:]


def rasterize(points, center: complex, width: float, pixels: int) -> np.ndarray:
    """Boolean image (rows top to bottom) marking pixels hit by a point."""
    pts = np.asarray(points, dtype=complex).ravel()
    pts = pts[np.isfinite(pts)]
    x0 = center.real - width / 2
    y1 = center.imag + width / 2
    col = np.floor((pts.real - x0) / width * pixels).astype(np.int64)
    row = np.floor((y1 - pts.imag) / width * pixels).astype(np.int64)
    ok = (col >= 0) & (col < pixels) & (row >= 0) & (row < pixels)
    img = np.zeros((pixels, pixels), dtype=bool)
    img[row[ok], col[ok]] = True
    return img


def write_ppm(path, mask: np.ndarray) -> Path:
    """Binary PPM (P6): white background, black where ``mask`` is set."""
    path = Path(path)
    h, w = mask.shape
    rgb = np.where(mask[..., None], 0, 255).astype(np.uint8)
    rgb = np.broadcast_to(rgb, (h, w, 3))
    with path.open("wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(rgb).tobytes())
    return path


def read_ppm(path) -> np.ndarray:
    """Inverse of :func:`write_ppm` for files it wrote; returns (h, w, 3) uint8."""
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError(f"{path} is not a binary PPM")
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3)
