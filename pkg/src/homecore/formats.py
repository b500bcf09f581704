"""Netpbm (PGM/PPM) and ASCII PLY readers and writers."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ParseError


def _read_header(data: bytes, magic: bytes):
    """Return (width, height, maxval, offset) for a binary netpbm image."""
    if not data.startswith(magic):
        raise ParseError(f"expected {magic.decode()} netpbm image")
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise ParseError("truncated netpbm header")
        fields.append(int(data[start:pos]))
    # exactly one whitespace byte separates header and raster
    return fields[0], fields[1], fields[2], pos + 1


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM (P5); 16-bit samples are big-endian."""
    data = Path(path).read_bytes()
    width, height, maxval, offset = _read_header(data, b"P5")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height
    if len(data) - offset < count * dtype.itemsize:
        raise ParseError(f"{path}: raster holds fewer than {count} samples")
    raster = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
    return raster.reshape(height, width).astype(np.uint16 if maxval > 255 else np.uint8)


def write_pgm(path, image: np.ndarray) -> None:
    image = np.asarray(image)
    height, width = image.shape
    if image.dtype == np.uint8:
        maxval, raster = 255, image.tobytes()
    else:
        maxval, raster = 65535, image.astype(">u2").tobytes()
    Path(path).write_bytes(b"P5\n%d %d\n%d\n" % (width, height, maxval) + raster)


def ppm_bytes(image: np.ndarray) -> bytes:
    image = np.asarray(image, dtype=np.uint8)
    height, width, _ = image.shape
    return b"P6\n%d %d\n255\n" % (width, height) + image.tobytes()


def write_ppm(path, image: np.ndarray) -> None:
    Path(path).write_bytes(ppm_bytes(image))


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    width, height, _, offset = _read_header(data, b"P6")
    if len(data) - offset < width * height * 3:
        raise ParseError(f"{path}: raster holds fewer than {width * height} pixels")
    raster = np.frombuffer(data, dtype=np.uint8, count=width * height * 3, offset=offset)
    return raster.reshape(height, width, 3).copy()


def depth_from_millimeters(raw: np.ndarray) -> np.ndarray:
    return np.asarray(raw, dtype=float) / 1000.0


def depth_to_millimeters(depth: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(depth) * 1000.0), 0, 65535).astype(np.uint16)


def write_ply(path, points: np.ndarray) -> None:
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    lines = ["ply", "format ascii 1.0", f"element vertex {len(points)}",
             "property float x", "property float y", "property float z", "end_header"]
    lines += ["%r %r %r" % tuple(float(c) for c in p) for p in points]
    Path(path).write_text("\n".join(lines) + "\n")


def read_ply(path) -> np.ndarray:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError(f"{path}: not a PLY file")
    count = None
    for i, line in enumerate(lines):
        parts = line.split()
        if parts[:2] == ["format", "binary_little_endian"] or parts[:2] == ["format", "binary_big_endian"]:
            raise ParseError(f"{path}: only ASCII PLY is supported")
        if parts[:2] == ["element", "vertex"]:
            count = int(parts[2])
        if parts == ["end_header"]:
            body = lines[i + 1:i + 1 + (count or 0)]
            break
    else:
        raise ParseError(f"{path}: missing end_header")
    try:
        pts = np.array([[float(v) for v in row.split()[:3]] for row in body], dtype=float)
    except ValueError as exc:
        raise ParseError(f"{path}: bad vertex row: {exc}") from exc
    return pts.reshape(-1, 3)
