"""File formats: PGM/CSV images, attack specs, bound files, label lists."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidTransformError
from .transforms import Attack, Image


def _pgm_tokens(data: bytes, count: int, start: int = 0):
    """Header tokens of a PGM file, skipping comments; returns (tokens, offset after last)."""
    tokens, pos, n = [], start, len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        if pos >= n:
            raise FormatError("truncated PGM header")
        end = pos
        while end < n and not data[end:end + 1].isspace() and data[end:end + 1] != b"#":
            end += 1
        tokens.append(data[pos:end])
        pos = end
    return tokens, pos


def read_pgm(path) -> Image:
    data = Path(path).read_bytes()
    try:
        (magic, w, h, maxval), pos = _pgm_tokens(data, 4)
        w, h, maxval = int(w), int(h), int(maxval)
    except (ValueError, FormatError) as exc:
        raise FormatError(f"{path}: bad PGM header ({exc})") from None
    if magic not in (b"P2", b"P5"):
        raise FormatError(f"{path}: expected P2 or P5 magic, got {magic!r}")
    if not (0 < maxval < 65536) or w <= 0 or h <= 0:
        raise FormatError(f"{path}: invalid PGM dimensions or maxval")
    if magic == b"P5":
        raw = data[pos + 1:]
        dtype = np.dtype(">u2") if maxval > 255 else np.uint8
        need = w * h * np.dtype(dtype).itemsize
        if len(raw) < need:
            raise FormatError(f"{path}: expected {w * h} pixels, file is truncated")
        vals = np.frombuffer(raw[:need], dtype=dtype).astype(float)
    else:
        try:
            vals = np.array([int(t) for t in data[pos:].split(b"#")[0].split()], dtype=float)
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from None
        if vals.size != w * h:
            raise FormatError(f"{path}: expected {w * h} pixels, found {vals.size}")
    if vals.max(initial=0) > maxval:
        raise FormatError(f"{path}: pixel value exceeds maxval {maxval}")
    return Image(vals.reshape(h, w) / maxval)


def write_pgm(path, image: Image, binary: bool = False, maxval: int = 255):
    vals = np.rint(image.pixels * maxval).astype(int)
    h, w = vals.shape
    if binary:
        Path(path).write_bytes(f"P5\n{w} {h}\n{maxval}\n".encode() + vals.astype(np.uint8).tobytes())
    else:
        rows = "\n".join(" ".join(str(x) for x in row) for row in vals)
        Path(path).write_text(f"P2\n{w} {h}\n{maxval}\n{rows}\n")


def read_csv_image(path) -> Image:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(x) for x in line.split(",")])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            if len(rows[-1]) != len(rows[0]):
                raise FormatError(f"{path}:{lineno}: expected {len(rows[0])} columns, got {len(rows[-1])}")
    if not rows:
        raise FormatError(f"{path}: empty image")
    try:
        return Image(np.array(rows))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def write_csv_image(path, image: Image):
    lines = [",".join(repr(float(x)) for x in row) for row in image.pixels]
    Path(path).write_text("\n".join(lines) + "\n")


def read_image(path) -> Image:
    suffix = Path(path).suffix.lower()
    if suffix in (".pgm", ".pnm"):
        return read_pgm(path)
    if suffix in (".csv", ".txt"):
        return read_csv_image(path)
    raise FormatError(f"{path}: unsupported image format {suffix!r} (use .pgm or .csv)")


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}:{exc.lineno}: {exc.msg}") from None


def dumps(obj) -> str:
    """Deterministic JSON text: fixed key order, shortest round-trip floats."""
    return json.dumps(obj, indent=1, sort_keys=False, allow_nan=False) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj))


def read_attack(path) -> Attack:
    d = read_json(path)
    try:
        return Attack.from_dict(d)
    except (KeyError, TypeError, ValueError, InvalidTransformError) as exc:
        raise FormatError(f"{path}: invalid attack spec ({exc})") from None


def read_labels(path) -> list[int]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#")[0].strip()
            if not line:
                continue
            try:
                out.append(int(line))
            except ValueError:
                raise FormatError(f"{path}:{lineno}: expected an integer label, got {line!r}") from None
    return out


def read_bounds(path):
    from .pipeline import bounds_from_dict

    d = read_json(path)
    try:
        return bounds_from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: invalid bound file ({exc})") from None
