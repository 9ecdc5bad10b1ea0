"""File formats for the benchmark inputs and outputs.

* frames: concatenated raw 8-bit grayscale frames, row-major; or binary PGM (P5),
  possibly several images back to back in one file
* samples: little-endian float32 pairs, interleaved re, im
* taps: text, one branch per line, 10 ``re,im`` pairs separated by whitespace
* schedule: text, one entry per line; either an active count ``n`` (the lowest
  ``n`` branches) or an explicit set ``n: b1,b2,...`` with 1-based branches
"""
from __future__ import annotations

import re
from pathlib import Path
from typing import BinaryIO, Iterable

import numpy as np

from .kernels import FIR_TAPS, MAX_BRANCHES, DpdConfigToken


class FormatError(ValueError):
    pass


def read_raw_frames(path: str | Path, width: int, height: int) -> list[np.ndarray]:
    data = np.fromfile(path, dtype=np.uint8)
    size = width * height
    if data.size % size:
        raise FormatError(f"{path}: {data.size} bytes is not a whole number of {width}x{height} frames")
    return list(data.reshape(-1, height, width))


def write_raw_frames(path: str | Path | BinaryIO, frames: Iterable[np.ndarray]) -> int:
    n = 0
    if isinstance(path, (str, Path)):
        with open(path, "wb") as fh:
            return write_raw_frames(fh, frames)
    for f in frames:
        path.write(np.ascontiguousarray(f, dtype=np.uint8).tobytes())
        n += 1
    return n


_PGM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*(\S+)")


def read_pgm(path: str | Path) -> list[np.ndarray]:
    """Read one or more concatenated binary PGM (P5) images with maxval <= 255."""
    buf = Path(path).read_bytes()
    frames = []
    pos = 0
    while pos < len(buf) and buf[pos:].strip():
        fields = []
        for _ in range(4):
            m = _PGM_TOKEN.match(buf, pos)
            if not m:
                raise FormatError(f"{path}: truncated PGM header at byte {pos}")
            fields.append(m.group(1))
            pos = m.end()
        magic, w, h, maxval = fields
        if magic != b"P5":
            raise FormatError(f"{path}: not a binary PGM (magic {magic!r})")
        w, h, maxval = int(w), int(h), int(maxval)
        if maxval > 255:
            raise FormatError(f"{path}: 16-bit PGM not supported")
        pos += 1  # single whitespace byte after maxval
        end = pos + w * h
        if end > len(buf):
            raise FormatError(f"{path}: truncated PGM raster")
        frames.append(np.frombuffer(buf[pos:end], dtype=np.uint8).reshape(h, w).copy())
        pos = end
    return frames


def write_pgm(path: str | Path, frames: Iterable[np.ndarray]) -> None:
    with open(path, "wb") as fh:
        for f in frames:
            h, w = f.shape
            fh.write(b"P5\n%d %d\n255\n" % (w, h))
            fh.write(np.ascontiguousarray(f, dtype=np.uint8).tobytes())


def read_samples(path: str | Path) -> np.ndarray:
    data = np.fromfile(path, dtype="<f4")
    if data.size % 2:
        raise FormatError(f"{path}: odd number of float32 values")
    return (data[0::2] + 1j * data[1::2]).astype(np.complex64)


def write_samples(path: str | Path, samples: np.ndarray) -> None:
    x = np.asarray(samples, dtype=np.complex64)
    inter = np.empty(2 * x.size, dtype="<f4")
    inter[0::2] = x.real
    inter[1::2] = x.imag
    inter.tofile(path)


def parse_taps(text: str) -> np.ndarray:
    rows = [ln for ln in (l.split("#", 1)[0].strip() for l in text.splitlines()) if ln]
    if len(rows) != MAX_BRANCHES:
        raise FormatError(f"taps: expected {MAX_BRANCHES} branch lines, got {len(rows)}")
    taps = np.zeros((MAX_BRANCHES, FIR_TAPS), dtype=np.complex128)
    for b, row in enumerate(rows):
        pairs = row.split()
        if len(pairs) != FIR_TAPS:
            raise FormatError(f"taps line {b + 1}: expected {FIR_TAPS} re,im pairs, got {len(pairs)}")
        for k, pair in enumerate(pairs):
            try:
                re_s, im_s = pair.split(",")
                taps[b, k] = complex(float(re_s), float(im_s))
            except ValueError as e:
                raise FormatError(f"taps line {b + 1}: bad pair {pair!r}") from e
    return taps


def format_taps(taps: np.ndarray) -> str:
    return "".join(
        " ".join(f"{float(c.real)!r},{float(c.imag)!r}" for c in row) + "\n" for row in np.asarray(taps, dtype=np.complex128)
    )


def read_taps(path: str | Path) -> np.ndarray:
    return parse_taps(Path(path).read_text())


def parse_schedule(text: str) -> list[DpdConfigToken]:
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            if ":" in line:
                count_s, members = line.split(":", 1)
                branches = tuple(int(b) for b in members.replace(",", " ").split())
                if len(branches) != int(count_s):
                    raise FormatError(f"schedule line {lineno}: count {count_s} but {len(branches)} branches listed")
                out.append(DpdConfigToken(branches))
            else:
                out.append(DpdConfigToken.first(int(line)))
        except FormatError:
            raise
        except ValueError as e:
            raise FormatError(f"schedule line {lineno}: {e}") from e
    if not out:
        raise FormatError("schedule is empty")
    return out


def format_schedule(schedule: Iterable[DpdConfigToken]) -> str:
    return "".join(
        f"{t.active_branch_count}: {','.join(map(str, t.active_set))}\n" for t in schedule
    )


def read_schedule(path: str | Path) -> list[DpdConfigToken]:
    return parse_schedule(Path(path).read_text())
