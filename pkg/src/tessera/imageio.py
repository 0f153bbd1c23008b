"""Binary PGM (P5) / PPM (P6) image files with maxval 255.

Values map to bytes by ``clamp(floor((v + 1) * 127.5 + 0.5), 0, 255)``
(round half up) and back by ``byte / 127.5 - 1``. Headers are written as
``P6\\n<width> <height>\\n255\\n``; the reader also accepts comments and
arbitrary whitespace between header fields.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import ShapeError, TesseraError


class ImageFormatError(TesseraError):
    """The file is not a binary 8-bit PGM/PPM."""


_MAGIC = {1: b"P5", 3: b"P6"}


def to_bytes(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    q = np.floor((x + 1.0) * 127.5 + 0.5)
    return np.clip(np.nan_to_num(q, nan=0.0), 0, 255).astype(np.uint8)


def from_bytes(b) -> np.ndarray:
    return np.asarray(b, dtype=np.float64) / 127.5 - 1.0


def encode_image(x) -> bytes:
    x = np.asarray(x)
    if x.ndim != 3 or x.shape[2] not in _MAGIC:
        raise ShapeError(f"images need shape (H, W, 1) or (H, W, 3), got {x.shape}")
    h, w, c = x.shape
    return _MAGIC[c] + f"\n{w} {h}\n255\n".encode("ascii") + to_bytes(x).tobytes()


def write_image(x, path) -> None:
    data = encode_image(x)
    with open(path, "wb") as f:
        f.write(data)


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens, pos, n = [], 0, len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates maxval from the raster
    if pos >= n or not data[pos : pos + 1].isspace():
        raise ImageFormatError("missing whitespace after header")
    return tokens, pos + 1


def decode_image(data: bytes) -> np.ndarray:
    tokens, offset = _header_tokens(data, 4)
    magic = tokens[0]
    channels = {v: k for k, v in _MAGIC.items()}.get(magic)
    if channels is None:
        raise ImageFormatError(f"unsupported magic {magic!r}; expected P5 or P6")
    try:
        w, h, maxval = (int(tok) for tok in tokens[1:])
    except ValueError:
        raise ImageFormatError("non-integer header field") from None
    if w < 1 or h < 1:
        raise ImageFormatError(f"invalid dimensions {w}x{h}")
    if maxval != 255:
        raise ImageFormatError(f"only maxval 255 is supported, got {maxval}")
    size = w * h * channels
    raster = data[offset : offset + size]
    if len(raster) != size:
        raise ImageFormatError(f"expected {size} raster bytes, found {len(raster)}")
    return from_bytes(np.frombuffer(raster, dtype=np.uint8).reshape(h, w, channels))


def read_image(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_image(f.read())
