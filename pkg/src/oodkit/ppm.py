"""Minimal binary netpbm codec: 8-bit P6 (color) and P5 (grayscale).

Images are (H, W, C) float64 arrays in [0, 1]; writing quantizes each
channel as round(v * 255).
"""

import numpy as np

from .errors import FormatError, InputError


def _read_token(raw: bytes, pos: int) -> tuple[bytes, int]:
    n = len(raw)
    while pos < n:
        c = raw[pos : pos + 1]
        if c == b"#":
            while pos < n and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not raw[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise FormatError("truncated netpbm header")
    return raw[start:pos], pos


def read_image(path) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:2] == b"P6":
        channels = 3
    elif raw[:2] == b"P5":
        channels = 1
    else:
        raise FormatError(f"{path!s}: not a binary P5/P6 netpbm file")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_token(raw, pos)
        try:
            fields.append(int(tok))
        except ValueError as exc:
            raise FormatError(f"{path!s}: bad header field {tok!r}") from exc
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise FormatError(f"{path!s}: bad image dimensions {width}x{height}")
    if not 1 <= maxval <= 255:
        raise FormatError(f"{path!s}: unsupported maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    need = width * height * channels
    data = raw[pos : pos + need]
    if len(data) != need:
        raise FormatError(f"{path!s}: raster truncated ({len(data)} of {need} bytes)")
    arr = np.frombuffer(data, dtype=np.uint8).astype(np.float64) / maxval
    return arr.reshape(height, width, channels)


def write_image(path, img) -> None:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise InputError("image must be (H, W, C) with 1 or 3 channels")
    if not np.isfinite(img).all() or img.min() < 0.0 or img.max() > 1.0:
        raise InputError("image values must lie in [0, 1]")
    h, w, c = img.shape
    magic = b"P6" if c == 3 else b"P5"
    header = magic + f"\n{w} {h}\n255\n".encode("ascii")
    body = np.rint(img * 255.0).astype(np.uint8).tobytes()
    with open(path, "wb") as f:
        f.write(header + body)
