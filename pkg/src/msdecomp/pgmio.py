"""PGM image I/O: binary P5 (written and read) and plain-text P2 (read only),
maxval 255, square rasters.

Intensities map to [0, 1] by division with 255 on read; writing clips to
[0, 1], quantises with round-to-nearest and reports how many pixels had to be
clipped, so nothing leaves the nominal range silently.
"""

from __future__ import annotations

from typing import Union

import numpy as np

from .deblur import ImageField


class PgmError(ValueError):
    pass


def _tokens(data: bytes):
    """Yield whitespace-separated header tokens, skipping # comments, and the
    byte offset just past each token."""
    i = 0
    n = len(data)
    while i < n:
        c = data[i:i + 1]
        if c in b" \t\r\n":
            i += 1
            continue
        if c == b"#":
            j = data.find(b"\n", i)
            i = n if j < 0 else j + 1
            continue
        j = i
        while j < n and data[j:j + 1] not in b" \t\r\n":
            j += 1
        yield data[i:j], j
        i = j


def pgm_read(path: str) -> ImageField:
    """Read a P5 or P2 PGM with maxval 255 into an ImageField in [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    toks = _tokens(data)
    try:
        magic, _ = next(toks)
        (w_tok, _), (h_tok, _), (maxval_tok, end) = next(toks), next(toks), next(toks)
    except StopIteration:
        raise PgmError(f"{path}: truncated PGM header")
    if magic not in (b"P5", b"P2"):
        raise PgmError(f"{path}: unsupported magic {magic!r} (need P5 or P2)")
    try:
        width, height, maxval = int(w_tok), int(h_tok), int(maxval_tok)
    except ValueError:
        raise PgmError(f"{path}: malformed header fields")
    if maxval != 255:
        raise PgmError(f"{path}: maxval {maxval} unsupported, only 8-bit "
                       f"(maxval 255) images are handled")
    if width != height:
        raise PgmError(f"{path}: only square images are handled, got "
                       f"{width}x{height}")
    if width < 1:
        raise PgmError(f"{path}: empty raster")
    if magic == b"P5":
        raster = data[end + 1:]  # single whitespace byte after maxval
        if len(raster) < width * height:
            raise PgmError(f"{path}: raster shorter than header promises")
        values = np.frombuffer(raster[:width * height], dtype=np.uint8)
    else:
        rest = [t for t, _ in _tokens(data[end:])]
        if len(rest) < width * height:
            raise PgmError(f"{path}: raster shorter than header promises")
        try:
            values = np.array([int(t) for t in rest[:width * height]],
                              dtype=np.int64)
        except ValueError:
            raise PgmError(f"{path}: non-numeric sample in P2 raster")
        if values.min() < 0 or values.max() > 255:
            raise PgmError(f"{path}: sample out of [0, 255]")
        values = values.astype(np.uint8)
    grid = values.reshape(height, width).astype(float) / 255.0
    return ImageField(grid)


def pgm_write(path: str, image: Union[ImageField, np.ndarray]) -> int:
    """Write a binary P5 PGM (maxval 255).  Values are clipped into [0, 1]
    and quantised by round(255 * v); returns the number of pixels that fell
    outside [0, 1] before clipping."""
    values = image.values if isinstance(image, ImageField) else \
        np.asarray(image, dtype=float)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise PgmError(f"only square images are written, got {values.shape}")
    if not np.all(np.isfinite(values)):
        raise PgmError("non-finite pixel values")
    clipped_count = int(np.count_nonzero((values < 0.0) | (values > 1.0)))
    q = np.rint(255.0 * np.clip(values, 0.0, 1.0)).astype(np.uint8)
    n = values.shape[0]
    with open(path, "wb") as fh:
        fh.write(f"P5\n{n} {n}\n255\n".encode("ascii"))
        fh.write(q.tobytes())
    return clipped_count
