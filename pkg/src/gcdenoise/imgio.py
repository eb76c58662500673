"""Binary PGM (P5) reading and writing for 8-bit grayscale images.

Images are plain ``numpy.ndarray`` objects of dtype ``uint8`` and shape
``(height, width)``.  Only the binary P5 flavour with ``maxval <= 255`` is
handled here; anything else is a CLI convenience layered on top.
"""

from __future__ import annotations

import numpy as np


class PgmError(ValueError):
    """Base class for PGM parse errors."""


class BadMagicError(PgmError):
    pass


class MaxvalError(PgmError):
    pass


class TruncatedError(PgmError):
    pass


class ZeroDimensionError(PgmError):
    pass


class HeaderError(PgmError):
    pass


_WHITESPACE = b" \t\r\n\x0b\x0c"


def validate_image(img) -> np.ndarray:
    """Return ``img`` as a C-contiguous uint8 2-D array, or raise ValueError."""
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale image, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"image dimensions must be >= 1, got {arr.shape}")
    if arr.dtype != np.uint8:
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError(f"expected integer intensities, got dtype {arr.dtype}")
        if arr.min() < 0 or arr.max() > 255:
            raise ValueError("intensities must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    return np.ascontiguousarray(arr)


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    # Tokens are separated by whitespace; '#' starts a comment running to end of line.
    tokens: list[bytes] = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos] in _WHITESPACE:
            pos += 1
        if pos >= n:
            raise TruncatedError("header ended before all fields were read")
        if data[pos] == ord("#"):
            while pos < n and data[pos] not in b"\r\n":
                pos += 1
            continue
        start = pos
        while pos < n and data[pos] not in _WHITESPACE and data[pos] != ord("#"):
            pos += 1
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates maxval from the raster
    if pos >= n or data[pos] not in _WHITESPACE:
        if pos >= n:
            raise TruncatedError("missing raster after header")
        raise HeaderError("maxval must be followed by a single whitespace byte")
    return tokens, pos + 1


def read_pgm(data: bytes) -> np.ndarray:
    """Decode a binary PGM byte string into a ``(height, width)`` uint8 array.

    Raises a :class:`PgmError` subclass describing what is wrong:
    :class:`BadMagicError`, :class:`MaxvalError`, :class:`TruncatedError`,
    :class:`ZeroDimensionError` or :class:`HeaderError`.
    """
    if isinstance(data, (bytearray, memoryview)):
        data = bytes(data)
    if data[:2] != b"P5":
        raise BadMagicError(f"not a binary PGM: magic {data[:2]!r}")
    if len(data) > 2 and data[2] not in _WHITESPACE and data[2] != ord("#"):
        raise BadMagicError(f"not a binary PGM: magic {data[:3]!r}")

    tokens, offset = _header_tokens(data[2:], 3)
    offset += 2
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise HeaderError(f"non-integer header field in {tokens!r}") from None
    if width <= 0 or height <= 0:
        raise ZeroDimensionError(f"invalid dimensions {width}x{height}")
    if maxval < 1 or maxval > 255:
        raise MaxvalError(f"maxval must be in [1, 255], got {maxval}")

    size = width * height
    raster = data[offset:offset + size]
    if len(raster) < size:
        raise TruncatedError(f"expected {size} pixel bytes, found {len(raster)}")
    img = np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()
    if int(img.max()) > maxval:
        raise MaxvalError(f"pixel value {int(img.max())} exceeds maxval {maxval}")
    return img


def write_pgm(img) -> bytes:
    """Encode an image as canonical binary PGM: ``P5\\n<w> <h>\\n255\\n`` + raster."""
    arr = validate_image(img)
    height, width = arr.shape
    return b"P5\n%d %d\n255\n" % (width, height) + arr.tobytes()


def load(path) -> np.ndarray:
    """Read an image file.  ``.pgm`` files go through :func:`read_pgm`;
    other extensions are decoded with Pillow and converted to 8-bit gray."""
    path = str(path)
    if path.lower().endswith((".pgm", ".pnm")):
        with open(path, "rb") as fh:
            return read_pgm(fh.read())
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8).copy()


def save(path, img) -> None:
    path = str(path)
    if path.lower().endswith((".pgm", ".pnm")):
        with open(path, "wb") as fh:
            fh.write(write_pgm(img))
        return
    from PIL import Image

    Image.fromarray(validate_image(img), mode="L").save(path)
