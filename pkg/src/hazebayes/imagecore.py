"""Image tensors, file I/O and the spatial minimum filter.

Images are plain ``numpy`` arrays of shape ``(H, W, C)`` with ``C`` in
``{1, 3}``, stored as float64, row-major and channel-interleaved.  The
helpers below validate that contract instead of wrapping the arrays in a
custom class.
"""

from __future__ import annotations

import os
from pathlib import Path

import cv2
import numpy as np
from scipy import ndimage

__all__ = [
    "ImageError",
    "ImageFormatError",
    "UnsupportedBitDepthError",
    "as_image",
    "as_transmission",
    "as_depth",
    "from_u8",
    "load_image",
    "save_image",
    "load_pfm",
    "save_pfm",
    "read_any",
    "write_any",
    "min_filter",
]

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class ImageError(ValueError):
    """Invalid image contents or shape."""


class ImageFormatError(ImageError):
    """Corrupt or unrecognised file header / payload."""


class UnsupportedBitDepthError(ImageError):
    """File uses a sample depth other than 8 or 16 bits."""


def as_image(data, channels=None) -> np.ndarray:
    """Validate ``data`` as an image tensor and return a float64 copy.

    2-D input is promoted to a single channel.
    """
    arr = np.array(data, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ImageError(f"expected an HxWxC array, got shape {arr.shape}")
    if arr.shape[2] not in (1, 3):
        raise ImageError(f"channel count must be 1 or 3, got {arr.shape[2]}")
    if channels is not None and arr.shape[2] != channels:
        raise ImageError(f"expected {channels} channels, got {arr.shape[2]}")
    if not np.all(np.isfinite(arr)):
        raise ImageError("image contains non-finite values")
    return arr


def as_transmission(data) -> np.ndarray:
    t = as_image(data)
    if np.any(t <= 0.0) or np.any(t > 1.0):
        raise ImageError("transmission values must lie in (0, 1]")
    return t


def as_depth(data) -> np.ndarray:
    d = as_image(data, channels=1)
    if np.any(d < 0.0):
        raise ImageError("depth values must be non-negative")
    return d


def from_u8(data) -> np.ndarray:
    """Map 8-bit samples to [0, 1]."""
    arr = np.asarray(data)
    if arr.dtype != np.uint8:
        raise ImageError(f"expected uint8 samples, got {arr.dtype}")
    return as_image(arr.astype(np.float64) / 255.0)


def _png_bit_depth(header: bytes) -> int:
    # IHDR is always the first chunk: length(4) type(4) width(4) height(4) depth(1)
    if len(header) < 25 or header[12:16] != b"IHDR":
        raise ImageFormatError("PNG is missing its IHDR chunk")
    return header[24]


def _ppm_maxval(raw: bytes) -> int:
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PPM header")
        tokens.append(raw[start:pos])
    try:
        width, height, maxval = (int(tok) for tok in tokens)
    except ValueError as exc:
        raise ImageFormatError("non-numeric PPM header field") from exc
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise ImageFormatError("invalid PPM header values")
    return maxval


def load_image(path) -> np.ndarray:
    """Read an 8- or 16-bit PNG/PPM/PGM into a [0, 1] float tensor.

    Raises ``FileNotFoundError``/``OSError`` for I/O problems,
    ``UnsupportedBitDepthError`` for other sample depths and
    ``ImageFormatError`` for corrupt headers.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw.startswith(_PNG_SIGNATURE):
        depth = _png_bit_depth(raw[:32])
        if depth not in (8, 16):
            raise UnsupportedBitDepthError(f"{path}: PNG bit depth {depth}")
    elif raw[:2] in (b"P5", b"P6"):
        maxval = _ppm_maxval(raw)
        if maxval not in (255, 65535):
            raise UnsupportedBitDepthError(f"{path}: PPM maxval {maxval}")
    else:
        raise ImageFormatError(f"{path}: not a PNG or binary PPM/PGM file")

    buf = np.frombuffer(raw, dtype=np.uint8)
    img = cv2.imdecode(buf, cv2.IMREAD_UNCHANGED)
    if img is None:
        raise ImageFormatError(f"{path}: could not decode image payload")
    if img.dtype == np.uint8:
        scale = 255.0
    elif img.dtype == np.uint16:
        scale = 65535.0
    else:
        raise UnsupportedBitDepthError(f"{path}: sample type {img.dtype}")
    if img.ndim == 3:
        if img.shape[2] == 4:
            img = img[:, :, :3]
        elif img.shape[2] != 3:
            raise ImageFormatError(f"{path}: unsupported channel count {img.shape[2]}")
        img = img[:, :, ::-1]  # BGR -> RGB
    return as_image(img.astype(np.float64) / scale)


def save_image(t, path) -> None:
    """Write an image in [0, 1] as 8-bit PNG (or PPM/PGM by extension)."""
    img = as_image(t)
    if img.min() < 0.0 or img.max() > 1.0:
        raise ImageError("save_image expects values in [0, 1]")
    u8 = np.rint(img * 255.0).astype(np.uint8)
    if u8.shape[2] == 3:
        u8 = u8[:, :, ::-1]
    else:
        u8 = u8[:, :, 0]
    path = str(path)
    ext = os.path.splitext(path)[1].lower()
    if ext == ".ppm" and u8.ndim == 2:
        raise ImageError("PPM requires a 3-channel image; use .pgm")
    ok, encoded = cv2.imencode(ext or ".png", u8)
    if not ok:
        raise OSError(f"could not encode {path}")
    with open(path, "wb") as fh:
        fh.write(encoded.tobytes())


def load_pfm(path) -> np.ndarray:
    """Read a Portable Float Map.

    Both byte orders are accepted; rows are stored bottom-to-top.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    lines = []
    pos = 0
    for _ in range(3):
        end = raw.find(b"\n", pos)
        if end < 0:
            raise ImageFormatError(f"{path}: truncated PFM header")
        lines.append(raw[pos:end].strip())
        pos = end + 1
    tag, dims, scale_field = lines
    if tag == b"PF":
        channels = 3
    elif tag == b"Pf":
        channels = 1
    else:
        raise ImageFormatError(f"{path}: bad PFM magic {tag!r}")
    try:
        width, height = (int(v) for v in dims.split())
        scale = float(scale_field)
    except ValueError as exc:
        raise ImageFormatError(f"{path}: malformed PFM header") from exc
    if width < 1 or height < 1 or scale == 0.0:
        raise ImageFormatError(f"{path}: invalid PFM dimensions or scale")
    dtype = "<f4" if scale < 0 else ">f4"
    count = width * height * channels
    payload = raw[pos:]
    if len(payload) < 4 * count:
        raise ImageFormatError(
            f"{path}: truncated PFM payload ({len(payload)} of {4 * count} bytes)"
        )
    data = np.frombuffer(payload, dtype=dtype, count=count)
    data = data.reshape(height, width, channels)[::-1]
    return as_image(data.astype(np.float64))


def save_pfm(t, path) -> None:
    """Write a little-endian PFM (negative scale field), values cast to float32."""
    img = as_image(t)
    height, width, channels = img.shape
    tag = b"PF" if channels == 3 else b"Pf"
    header = tag + b"\n" + f"{width} {height}\n".encode() + b"-1.0\n"
    payload = np.ascontiguousarray(img[::-1], dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_any(path) -> np.ndarray:
    """Dispatch on extension: ``.pfm`` is read losslessly, anything else via :func:`load_image`."""
    if str(path).lower().endswith(".pfm"):
        return load_pfm(path)
    return load_image(path)


def write_any(t, path) -> None:
    if str(path).lower().endswith(".pfm"):
        save_pfm(t, path)
    else:
        save_image(t, path)


def min_filter(t, window: int) -> np.ndarray:
    """Square sliding-window minimum with replicate (edge) padding."""
    if isinstance(window, bool) or int(window) != window or window < 1 or window % 2 == 0:
        raise ValueError(f"window must be an odd positive integer, got {window!r}")
    img = as_image(t, channels=1)
    out = ndimage.minimum_filter(img[:, :, 0], size=int(window), mode="nearest")
    return out[:, :, None]

