"""Grayscale image I/O, histograms, and label-map rendering.

Reads 8-bit binary PGM (P5) and 8-bit PNG (grayscale or RGB, converted
via luminance). JPEG decoding exists but is off by default: it is lossy
and decoder-dependent, so the supported path is to pre-convert to
PNG/PGM. Writes PGM (P5) and PNG (8-bit gray, 24-bit RGB).

Grayscale images are float64 arrays of shape (H, W) with values in
[0, 1]; RGB images are uint8 arrays of shape (H, W, 3).
"""

from __future__ import annotations

import colorsys
import io
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError


class ImageFormatError(Exception):
    """Unsupported or malformed image data."""


_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_JPEG_MAGIC = b"\xff\xd8"
_LUMA = np.array([0.299, 0.587, 0.114])


# ---------------------------------------------------------------------------
# loading


def load_grayscale(path, allow_jpeg: bool = False) -> np.ndarray:
    """Load an image as a (H, W) float array with intensities in [0, 1].

    8-bit inputs only; RGB collapses to luminance 0.299R+0.587G+0.114B.
    """
    data = Path(path).read_bytes()
    if data[:2] == b"P5":
        raw, maxval = _decode_pgm(data, path)
        return raw / float(maxval)
    if data[:8] == _PNG_MAGIC:
        return _decode_with_pillow(data, path)
    if data[:2] == _JPEG_MAGIC:
        if not allow_jpeg:
            raise ImageFormatError(
                f"{path}: JPEG input is disabled (lossy); convert to PNG/PGM or enable JPEG loading"
            )
        return _decode_with_pillow(data, path, jpeg=True)
    if data[:2] == b"P2":
        raise ImageFormatError(f"{path}: ASCII PGM (P2) is not supported, re-encode as binary P5")
    raise ImageFormatError(f"{path}: unsupported image format (want PGM P5 or 8-bit PNG)")


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM as raw uint8 values (no normalization)."""
    data = Path(path).read_bytes()
    if data[:2] != b"P5":
        raise ImageFormatError(f"{path}: not a binary PGM (P5) file")
    raw, _ = _decode_pgm(data, path)
    return raw


def _decode_pgm(data: bytes, path):
    width, height, maxval, offset = _parse_pgm_header(data, path)
    if maxval > 255:
        raise ImageFormatError(f"{path}: 16-bit PGM (maxval {maxval}) is not supported")
    if maxval != 255:
        raise ImageFormatError(f"{path}: only maxval 255 PGM is supported, got {maxval}")
    n = width * height
    raster = data[offset:offset + n]
    if len(raster) < n:
        raise ImageFormatError(f"{path}: truncated PGM raster ({len(raster)} of {n} bytes)")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy(), maxval


def _parse_pgm_header(data: bytes, path):
    i = 2
    values = []
    while len(values) < 3:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if i < len(data) and data[i:i + 1] == b"#":
            j = data.find(b"\n", i)
            if j < 0:
                raise ImageFormatError(f"{path}: truncated PGM header")
            i = j + 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace():
            j += 1
        if j == i:
            raise ImageFormatError(f"{path}: truncated PGM header")
        try:
            values.append(int(data[i:j]))
        except ValueError:
            raise ImageFormatError(f"{path}: malformed PGM header token {data[i:j]!r}") from None
        i = j
    if i >= len(data):
        raise ImageFormatError(f"{path}: truncated PGM header")
    i += 1  # single whitespace byte separates header from raster
    width, height, maxval = values
    if width < 1 or height < 1 or maxval < 1:
        raise ImageFormatError(f"{path}: invalid PGM dimensions {width}x{height} maxval {maxval}")
    return width, height, maxval, i


def _decode_with_pillow(data: bytes, path, jpeg: bool = False) -> np.ndarray:
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ImageFormatError(f"{path}: corrupt or undecodable image ({exc})") from exc
    if img.mode in ("I", "I;16", "I;16B", "I;16L", "I;16N"):
        raise ImageFormatError(f"{path}: 16-bit images are not supported")
    if jpeg and img.mode not in ("L", "RGB"):
        img = img.convert("RGB")
    if img.mode == "L":
        return np.asarray(img, dtype=np.float64) / 255.0
    if img.mode == "RGB":
        rgb = np.asarray(img, dtype=np.float64)
        return (rgb @ _LUMA) / 255.0
    raise ImageFormatError(f"{path}: unsupported image mode {img.mode!r} (want 8-bit gray or RGB)")


# ---------------------------------------------------------------------------
# saving


def write_pgm(values: np.ndarray, path) -> None:
    """Write raw uint8 values as a binary PGM (P5, maxval 255)."""
    values = np.asarray(values)
    if values.ndim != 2 or values.size == 0:
        raise ValueError(f"need a non-empty 2-D array, got shape {values.shape}")
    if values.dtype != np.uint8:
        raise ValueError(f"need uint8 values, got dtype {values.dtype}")
    h, w = values.shape
    header = b"P5\n%d %d\n255\n" % (w, h)
    try:
        Path(path).write_bytes(header + values.tobytes())
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def _quantize(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.size == 0:
        raise ValueError("cannot save a zero-size image")
    if not np.isfinite(image).all():
        raise ValueError("image contains non-finite values")
    if image.min() < 0.0 or image.max() > 1.0:
        raise ValueError(f"image values must lie in [0, 1], got [{image.min()}, {image.max()}]")
    return np.rint(image * 255.0).astype(np.uint8)


def save_pgm(image: np.ndarray, path) -> None:
    """Quantize a [0, 1] grayscale image to 8 bits and write a PGM."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError(f"need a (H, W) grayscale image, got shape {image.shape}")
    write_pgm(_quantize(image), path)


def save_png(image: np.ndarray, path) -> None:
    """Write a PNG: float (H, W) in [0, 1], uint8 (H, W), or uint8 (H, W, 3)."""
    image = np.asarray(image)
    if image.size == 0:
        raise ValueError("cannot save a zero-size image")
    if image.ndim == 2:
        arr = image if image.dtype == np.uint8 else _quantize(image)
        pil = Image.fromarray(arr, mode="L")
    elif image.ndim == 3 and image.shape[2] == 3 and image.dtype == np.uint8:
        pil = Image.fromarray(image, mode="RGB")
    else:
        raise ValueError(f"unsupported image shape/dtype for PNG: {image.shape} {image.dtype}")
    try:
        pil.save(str(path), format="PNG")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# histograms and label rendering


def histogram(image: np.ndarray) -> np.ndarray:
    """256-bin intensity histogram; bin b counts pixels with round(p*255) == b."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError(f"need a (H, W) grayscale image, got shape {image.shape}")
    if image.size and (image.min() < 0.0 or image.max() > 1.0):
        raise ValueError("image values must lie in [0, 1]")
    bins = np.rint(image * 255.0).astype(np.int64).ravel()
    return np.bincount(bins, minlength=256)


def palette(q_max: int) -> np.ndarray:
    """Fixed palette of q_max distinct colors: evenly spaced hues at full
    saturation and value. Row i is the RGB triplet of cluster id i."""
    if q_max < 1:
        raise ValueError(f"q_max must be >= 1, got {q_max}")
    table = np.empty((q_max, 3), dtype=np.uint8)
    for i in range(q_max):
        r, g, b = colorsys.hsv_to_rgb(i / q_max, 1.0, 1.0)
        table[i] = (round(r * 255), round(g * 255), round(b * 255))
    return table


def colorize(labels: np.ndarray, q_max: int) -> np.ndarray:
    """Render a label map as an RGB image using the fixed palette."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError(f"need a (H, W) label map, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= q_max):
        raise ValueError(f"label ids must lie in [0, {q_max})")
    return palette(q_max)[labels]


def labels_to_gray(labels: np.ndarray, source: np.ndarray, invert: bool = False) -> np.ndarray:
    """Render each cluster at the mean source intensity of its pixels.

    Preserves the thermal ordering, so hot faults stay bright; ``invert``
    flips the scale for a dark-fault presentation.
    """
    labels = np.asarray(labels)
    source = np.asarray(source, dtype=np.float64)
    if labels.shape != source.shape:
        raise ValueError(f"labels shape {labels.shape} != source shape {source.shape}")
    out = np.empty_like(source)
    for lab in np.unique(labels):
        mask = labels == lab
        out[mask] = source[mask].mean()
    if invert:
        out = 1.0 - out
    return out
