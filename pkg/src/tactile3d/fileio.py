"""Bit-exact file formats: TRAS rasters, ASCII PLY, PNG heatmaps.

TRAS raster container (little-endian):

    magic   4 bytes  b"TRAS"
    version u16      currently 1
    width   u32
    height  u32
    nchan   u8
    hasmask u8       0 or 1
    data    nchan * height * width float32, channel-major, row-major
    mask    packed bits (np.packbits of the row-major boolean mask),
            present only when hasmask = 1

Heatmap PNGs use fixed 256-entry colormap tables interpolated from the
anchor lists below, so image bytes are reproducible across library
versions.
"""

from __future__ import annotations

import struct

import numpy as np
from PIL import Image

from .errors import FormatError

_TRAS_MAGIC = b"TRAS"
_TRAS_VERSION = 1
_HEADER = struct.Struct("<4sHIIBB")


def write_raster(path, values: np.ndarray, mask: np.ndarray | None = None) -> None:
    """Write a (H, W) or (C, H, W) float raster, optionally with a mask."""
    values = np.asarray(values, dtype=np.float32)
    if values.ndim == 2:
        values = values[None, :, :]
    if values.ndim != 3:
        raise ValueError("values must be (H, W) or (C, H, W)")
    nchan, height, width = values.shape
    if nchan > 255:
        raise ValueError("at most 255 channels")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_TRAS_MAGIC, _TRAS_VERSION, width, height,
                              nchan, 0 if mask is None else 1))
        fh.write(np.ascontiguousarray(values, dtype="<f4").tobytes())
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != (height, width):
                raise ValueError("mask shape must match the raster")
            fh.write(np.packbits(mask.reshape(-1)).tobytes())


def read_raster(path):
    """Read a TRAS file. Returns ((C, H, W) float64 values, mask or None)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise FormatError(f"{path}: truncated raster header")
    magic, version, width, height, nchan, hasmask = _HEADER.unpack_from(blob)
    if magic != _TRAS_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != _TRAS_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    n_vals = nchan * height * width
    offset = _HEADER.size
    end = offset + 4 * n_vals
    if len(blob) < end:
        raise FormatError(f"{path}: truncated raster data")
    values = np.frombuffer(blob, dtype="<f4", count=n_vals, offset=offset)
    values = values.reshape(nchan, height, width).astype(np.float64)
    mask = None
    if hasmask:
        n_bytes = (height * width + 7) // 8
        if len(blob) < end + n_bytes:
            raise FormatError(f"{path}: truncated mask bits")
        bits = np.frombuffer(blob, dtype=np.uint8, count=n_bytes, offset=end)
        mask = np.unpackbits(bits, count=height * width).reshape(height, width).astype(bool)
    return values, mask


def write_pointcloud_ply(path, points: np.ndarray) -> None:
    """ASCII PLY with float x, y, z properties."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError("points must be (N, 3)")
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(points)}",
        "property float x",
        "property float y",
        "property float z",
        "end_header",
    ]
    body = [f"{x:.6f} {y:.6f} {z:.6f}" for x, y, z in points]
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines + body) + "\n")


def _build_colormap(anchors) -> np.ndarray:
    anchors = np.asarray(anchors, dtype=np.float64)
    stops = np.linspace(0.0, 1.0, len(anchors))
    t = np.linspace(0.0, 1.0, 256)
    table = np.stack([np.interp(t, stops, anchors[:, c]) for c in range(3)], axis=1)
    return np.round(table).astype(np.uint8)


# Perceptual dark-to-bright ramp for scalar fields.
SEQUENTIAL_ANCHORS = (
    (68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37))
# Blue-white-red ramp for signed fields.
DIVERGING_ANCHORS = (
    (59, 76, 192), (144, 178, 254), (247, 247, 247), (250, 136, 98), (180, 4, 38))

COLORMAPS = {
    "sequential": _build_colormap(SEQUENTIAL_ANCHORS),
    "diverging": _build_colormap(DIVERGING_ANCHORS),
}


def heatmap_image(values: np.ndarray, mask: np.ndarray | None = None,
                  vmin: float | None = None, vmax: float | None = None,
                  colormap: str = "sequential") -> np.ndarray:
    """Map a scalar raster to (H, W, 3) uint8; invalid pixels go black."""
    if colormap not in COLORMAPS:
        raise ValueError(f"unknown colormap: {colormap}")
    values = np.asarray(values, dtype=np.float64)
    if mask is None:
        mask = np.ones(values.shape, dtype=bool)
    finite = values[mask]
    lo = float(finite.min()) if vmin is None and finite.size else (vmin or 0.0)
    hi = float(finite.max()) if vmax is None and finite.size else (vmax or 1.0)
    if hi - lo < 1e-30:
        hi = lo + 1.0
    idx = np.clip((values - lo) / (hi - lo), 0.0, 1.0)
    idx = np.round(idx * 255).astype(np.uint8)
    rgb = COLORMAPS[colormap][idx]
    rgb[~mask] = 0
    return rgb


def write_heatmap_png(path, values, mask=None, vmin=None, vmax=None,
                      colormap: str = "sequential") -> None:
    Image.fromarray(heatmap_image(values, mask, vmin, vmax, colormap), "RGB").save(path)


def write_normals_png(path, normals) -> None:
    """RGB-encode unit normals as (n + 1) / 2; invalid pixels go black."""
    rgb = np.stack([normals.nx, normals.ny, normals.nz], axis=-1)
    rgb = np.round((rgb + 1.0) / 2.0 * 255).astype(np.uint8)
    rgb[~normals.mask] = 0
    Image.fromarray(rgb, "RGB").save(path)


def write_grayscale_png(path, values, mask=None) -> None:
    """Intensities in [0, 1] to an 8-bit grayscale PNG."""
    values = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    gray = np.round(values * 255).astype(np.uint8)
    if mask is not None:
        gray[~np.asarray(mask, bool)] = 0
    Image.fromarray(gray, "L").save(path)


def write_rgb_png(path, channels, mask=None) -> None:
    """Three intensity rasters (3, H, W) in [0, 1] to an 8-bit color PNG."""
    channels = np.asarray(channels, dtype=np.float64)
    if channels.ndim != 3 or channels.shape[0] != 3:
        raise ValueError("expected a (3, H, W) stack")
    rgb = np.round(np.clip(channels, 0.0, 1.0) * 255).astype(np.uint8)
    rgb = rgb.transpose(1, 2, 0).copy()
    if mask is not None:
        rgb[~np.asarray(mask, bool)] = 0
    Image.fromarray(rgb, "RGB").save(path)
