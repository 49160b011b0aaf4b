"""Raster containers shared across the toolkit.

Conventions
-----------
Rasters are indexed ``[row, col]`` which corresponds to ``[y, x]``. The
camera looks along -z onto the membrane, so larger height values are
closer to the camera and every well-formed normal has ``nz > 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _frozen(array, dtype) -> np.ndarray:
    out = np.ascontiguousarray(np.asarray(array, dtype=dtype))
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class RasterGrid:
    """H x W scalar field plus a boolean validity mask.

    Generic container reused for heights (mm), gradients, depths,
    per-channel intensities and 0/1 masks-as-values.
    """

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, np.float64))
        object.__setattr__(self, "mask", _frozen(self.mask, bool))
        if self.values.ndim != 2 or self.values.shape != self.mask.shape:
            raise ValueError("values and mask must be 2-d arrays of the same shape")
        if not np.all(np.isfinite(self.values[self.mask])):
            raise ValueError("values must be finite at every valid pixel")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def as_bool(self) -> np.ndarray:
        """Interpret values as a flag raster: true where value > 0.5 and valid."""
        return (self.values > 0.5) & self.mask

    @classmethod
    def from_bool(cls, flags: np.ndarray, valid: np.ndarray | None = None) -> "RasterGrid":
        flags = np.asarray(flags, dtype=bool)
        if valid is None:
            valid = np.ones_like(flags)
        return cls(flags.astype(np.float64), valid)


@dataclass(frozen=True)
class NormalMap:
    """Per-pixel unit normals (nx, ny, nz) with nz > 0 at valid pixels."""

    nx: np.ndarray
    ny: np.ndarray
    nz: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        for name in ("nx", "ny", "nz"):
            object.__setattr__(self, name, _frozen(getattr(self, name), np.float64))
        object.__setattr__(self, "mask", _frozen(self.mask, bool))
        if not (self.nx.shape == self.ny.shape == self.nz.shape == self.mask.shape):
            raise ValueError("normal components and mask must share one shape")
        if self.nx.ndim != 2:
            raise ValueError("normal components must be 2-d rasters")
        m = self.mask
        if m.any():
            norm = self.nx[m] ** 2 + self.ny[m] ** 2 + self.nz[m] ** 2
            if not np.allclose(norm, 1.0, atol=1e-6):
                raise ValueError("normals must be unit length at valid pixels")
            if not np.all(self.nz[m] > 0):
                raise ValueError("normals must face the camera (nz > 0) at valid pixels")

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    def stacked(self) -> np.ndarray:
        """Return an H x W x 3 array of the normal components."""
        return np.stack([self.nx, self.ny, self.nz], axis=-1)


def normalize_vectors(vx, vy, vz, degenerate=(0.0, 0.0, 1.0), eps=1e-8):
    """Normalize per-pixel vectors, mapping near-zero norms to `degenerate`."""
    vx = np.asarray(vx, dtype=np.float64)
    vy = np.asarray(vy, dtype=np.float64)
    vz = np.asarray(vz, dtype=np.float64)
    norm = np.sqrt(vx * vx + vy * vy + vz * vz)
    bad = norm < eps
    safe = np.where(bad, 1.0, norm)
    nx, ny, nz = vx / safe, vy / safe, vz / safe
    nx = np.where(bad, degenerate[0], nx)
    ny = np.where(bad, degenerate[1], ny)
    nz = np.where(bad, degenerate[2], nz)
    return nx, ny, nz
