"""Camera model, parametric sensor surfaces, and probe indentation.

Coordinate conventions
----------------------
Rasters are indexed ``[row, col]``. Metric surface coordinates in mm put
the origin at the raster center:

    x = (col - (W - 1) / 2) * pixel_pitch
    y = (row - (H - 1) / 2) * pixel_pitch

The camera looks along -z onto the membrane. Surface heights z0(x, y)
increase toward the camera, normals satisfy nz > 0, and a probe press
raises the local height.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .raster import NormalMap, RasterGrid, normalize_vectors


def correct_focal_for_medium(f_air: float, n_medium: float, n_air: float = 1.0) -> float:
    """Scale a focal length measured in air for a denser imaging medium.

    The optical path through the gel behaves like air imaging with the
    focal length scaled by the refractive index ratio.

    Parameters
    ----------
    f_air : focal length calibrated in air, in pixels.
    n_medium, n_air : refractive indices, dimensionless.

    Returns
    -------
    float
        f_air * n_medium / n_air.
    """
    if f_air <= 0 or n_medium <= 0 or n_air <= 0:
        raise ValueError("focal length and refractive indices must be positive")
    return f_air * n_medium / n_air


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera with an optional refractive medium correction."""

    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    n_air: float = 1.0
    n_medium: float = 1.5168
    width: int = 640
    height: int = 480

    def __post_init__(self):
        r = np.ascontiguousarray(np.asarray(self.rotation, dtype=np.float64))
        t = np.ascontiguousarray(np.asarray(self.translation, dtype=np.float64))
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation a 3-vector")
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9):
            raise ValueError("rotation must be orthonormal")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.n_air < 1.0 or self.n_medium < 1.0:
            raise ValueError("refractive indices must be >= 1")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("resolution must be positive")

    @property
    def effective_fx(self) -> float:
        return correct_focal_for_medium(self.fx, self.n_medium, self.n_air)

    @property
    def effective_fy(self) -> float:
        return correct_focal_for_medium(self.fy, self.n_medium, self.n_air)


def project_point(camera: CameraModel, point) -> np.ndarray:
    """Project a 3-d point (mm) to pixel coordinates with corrected focals."""
    point = np.asarray(point, dtype=np.float64)
    px = camera.rotation @ point + camera.translation
    if px[2] <= 1e-9:
        raise ValueError("point is behind the camera")
    u = camera.effective_fx * px[0] / px[2] + camera.cx
    v = camera.effective_fy * px[1] / px[2] + camera.cy
    return np.array([u, v])


class SurfaceKind(enum.Enum):
    PLANE = "plane"
    SPHERE_CAP = "sphere-cap"
    CYLINDER_SECTION = "cylinder-section"
    ELLIPSOID_CAP = "ellipsoid-cap"


def pixel_center_coords(height: int, width: int, pixel_pitch: float):
    """Metric (x, y) coordinates of every pixel center, origin at raster center."""
    cols = np.arange(width, dtype=np.float64)
    rows = np.arange(height, dtype=np.float64)
    x = (cols - (width - 1) / 2.0) * pixel_pitch
    y = (rows - (height - 1) / 2.0) * pixel_pitch
    return np.meshgrid(x, y)


def _height_terms(surface: "SensorSurface", x, y):
    """Height and (dz/dx, dz/dy) of the analytic surface, plus a domain flag."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    h = surface.apex_height
    kind = surface.kind
    if kind is SurfaceKind.PLANE:
        zero = np.zeros(np.broadcast(x, y).shape)
        return zero + h, zero.copy(), zero.copy(), np.ones_like(zero, dtype=bool)
    if kind is SurfaceKind.SPHERE_CAP:
        rho = surface.radius
        arg = rho * rho - x * x - y * y
        ok = arg > 0
        root = np.sqrt(np.where(ok, arg, 1.0))
        z = h - (rho - root)
        return z, np.where(ok, -x / root, 0.0), np.where(ok, -y / root, 0.0), ok
    if kind is SurfaceKind.CYLINDER_SECTION:
        rho = surface.radius
        arg = rho * rho - x * x
        ok = np.broadcast_to(arg > 0, np.broadcast(x, y).shape).copy()
        root = np.sqrt(np.where(arg > 0, arg, 1.0))
        z = np.broadcast_to(h - (rho - root), ok.shape).copy()
        gx = np.broadcast_to(np.where(arg > 0, -x / root, 0.0), ok.shape).copy()
        return z, gx, np.zeros(ok.shape), ok
    if kind is SurfaceKind.ELLIPSOID_CAP:
        a, b, c = surface.semi_axes
        arg = 1.0 - (x / a) ** 2 - (y / b) ** 2
        ok = arg > 0
        root = np.sqrt(np.where(ok, arg, 1.0))
        z = h - c * (1.0 - root)
        gx = np.where(ok, -c * x / (a * a * root), 0.0)
        gy = np.where(ok, -c * y / (b * b * root), 0.0)
        return z, gx, gy, ok
    raise ValueError(f"unknown surface kind: {kind}")


@dataclass(frozen=True)
class SensorSurface:
    """A parametric membrane shape cached onto a raster grid.

    The height grid is camera-axis aligned; `pixel_pitch` converts pixel
    steps to mm. The grid is a cache of the analytic formula, never a
    second source of truth.
    """

    kind: SurfaceKind
    pixel_pitch: float
    height_grid: np.ndarray
    valid_mask: np.ndarray
    apex_height: float = 0.0
    radius: float | None = None
    semi_axes: tuple[float, float, float] | None = None

    def __post_init__(self):
        hg = np.ascontiguousarray(np.asarray(self.height_grid, dtype=np.float64))
        vm = np.ascontiguousarray(np.asarray(self.valid_mask, dtype=bool))
        hg.setflags(write=False)
        vm.setflags(write=False)
        object.__setattr__(self, "height_grid", hg)
        object.__setattr__(self, "valid_mask", vm)
        if self.pixel_pitch <= 0:
            raise ValueError("pixel_pitch must be positive")
        if hg.shape != vm.shape or hg.ndim != 2:
            raise ValueError("height_grid and valid_mask must be matching 2-d arrays")
        if not np.all(np.isfinite(hg[vm])):
            raise ValueError("height grid must be finite at valid pixels")

    @property
    def shape(self) -> tuple[int, int]:
        return self.height_grid.shape

    @classmethod
    def build(cls, kind: SurfaceKind, shape: tuple[int, int], pixel_pitch: float,
              apex_height: float = 0.0, radius: float | None = None,
              semi_axes: tuple[float, float, float] | None = None) -> "SensorSurface":
        """Evaluate the analytic surface onto a pixel grid."""
        if kind in (SurfaceKind.SPHERE_CAP, SurfaceKind.CYLINDER_SECTION) and not radius:
            raise ValueError(f"{kind.value} needs a radius")
        if kind is SurfaceKind.ELLIPSOID_CAP and semi_axes is None:
            raise ValueError("ellipsoid-cap needs semi_axes (a, b, c)")
        height, width = shape
        probe = cls(kind=kind, pixel_pitch=pixel_pitch, apex_height=apex_height,
                    radius=radius, semi_axes=semi_axes,
                    height_grid=np.zeros(shape), valid_mask=np.zeros(shape, dtype=bool))
        x, y = pixel_center_coords(height, width, pixel_pitch)
        z, _, _, ok = _height_terms(probe, x, y)
        return cls(kind=kind, pixel_pitch=pixel_pitch, apex_height=apex_height,
                   radius=radius, semi_axes=semi_axes,
                   height_grid=np.where(ok, z, 0.0), valid_mask=ok)

    def grid_coords(self):
        h, w = self.shape
        return pixel_center_coords(h, w, self.pixel_pitch)


def surface_height(surface: SensorSurface, x, y):
    """Analytic base height z0(x, y) in mm; domain error outside the shape."""
    z, _, _, ok = _height_terms(surface, x, y)
    if not np.all(ok):
        raise ValueError("point outside surface domain")
    return float(z) if np.isscalar(x) and np.isscalar(y) else z


def surface_normal_analytic(surface: SensorSurface, x, y):
    """Unit outward (toward camera) normal of the base surface at (x, y)."""
    _, gx, gy, ok = _height_terms(surface, x, y)
    if not np.all(ok):
        raise ValueError("point outside surface domain")
    nx, ny, nz = normalize_vectors(-gx, -gy, np.ones_like(gx))
    if np.isscalar(x) and np.isscalar(y):
        return np.array([float(nx), float(ny), float(nz)])
    return nx, ny, nz


def surface_normal_grid(surface: SensorSurface) -> NormalMap:
    """Analytic normals evaluated at every grid pixel (invalid pixels get +z)."""
    x, y = surface.grid_coords()
    _, gx, gy, ok = _height_terms(surface, x, y)
    nx, ny, nz = normalize_vectors(-gx, -gy, np.ones_like(gx))
    nx = np.where(ok, nx, 0.0)
    ny = np.where(ok, ny, 0.0)
    nz = np.where(ok, nz, 1.0)
    return NormalMap(nx, ny, nz, surface.valid_mask & ok)


@dataclass(frozen=True)
class SphereProbe:
    """Rigid spherical probe pressed into the membrane.

    `center` is authoritative for geometry; `indentation` records the
    press depth used to place the center and drives bookkeeping such as
    the zero-press shortcut.
    """

    center: np.ndarray
    radius: float = 2.5
    indentation: float = 0.0

    def __post_init__(self):
        c = np.ascontiguousarray(np.asarray(self.center, dtype=np.float64))
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        if c.shape != (3,):
            raise ValueError("center must be a 3-vector")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.indentation < 0:
            raise ValueError("indentation must be >= 0")

    @classmethod
    def pressed_into(cls, surface: SensorSurface, cx: float, cy: float,
                     indentation: float, radius: float = 2.5) -> "SphereProbe":
        """Place the probe so its apex sits `indentation` above the base at (cx, cy)."""
        z0 = surface_height(surface, cx, cy)
        return cls(center=np.array([cx, cy, z0 + indentation - radius]),
                   radius=radius, indentation=indentation)


def _sphere_envelope(probe: SphereProbe, x, y):
    """Camera-facing sphere height where defined, else -inf."""
    cx, cy, cz = probe.center
    under = probe.radius ** 2 - (x - cx) ** 2 - (y - cy) ** 2
    inside = under > 0
    z = np.where(inside, cz + np.sqrt(np.where(inside, under, 0.0)), -np.inf)
    return z, inside


def indent_grid(base_values: np.ndarray, base_normals: NormalMap, valid: np.ndarray,
                x: np.ndarray, y: np.ndarray, probe: SphereProbe, pixel_pitch: float,
                smooth_crease: bool = False):
    """Rigid union of a height grid and a sphere press (grid-level core).

    Returns (deformed heights, contact flags, deformed NormalMap). The
    deformed height is max(base, sphere envelope); contact is where the
    envelope strictly wins. Inside contact the normal is the analytic
    sphere normal, outside it is the supplied base normal.
    """
    if probe.indentation == 0:
        contact = np.zeros_like(valid)
        return base_values.copy(), contact, base_normals

    env, inside = _sphere_envelope(probe, x, y)
    contact = valid & inside & (env > base_values)
    deformed = np.where(contact, env, base_values)

    cx, cy, _ = probe.center
    r = probe.radius
    under = np.where(contact, r * r - (x - cx) ** 2 - (y - cy) ** 2, 1.0)
    snx = np.where(contact, (x - cx) / r, base_normals.nx)
    sny = np.where(contact, (y - cy) / r, base_normals.ny)
    snz = np.where(contact, np.sqrt(under) / r, base_normals.nz)

    if smooth_crease and contact.any():
        deformed, snx, sny, snz = _smooth_crease(
            deformed, contact, snx, sny, snz, pixel_pitch)

    nx, ny, nz = normalize_vectors(snx, sny, snz)
    return deformed, contact, NormalMap(nx, ny, nz, base_normals.mask)


def _smooth_crease(z, contact, nx, ny, nz, pixel_pitch, sigma=2.0, band_px=4):
    """Gaussian-smooth the contact crease and refresh normals in that band."""
    rim = contact ^ ndimage.binary_erosion(contact)
    band = ndimage.binary_dilation(rim, iterations=band_px)
    smoothed = ndimage.gaussian_filter(z, sigma=sigma, mode="nearest")
    z = np.where(band, smoothed, z)
    gy, gx = np.gradient(z, pixel_pitch)
    bx, by, bz = normalize_vectors(-gx, -gy, np.ones_like(gx))
    nx = np.where(band, bx, nx)
    ny = np.where(band, by, ny)
    nz = np.where(band, bz, nz)
    return z, nx, ny, nz


def indent_surface(surface: SensorSurface, probe: SphereProbe,
                   smooth_crease: bool = False):
    """Press a sphere probe into a parametric surface.

    Returns
    -------
    (RasterGrid, RasterGrid, NormalMap)
        Deformed heights, contact flags (values 0/1 under the surface
        validity mask), and per-pixel normals of the deformed membrane.
    """
    x, y = surface.grid_coords()
    base_normals = surface_normal_grid(surface)
    deformed, contact, normals = indent_grid(
        surface.height_grid, base_normals, surface.valid_mask, x, y, probe,
        surface.pixel_pitch, smooth_crease=smooth_crease)
    return (RasterGrid(deformed, surface.valid_mask),
            RasterGrid.from_bool(contact, surface.valid_mask),
            normals)
