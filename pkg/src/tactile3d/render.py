"""Lambertian multi-LED shading of the membrane into six-channel frames.

Channel layout is (R, G, B, NIR1, NIR2, NIR3): the NIR camera sees one
irradiance replicated through per-channel gains, so six channels exist
with four LEDs. A 6x4 channel-response matrix maps LED groups to output
channels; the default is fully band-separated (bandpass filters on both
cameras), with the NIR column carrying the gains.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .geometry import CameraModel
from .raster import NormalMap, RasterGrid, _frozen

N_CHANNELS = 6
CHANNEL_NAMES = ("R", "G", "B", "NIR1", "NIR2", "NIR3")


class LedChannel(enum.Enum):
    R = 0
    G = 1
    B = 2
    NIR = 3


class Falloff(enum.Enum):
    NONE = "none"
    INVERSE_SQUARE = "inverse-square"


# Distance attenuation works in 10 mm units so the default 30-90 mm light
# geometry lands at O(1) intensities without per-scene gain tuning.
ATTENUATION_UNIT_MM = 10.0


@dataclass(frozen=True)
class Illuminant:
    """A point LED: position (mm), spectral group, intensity, falloff."""

    position: np.ndarray
    channel: LedChannel
    radiant_intensity: float = 1.0
    falloff: Falloff = Falloff.INVERSE_SQUARE

    def __post_init__(self):
        pos = _frozen(self.position, np.float64)
        object.__setattr__(self, "position", pos)
        if pos.shape != (3,):
            raise ValueError("position must be a 3-vector")
        if self.radiant_intensity < 0:
            raise ValueError("radiant_intensity must be >= 0")


def default_illuminants() -> tuple[Illuminant, ...]:
    """R/G/B on a 120-degree ring (radius 20 mm, height 25 mm), NIR overhead."""
    ring = 20.0
    h = 25.0
    return (
        Illuminant(np.array([ring, 0.0, h]), LedChannel.R, 6.0),
        Illuminant(np.array([-ring / 2, ring * np.sqrt(3) / 2, h]), LedChannel.G, 6.0),
        Illuminant(np.array([-ring / 2, -ring * np.sqrt(3) / 2, h]), LedChannel.B, 6.0),
        Illuminant(np.array([0.0, 0.0, 35.0]), LedChannel.NIR, 7.0),
    )


def _default_response(nir_gains) -> np.ndarray:
    response = np.zeros((N_CHANNELS, 4))
    response[0, LedChannel.R.value] = 1.0
    response[1, LedChannel.G.value] = 1.0
    response[2, LedChannel.B.value] = 1.0
    for k in range(3):
        response[3 + k, LedChannel.NIR.value] = nir_gains[k]
    return response


@dataclass(frozen=True)
class RenderConfig:
    """Scene lighting, surface albedo, noise and channel response."""

    illuminants: tuple[Illuminant, ...] = field(default_factory=default_illuminants)
    albedo: float = 0.9
    ambient: tuple[float, ...] = (0.02,) * N_CHANNELS
    noise_sigma: float = 0.0
    nir_gains: tuple[float, float, float] = (1.0, 0.97, 0.94)
    rng_seed: int = 0
    channel_response: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "illuminants", tuple(self.illuminants))
        ambient = tuple(float(a) for a in (
            self.ambient if np.ndim(self.ambient) else [self.ambient] * N_CHANNELS))
        object.__setattr__(self, "ambient", ambient)
        if len(ambient) != N_CHANNELS or any(a < 0 for a in ambient):
            raise ValueError("ambient must be six values >= 0")
        if not 0 < self.albedo <= 1:
            raise ValueError("albedo must be in (0, 1]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        gains = tuple(float(g) for g in self.nir_gains)
        object.__setattr__(self, "nir_gains", gains)
        if len(gains) != 3 or any(g < 0 for g in gains):
            raise ValueError("nir_gains must be three values >= 0")
        resp = self.channel_response
        resp = _default_response(gains) if resp is None else np.asarray(resp, np.float64)
        if resp.shape != (N_CHANNELS, 4) or np.any(resp < 0):
            raise ValueError("channel_response must be a nonnegative 6x4 matrix")
        if not np.any(resp.sum(axis=0) > 0):
            raise ValueError("at least one output channel per LED group")
        object.__setattr__(self, "channel_response", _frozen(resp, np.float64))


@dataclass(frozen=True)
class TactileFrame:
    """Six intensity rasters in [0, 1] sharing one validity mask."""

    channels: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "channels", _frozen(self.channels, np.float64))
        object.__setattr__(self, "mask", _frozen(self.mask, bool))
        if self.channels.ndim != 3 or self.channels.shape[0] != N_CHANNELS:
            raise ValueError("channels must be a (6, H, W) array")
        if self.channels.shape[1:] != self.mask.shape:
            raise ValueError("channel rasters and mask must agree in shape")
        valid = self.channels[:, self.mask]
        if valid.size and (valid.min() < 0 or valid.max() > 1):
            raise ValueError("valid intensities must lie in [0, 1]")

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    def channel(self, index: int) -> RasterGrid:
        return RasterGrid(self.channels[index], self.mask)


def _attenuation(distance_mm: np.ndarray, falloff: Falloff) -> np.ndarray:
    if falloff is Falloff.NONE:
        return np.ones_like(distance_mm)
    scaled = distance_mm / ATTENUATION_UNIT_MM
    return 1.0 / np.maximum(scaled * scaled, 1e-12)


def _preclamp_intensities(points: np.ndarray, nx, ny, nz, config: RenderConfig):
    """(6, ...) pre-noise intensities; points is (..., 3) in mm."""
    shape = nx.shape
    total = np.zeros((N_CHANNELS,) + shape)
    for light in config.illuminants:
        d = light.position - points
        dist = np.sqrt((d * d).sum(axis=-1))
        dist = np.maximum(dist, 1e-9)
        ndotl = (nx * d[..., 0] + ny * d[..., 1] + nz * d[..., 2]) / dist
        lambert = np.maximum(ndotl, 0.0) * light.radiant_intensity
        lambert = lambert * _attenuation(dist, light.falloff)
        gains = config.channel_response[:, light.channel.value]
        total += gains.reshape((N_CHANNELS,) + (1,) * len(shape)) * lambert
    ambient = np.asarray(config.ambient).reshape((N_CHANNELS,) + (1,) * len(shape))
    return ambient + config.albedo * total


def shade_pixel(normal, point, config: RenderConfig, channel_index: int) -> float:
    """Lambertian intensity of one surface point in one output channel.

    intensity = clamp(ambient_c + albedo * sum_lights I * max(0, n.l) * att, 0, 1)
    """
    normal = np.asarray(normal, dtype=np.float64)
    if abs(normal @ normal - 1.0) > 2e-6:
        raise ValueError("normal must be unit length")
    if not 0 <= channel_index < N_CHANNELS:
        raise ValueError("channel_index must be in 0..5")
    point = np.asarray(point, dtype=np.float64)
    pre = _preclamp_intensities(point, normal[0], normal[1], normal[2], config)
    return float(np.clip(pre[channel_index], 0.0, 1.0))


def render_frame(surface_heights: RasterGrid, normals: NormalMap,
                 camera: CameraModel, config: RenderConfig, pixel_pitch: float,
                 rng: np.random.Generator | None = None) -> TactileFrame:
    """Shade every valid pixel in all six channels, add noise, clamp.

    Deterministic for a fixed config seed (or caller-supplied generator).
    """
    H, W = surface_heights.shape
    if (H, W) != (camera.height, camera.width):
        raise ValueError("raster dimensions must match the camera resolution")
    if normals.shape != (H, W):
        raise ValueError("normals and heights must agree in shape")
    cols = (np.arange(W) - (W - 1) / 2.0) * pixel_pitch
    rows = (np.arange(H) - (H - 1) / 2.0) * pixel_pitch
    x, y = np.meshgrid(cols, rows)
    points = np.stack([x, y, surface_heights.values], axis=-1)
    intensities = _preclamp_intensities(points, normals.nx, normals.ny, normals.nz, config)
    if config.noise_sigma > 0:
        if rng is None:
            rng = np.random.default_rng(config.rng_seed)
        intensities = intensities + rng.normal(0.0, config.noise_sigma, intensities.shape)
    intensities = np.clip(intensities, 0.0, 1.0)
    mask = surface_heights.mask & normals.mask
    intensities = np.where(mask[None, :, :], intensities, 0.0)
    return TactileFrame(channels=intensities, mask=mask)
