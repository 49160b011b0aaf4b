"""Calibration datasets: probe placement, rendering, split, persistence.

A dataset directory holds one metadata.json plus one 10-channel raster
per sample (R, G, B, NIR1, NIR2, NIR3, nx, ny, nz, contact) under the
sample's validity mask. Edge depth priors are not stored; they are
rebuilt from the surface plus the recorded band width, which keeps the
files byte-stable and small.
"""

from __future__ import annotations

import json
import os
import shutil
from dataclasses import dataclass

import numpy as np

from . import config as config_mod
from .errors import FormatError
from .fileio import read_raster, write_raster
from .geometry import CameraModel, SensorSurface, SphereProbe, indent_surface
from .integration import DepthPrior, extract_boundary_prior
from .raster import NormalMap, RasterGrid
from .render import RenderConfig, TactileFrame, render_frame

DATASET_FORMAT_VERSION = 1


@dataclass(frozen=True)
class CalibrationSample:
    """One probe press: frame, truth normals, contact flags, edge prior."""

    frame: TactileFrame
    gt_normals: NormalMap
    contact_mask: RasterGrid
    probe: SphereProbe
    z_prior_edge: DepthPrior

    def __post_init__(self):
        if self.frame.shape != self.gt_normals.shape or self.frame.shape != self.contact_mask.shape:
            raise ValueError("sample rasters must share one shape")
        stray = self.contact_mask.as_bool() & ~self.frame.mask
        if stray.any():
            raise ValueError("contact mask must stay inside the valid mask")


def extract_contact_mask(sample: CalibrationSample) -> RasterGrid:
    """The stored contact flags, guaranteed to sit inside the valid mask."""
    return sample.contact_mask


@dataclass(frozen=True)
class CalibrationDataset:
    samples: tuple[CalibrationSample, ...]
    surface: SensorSurface
    render_config: RenderConfig
    split: tuple[str, ...]
    seed: int = 0
    camera: CameraModel | None = None

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "split", tuple(self.split))
        if len(self.samples) != len(self.split):
            raise ValueError("one split tag per sample")
        if any(tag not in ("train", "test") for tag in self.split):
            raise ValueError("split tags must be 'train' or 'test'")

    def indices(self, tag: str) -> list[int]:
        return [i for i, t in enumerate(self.split) if t == tag]

    def __len__(self) -> int:
        return len(self.samples)


def _halton(index: int, base: int) -> float:
    result = 0.0
    f = 1.0
    i = index
    while i > 0:
        f /= base
        result += f * (i % base)
        i //= base
    return result


def halton_sequence(n: int, skip: int = 0) -> np.ndarray:
    """First n points of the (2, 3)-base 2-d Halton sequence, in [0, 1)^2."""
    return np.array([[_halton(i, 2), _halton(i, 3)]
                     for i in range(1 + skip, n + 1 + skip)])


def probe_placements(surface: SensorSurface, n_samples: int,
                     margin_mm: float) -> np.ndarray:
    """Quasi-uniform (cx, cy) placements inside the valid region.

    Low-discrepancy points over the valid bounding box, shrunk by the
    margin, keeping only points whose pixel is valid; avoids aliasing
    against the pixel grid in a way regular grids of presses would not.
    """
    x, y = surface.grid_coords()
    valid = surface.valid_mask
    if not valid.any():
        raise ValueError("surface has no valid region")
    x_lo, x_hi = x[valid].min() + margin_mm, x[valid].max() - margin_mm
    y_lo, y_hi = y[valid].min() + margin_mm, y[valid].max() - margin_mm
    if x_lo >= x_hi or y_lo >= y_hi:
        raise ValueError("margin leaves no room to place probes")
    pitch = surface.pixel_pitch
    H, W = surface.shape
    out = []
    index = 0
    while len(out) < n_samples:
        batch = halton_sequence(4 * max(n_samples, 8), skip=index)
        index += len(batch)
        for u, v in batch:
            cx = x_lo + u * (x_hi - x_lo)
            cy = y_lo + v * (y_hi - y_lo)
            col = int(round(cx / pitch + (W - 1) / 2.0))
            row = int(round(cy / pitch + (H - 1) / 2.0))
            if 0 <= row < H and 0 <= col < W and valid[row, col]:
                out.append((cx, cy))
                if len(out) == n_samples:
                    break
        if index > 1000 * max(n_samples, 8):
            raise ValueError("could not place probes inside the valid region")
    return np.array(out)


def generate_calibration_dataset(surface: SensorSurface, camera: CameraModel,
                                 config: RenderConfig, n_samples: int,
                                 probe_radius: float,
                                 indentation_range: tuple[float, float],
                                 seed: int, band_width: int = 10,
                                 prior_weight: float = 1.0,
                                 smooth_crease: bool = False) -> CalibrationDataset:
    """Render n_samples quasi-uniform probe presses with ground truth.

    Per-sample randomness (indentation depth, pixel noise) comes from
    np.random.default_rng((seed, index)), so any sample regenerates
    byte-identically on its own. Split is 80/20 by index (every fifth
    sample is test).
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    lo, hi = indentation_range
    if lo < 0 or hi < lo:
        raise ValueError("indentation_range must satisfy 0 <= lo <= hi")
    if hi >= probe_radius:
        raise ValueError("indentation must stay below the probe radius")
    placements = probe_placements(surface, n_samples, margin_mm=probe_radius)
    prior = extract_boundary_prior(surface, band_width=band_width, weight=prior_weight)
    samples = []
    split = []
    for i, (cx, cy) in enumerate(placements):
        rng = np.random.default_rng((seed, i))
        indentation = float(rng.uniform(lo, hi))
        probe = SphereProbe.pressed_into(surface, cx, cy, indentation, probe_radius)
        heights, contact, normals = indent_surface(surface, probe,
                                                   smooth_crease=smooth_crease)
        frame = render_frame(heights, normals, camera, config,
                             surface.pixel_pitch, rng=rng)
        samples.append(CalibrationSample(frame=frame, gt_normals=normals,
                                         contact_mask=contact, probe=probe,
                                         z_prior_edge=prior))
        split.append("test" if i % 5 == 4 else "train")
    return CalibrationDataset(samples=tuple(samples), surface=surface,
                              render_config=config, split=tuple(split), seed=seed,
                              camera=camera)


def _sample_stack(sample: CalibrationSample) -> np.ndarray:
    return np.concatenate([
        sample.frame.channels,
        sample.gt_normals.stacked().transpose(2, 0, 1),
        sample.contact_mask.values[None, :, :],
    ], axis=0)


def save_dataset(dataset: CalibrationDataset, path) -> None:
    """Write the dataset directory atomically (temp dir, then rename)."""
    path = str(path)
    tmp = path + ".tmp"
    if os.path.exists(tmp):
        shutil.rmtree(tmp)
    os.makedirs(tmp)
    meta = {
        "format_version": DATASET_FORMAT_VERSION,
        "seed": dataset.seed,
        "surface": config_mod.surface_to_dict(dataset.surface),
        "camera": None if dataset.camera is None else config_mod.camera_to_dict(dataset.camera),
        "render": config_mod.render_to_dict(dataset.render_config),
        "split": list(dataset.split),
        "probes": [{"center": [float(c) for c in s.probe.center],
                    "radius": s.probe.radius,
                    "indentation": s.probe.indentation}
                   for s in dataset.samples],
        "band_width": int(dataset.samples[0].z_prior_edge.band_width),
        "prior_weight": float(dataset.samples[0].z_prior_edge.weight),
    }
    with open(os.path.join(tmp, "metadata.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for i, sample in enumerate(dataset.samples):
        write_raster(os.path.join(tmp, f"sample_{i:03d}.tras"),
                     _sample_stack(sample), sample.frame.mask)
    if os.path.exists(path):
        shutil.rmtree(path)
    os.replace(tmp, path)


def load_dataset(path) -> CalibrationDataset:
    path = str(path)
    meta_path = os.path.join(path, "metadata.json")
    try:
        with open(meta_path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise FileNotFoundError(f"{path}: not a dataset directory (no metadata.json)")
    except json.JSONDecodeError as exc:
        raise FormatError(f"{meta_path}: bad JSON: {exc}")
    if meta.get("format_version") != DATASET_FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported dataset format version")
    surface = config_mod.surface_from_dict(meta["surface"])
    render = config_mod.render_from_dict(meta["render"])
    prior = extract_boundary_prior(surface, band_width=int(meta["band_width"]),
                                   weight=float(meta["prior_weight"]))
    samples = []
    for i, probe_info in enumerate(meta["probes"]):
        values, mask = read_raster(os.path.join(path, f"sample_{i:03d}.tras"))
        if values.shape[0] != 10 or mask is None:
            raise FormatError(f"{path}: sample {i} must have 10 channels and a mask")
        frame = TactileFrame(np.clip(values[:6], 0.0, 1.0), mask)
        nx, ny, nz = values[6], values[7], values[8]
        norm = np.sqrt(nx * nx + ny * ny + nz * nz)
        norm[norm == 0] = 1.0
        normals = NormalMap(nx / norm, ny / norm, nz / norm, mask)
        contact = RasterGrid(values[9], mask)
        probe = SphereProbe(center=np.array(probe_info["center"]),
                            radius=float(probe_info["radius"]),
                            indentation=float(probe_info["indentation"]))
        samples.append(CalibrationSample(frame=frame, gt_normals=normals,
                                         contact_mask=contact, probe=probe,
                                         z_prior_edge=prior))
    camera = None
    if meta.get("camera") is not None:
        camera = config_mod.camera_from_dict(meta["camera"])
    return CalibrationDataset(samples=tuple(samples), surface=surface,
                              render_config=render, split=tuple(meta["split"]),
                              seed=int(meta["seed"]), camera=camera)
