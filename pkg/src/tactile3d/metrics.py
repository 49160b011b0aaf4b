"""Gradient and depth error metrics plus the comparison report.

Gradient errors are mean absolute errors of the dimensionless slopes
(p, q); Total is their plain sum, not the Euclidean combination, and the
report additionally carries pixel-pitch-scaled values (slope times mm per
pixel) since both unit conventions circulate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .integration import DepthMap, GradientField, normals_to_gradients
from .raster import NormalMap


def _as_gradients(value) -> GradientField:
    if isinstance(value, GradientField):
        return value
    if isinstance(value, NormalMap):
        return normals_to_gradients(value)
    raise TypeError(f"expected GradientField or NormalMap, got {type(value).__name__}")


def mae_gradients(estimated, truth, region_mask: np.ndarray):
    """(Gx error, Gy error, Total) over the region; Total = Gx + Gy."""
    est = _as_gradients(estimated)
    true = _as_gradients(truth)
    region = np.asarray(region_mask, dtype=bool) & est.mask & true.mask
    if not region.any():
        raise ValueError("empty evaluation region")
    gx = float(np.abs(est.p[region] - true.p[region]).mean())
    gy = float(np.abs(est.q[region] - true.q[region]).mean())
    return gx, gy, gx + gy


def mae_depth(estimated: DepthMap, truth: DepthMap, region_mask: np.ndarray,
              pixel_pitch: float | None = None) -> float:
    """Mean absolute metric depth error (mm) over the region."""
    def in_mm(depth: DepthMap) -> np.ndarray:
        if depth.units == "mm":
            return depth.z
        if pixel_pitch is None:
            raise ValueError("grid-unit depths need pixel_pitch to report mm")
        return depth.z * pixel_pitch

    region = np.asarray(region_mask, dtype=bool) & estimated.mask & truth.mask
    if not region.any():
        raise ValueError("empty evaluation region")
    return float(np.abs(in_mm(estimated)[region] - in_mm(truth)[region]).mean())


@dataclass(frozen=True)
class MethodMetrics:
    """One estimator/integration variant's row in the comparison."""

    name: str
    gx_mae: float
    gy_mae: float
    total_mae: float
    pixel_pitch: float
    n_pixels: int
    clamped_pixels: int = 0
    runtime_s: float = 0.0
    depth_mae_mm: float | None = None
    depth_mae_contact_mm: float | None = None

    def __post_init__(self):
        if abs(self.total_mae - (self.gx_mae + self.gy_mae)) > 1e-12:
            raise ValueError("Total must equal Gx + Gy within 1e-12")
        for value in (self.gx_mae, self.gy_mae, self.total_mae):
            if not np.isfinite(value):
                raise ValueError("metrics must be finite")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "gx_mae": self.gx_mae,
            "gy_mae": self.gy_mae,
            "total_mae": self.total_mae,
            "gx_mae_mm_per_px": self.gx_mae * self.pixel_pitch,
            "gy_mae_mm_per_px": self.gy_mae * self.pixel_pitch,
            "total_mae_mm_per_px": self.total_mae * self.pixel_pitch,
            "pixel_pitch": self.pixel_pitch,
            "n_pixels": self.n_pixels,
            "clamped_pixels": self.clamped_pixels,
            "runtime_s": self.runtime_s,
            "depth_mae_mm": self.depth_mae_mm,
            "depth_mae_contact_mm": self.depth_mae_contact_mm,
        }


@dataclass(frozen=True)
class MetricsReport:
    methods: tuple[MethodMetrics, ...]
    sample_count: int
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))

    def to_dict(self) -> dict:
        return {"sample_count": self.sample_count,
                "methods": [m.to_dict() for m in self.methods],
                "extra": self.extra}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def gradient_table(self) -> str:
        """Plain-text gradient comparison, one row per error kind."""
        names = [m.name for m in self.methods]
        width = max(18, *(len(n) + 2 for n in names)) if names else 18
        header = "Error (MAE)".ljust(20) + "".join(n.rjust(width) for n in names)
        rows = [header, "-" * len(header)]
        for label, attr in (("Gx", "gx_mae"), ("Gy", "gy_mae"), ("Total", "total_mae")):
            cells = "".join(f"{getattr(m, attr):.4f}".rjust(width) for m in self.methods)
            rows.append(label.ljust(20) + cells)
        return "\n".join(rows)

    def depth_table(self) -> str:
        """Plain-text depth comparison for methods that produced depth."""
        with_depth = [m for m in self.methods if m.depth_mae_mm is not None]
        if not with_depth:
            return "(no depth metrics)"
        width = max(18, *(len(m.name) + 2 for m in with_depth))
        header = "Depth error (MAE)".ljust(20) + "".join(
            m.name.rjust(width) for m in with_depth)
        rows = [header, "-" * len(header)]
        overall = "".join(f"{m.depth_mae_mm:.4f} mm".rjust(width) for m in with_depth)
        rows.append("all pixels".ljust(20) + overall)
        contact_vals = []
        for m in with_depth:
            text = "-" if m.depth_mae_contact_mm is None else f"{m.depth_mae_contact_mm:.4f} mm"
            contact_vals.append(text.rjust(width))
        rows.append("contact only".ljust(20) + "".join(contact_vals))
        return "\n".join(rows)

    def render_text(self) -> str:
        return self.gradient_table() + "\n\n" + self.depth_table() + "\n"
