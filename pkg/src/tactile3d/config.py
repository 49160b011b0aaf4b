"""One JSON document configures the whole pipeline.

The schema below records every default. Parsing merges user values over
the defaults and rejects unknown keys by their dotted path, so a typo
like "render.albedoo" fails loudly instead of silently using the
default. Serializing a parsed config materializes all defaults, which
makes the parse/serialize round trip lossless.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .geometry import CameraModel, SensorSurface, SurfaceKind
from .mlp import TrainConfig, train_config_from_dict, train_config_to_dict
from .render import Falloff, Illuminant, LedChannel, RenderConfig


def surface_to_dict(surface: SensorSurface) -> dict:
    return {
        "kind": surface.kind.value,
        "shape": [int(surface.shape[0]), int(surface.shape[1])],
        "pixel_pitch": surface.pixel_pitch,
        "apex_height": surface.apex_height,
        "radius": surface.radius,
        "semi_axes": None if surface.semi_axes is None else list(surface.semi_axes),
    }


def surface_from_dict(data: dict, shape: tuple[int, int] | None = None) -> SensorSurface:
    if data.get("shape") is not None:
        shape = tuple(int(v) for v in data["shape"])
    if shape is None:
        raise ConfigError("surface.shape is required when no camera sets the resolution")
    semi = data.get("semi_axes")
    try:
        kind = SurfaceKind(data["kind"])
    except ValueError:
        raise ConfigError(f"surface.kind: unknown kind {data['kind']!r}") from None
    return SensorSurface.build(
        kind=kind, shape=shape,
        pixel_pitch=float(data["pixel_pitch"]),
        apex_height=float(data.get("apex_height", 0.0)),
        radius=None if data.get("radius") is None else float(data["radius"]),
        semi_axes=None if semi is None else tuple(float(v) for v in semi))


def camera_to_dict(camera: CameraModel) -> dict:
    return {
        "fx": camera.fx, "fy": camera.fy, "cx": camera.cx, "cy": camera.cy,
        "width": camera.width, "height": camera.height,
        "n_air": camera.n_air, "n_medium": camera.n_medium,
        "rotation": camera.rotation.tolist(),
        "translation": camera.translation.tolist(),
    }


def camera_from_dict(data: dict) -> CameraModel:
    return CameraModel(
        fx=float(data["fx"]), fy=float(data["fy"]),
        cx=float(data["cx"]), cy=float(data["cy"]),
        width=int(data["width"]), height=int(data["height"]),
        n_air=float(data.get("n_air", 1.0)),
        n_medium=float(data.get("n_medium", 1.5168)),
        rotation=np.asarray(data.get("rotation", np.eye(3).tolist())),
        translation=np.asarray(data.get("translation", [0.0, 0.0, 0.0])))


def _illuminant_to_dict(light: Illuminant) -> dict:
    return {
        "position": [float(v) for v in light.position],
        "channel": light.channel.name,
        "radiant_intensity": light.radiant_intensity,
        "falloff": light.falloff.value,
    }


def _illuminant_from_dict(data: dict) -> Illuminant:
    try:
        channel = LedChannel[data["channel"]]
    except KeyError:
        raise ConfigError(f"illuminant channel must be one of "
                          f"{[c.name for c in LedChannel]}, got {data['channel']!r}") from None
    try:
        falloff = Falloff(data.get("falloff", Falloff.INVERSE_SQUARE.value))
    except ValueError:
        raise ConfigError(f"illuminant falloff: unknown value {data['falloff']!r}") from None
    return Illuminant(position=np.asarray(data["position"], dtype=np.float64),
                      channel=channel,
                      radiant_intensity=float(data.get("radiant_intensity", 1.0)),
                      falloff=falloff)


def render_to_dict(config: RenderConfig) -> dict:
    return {
        "illuminants": [_illuminant_to_dict(l) for l in config.illuminants],
        "albedo": config.albedo,
        "ambient": list(config.ambient),
        "noise_sigma": config.noise_sigma,
        "nir_gains": list(config.nir_gains),
        "rng_seed": config.rng_seed,
        "channel_response": config.channel_response.tolist(),
    }


def render_from_dict(data: dict) -> RenderConfig:
    kwargs = {}
    if "illuminants" in data:
        kwargs["illuminants"] = tuple(_illuminant_from_dict(d) for d in data["illuminants"])
    for key in ("albedo", "noise_sigma", "rng_seed"):
        if key in data:
            kwargs[key] = data[key]
    if "ambient" in data:
        kwargs["ambient"] = tuple(data["ambient"])
    if "nir_gains" in data:
        kwargs["nir_gains"] = tuple(data["nir_gains"])
    if data.get("channel_response") is not None:
        kwargs["channel_response"] = np.asarray(data["channel_response"], dtype=np.float64)
    return RenderConfig(**kwargs)


class _DictList:
    """Schema marker: a list whose dict elements share one sub-schema."""

    def __init__(self, template: dict, default: list):
        self.template = template
        self.default = default


_ILLUMINANT_TEMPLATE = {
    "position": [0.0, 0.0, 25.0],
    "channel": "R",
    "radiant_intensity": 1.0,
    "falloff": "inverse-square",
}

_DEFAULT_CAMERA = CameraModel(fx=800.0, fy=800.0, cx=319.5, cy=239.5)

_SCHEMA = {
    "seed": 0,
    "paths": {
        "dataset": "dataset",
        "checkpoint": "model.psnn",
        "lut": "table.lut",
        "out": "out",
    },
    "surface": {
        "kind": "plane",
        "pixel_pitch": 0.1,
        "apex_height": 0.0,
        "radius": None,
        "semi_axes": None,
        "shape": None,
    },
    "camera": camera_to_dict(_DEFAULT_CAMERA),
    "render": render_to_dict(RenderConfig()),
    "probe": {
        "radius": 2.5,
        "indentation_min": 0.2,
        "indentation_max": 0.8,
        "count": 50,
        "smooth_crease": False,
    },
    "train": train_config_to_dict(TrainConfig()),
    "lut": {"bins_per_channel": 16},
    "integration": {
        "prior_weight": 1.0,
        "band_width": 10,
        "nz_floor": 1e-3,
        "solver": "direct",
        "tol": 1e-10,
        "max_iterations": 10000,
    },
}
_SCHEMA["render"]["illuminants"] = _DictList(
    _ILLUMINANT_TEMPLATE, render_to_dict(RenderConfig())["illuminants"])


def _materialize(schema):
    """The schema with every marker replaced by its default value."""
    if isinstance(schema, _DictList):
        return copy.deepcopy(schema.default)
    if isinstance(schema, dict):
        return {key: _materialize(value) for key, value in schema.items()}
    return copy.deepcopy(schema)


def _merge(schema, data, path: str):
    """Fill defaults, keep user values, reject keys absent from the schema."""
    if isinstance(schema, _DictList):
        if not isinstance(data, list):
            raise ConfigError(f"{path}: expected a list")
        return [_merge(schema.template, item, f"{path}[{i}]")
                for i, item in enumerate(data)]
    if isinstance(schema, dict):
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected an object")
        for key in data:
            if key not in schema:
                where = f"{path}.{key}" if path else key
                raise ConfigError(f"unknown config key: {where}")
        out = {}
        for key, default in schema.items():
            child = f"{path}.{key}" if path else key
            out[key] = _merge(default, data[key], child) if key in data \
                else _materialize(default)
        return out
    return copy.deepcopy(data)


@dataclass(frozen=True)
class PipelineConfig:
    """Parsed, default-complete pipeline settings with typed accessors."""

    data: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        return cls(data=_merge(_SCHEMA, raw, ""))

    @classmethod
    def from_json(cls, text: str) -> "PipelineConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())

    @classmethod
    def defaults(cls) -> "PipelineConfig":
        return cls.from_dict({})

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    def with_seed(self, seed: int) -> "PipelineConfig":
        """Copy with both the pipeline seed and the training seed replaced."""
        data = self.to_dict()
        data["seed"] = int(seed)
        data["train"]["seed"] = int(seed)
        return PipelineConfig(data=data)

    def with_value(self, dotted_key: str, value) -> "PipelineConfig":
        data = self.to_dict()
        node = data
        parts = dotted_key.split(".")
        for part in parts[:-1]:
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config key: {dotted_key}")
        node[parts[-1]] = value
        return PipelineConfig.from_dict(data)

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    def path(self, name: str) -> str:
        return self.data["paths"][name]

    def camera(self) -> CameraModel:
        return camera_from_dict(self.data["camera"])

    def surface(self) -> SensorSurface:
        camera = self.camera()
        return surface_from_dict(self.data["surface"],
                                 shape=(camera.height, camera.width))

    def render(self) -> RenderConfig:
        return render_from_dict(self.data["render"])

    def train(self) -> TrainConfig:
        return train_config_from_dict(self.data["train"])

    def probe(self) -> dict:
        probe = self.data["probe"]
        if probe["indentation_min"] > probe["indentation_max"]:
            raise ConfigError("probe.indentation_min exceeds probe.indentation_max")
        if probe["count"] < 1:
            raise ConfigError("probe.count must be >= 1")
        return dict(probe)

    def integration(self) -> dict:
        settings = dict(self.data["integration"])
        if settings["solver"] not in ("direct", "cg", "fast-poisson"):
            raise ConfigError("integration.solver must be direct, cg, or fast-poisson")
        return settings

    def lut_bins(self) -> int:
        return int(self.data["lut"]["bins_per_channel"])
