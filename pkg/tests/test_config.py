import json

import numpy as np
import pytest

from tactile3d import (CameraModel, ChannelMode, ConfigError, PipelineConfig,
                       RenderConfig, SensorSurface, SurfaceKind,
                       camera_from_dict, camera_to_dict, render_from_dict,
                       render_to_dict, surface_from_dict, surface_to_dict)


class TestSurfaceSerialization:

    def test_round_trip(self):
        surface = SensorSurface.build(SurfaceKind.SPHERE_CAP, (48, 64),
                                      pixel_pitch=0.1, apex_height=4.0,
                                      radius=30.0)
        back = surface_from_dict(surface_to_dict(surface))
        assert back.kind is SurfaceKind.SPHERE_CAP
        assert back.shape == (48, 64)
        assert np.allclose(back.height_grid, surface.height_grid)

    def test_shape_fallback_argument(self):
        data = surface_to_dict(SensorSurface.build(
            SurfaceKind.PLANE, (8, 10), pixel_pitch=0.2, apex_height=1.0))
        data.pop("shape")
        surface = surface_from_dict(data, shape=(8, 10))
        assert surface.shape == (8, 10)
        with pytest.raises(ConfigError):
            surface_from_dict(data)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            surface_from_dict({"kind": "torus", "shape": [4, 4],
                               "pixel_pitch": 0.1, "apex_height": 0.0})


class TestCameraSerialization:

    def test_round_trip(self):
        camera = CameraModel(fx=500.0, fy=510.0, cx=31.5, cy=23.5,
                             width=64, height=48)
        back = camera_from_dict(camera_to_dict(camera))
        assert back.fx == camera.fx
        assert back.cy == camera.cy
        assert back.width == 64
        assert np.array_equal(back.rotation, camera.rotation)


class TestRenderSerialization:

    def test_round_trip_preserves_lights(self):
        config = RenderConfig(noise_sigma=0.02)
        back = render_from_dict(render_to_dict(config))
        assert back.noise_sigma == 0.02
        assert len(back.illuminants) == len(config.illuminants)
        for a, b in zip(back.illuminants, config.illuminants):
            assert a.channel is b.channel
            assert np.allclose(a.position, b.position)
            assert a.radiant_intensity == b.radiant_intensity
            assert a.falloff is b.falloff
        assert np.array_equal(back.channel_response, config.channel_response)


class TestPipelineConfig:

    def test_defaults_cover_every_section(self):
        config = PipelineConfig.defaults()
        data = config.to_dict()
        assert set(data) == {"seed", "paths", "surface", "camera", "render",
                             "probe", "train", "lut", "integration"}
        assert data["train"]["channel_mode"] == "rgbnir"
        assert len(data["render"]["illuminants"]) == 4

    def test_partial_override_keeps_other_defaults(self):
        config = PipelineConfig.from_dict(
            {"seed": 7, "probe": {"radius": 3.0}})
        assert config.seed == 7
        assert config.probe()["radius"] == 3.0
        assert config.probe()["count"] == 50
        assert config.lut_bins() == 16

    def test_unknown_keys_rejected_with_dotted_path(self):
        with pytest.raises(ConfigError, match="probe.radus"):
            PipelineConfig.from_dict({"probe": {"radus": 3.0}})
        with pytest.raises(ConfigError, match=r"render.illuminants\[1\].chan"):
            PipelineConfig.from_dict({"render": {"illuminants": [
                {"channel": "R"}, {"chan": "G"}]}})

    def test_invalid_json_wrapped(self):
        with pytest.raises(ConfigError, match="JSON"):
            PipelineConfig.from_json("{ seed: 1 }")

    def test_json_round_trip_is_lossless(self):
        config = PipelineConfig.from_dict({"seed": 3})
        again = PipelineConfig.from_json(config.to_json())
        assert again.to_json() == config.to_json()

    def test_save_load(self, tmp_path):
        config = PipelineConfig.defaults().with_seed(12)
        path = tmp_path / "config.json"
        config.save(path)
        loaded = PipelineConfig.load(path)
        assert loaded.seed == 12
        assert loaded.train().seed == 12

    def test_with_seed_updates_training_seed(self):
        config = PipelineConfig.defaults().with_seed(99)
        assert config.seed == 99
        assert config.train().seed == 99

    def test_with_value_dotted_path(self):
        config = PipelineConfig.defaults().with_value("probe.radius", 4.0)
        assert config.probe()["radius"] == 4.0
        with pytest.raises(ConfigError):
            PipelineConfig.defaults().with_value("probe.bogus", 1)

    def test_typed_accessors(self):
        config = PipelineConfig.from_dict({
            "surface": {"kind": "sphere-cap", "apex_height": 4.0,
                        "radius": 30.0},
            "camera": {"width": 64, "height": 48, "cx": 31.5, "cy": 23.5},
            "train": {"channel_mode": "rgb", "epochs": 3},
        })
        surface = config.surface()
        assert surface.kind is SurfaceKind.SPHERE_CAP
        assert surface.shape == (48, 64)
        assert config.camera().width == 64
        train = config.train()
        assert train.channel_mode is ChannelMode.RGB_ONLY
        assert train.epochs == 3
        assert config.integration()["solver"] == "direct"

    def test_probe_and_solver_validation(self):
        bad_probe = PipelineConfig.from_dict(
            {"probe": {"indentation_min": 0.9, "indentation_max": 0.2}})
        with pytest.raises(ConfigError):
            bad_probe.probe()
        bad_solver = PipelineConfig.from_dict(
            {"integration": {"solver": "gauss"}})
        with pytest.raises(ConfigError):
            bad_solver.integration()

    def test_paths_accessor(self):
        config = PipelineConfig.from_dict({"paths": {"out": "results"}})
        assert config.path("out") == "results"
        assert config.path("dataset") == "dataset"
