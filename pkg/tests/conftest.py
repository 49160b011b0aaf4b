import numpy as np
import pytest

from tactile3d import (CameraModel, RenderConfig, SensorSurface, SurfaceKind,
                       generate_calibration_dataset)


def make_camera(width: int, height: int) -> CameraModel:
    return CameraModel(fx=800.0, fy=800.0, cx=(width - 1) / 2.0,
                       cy=(height - 1) / 2.0, width=width, height=height)


@pytest.fixture(scope="session")
def plane_surface():
    return SensorSurface.build(SurfaceKind.PLANE, (48, 64), pixel_pitch=0.1,
                               apex_height=4.0)


@pytest.fixture(scope="session")
def sphere_surface():
    return SensorSurface.build(SurfaceKind.SPHERE_CAP, (48, 64), pixel_pitch=0.1,
                               apex_height=4.0, radius=30.0)


@pytest.fixture(scope="session")
def tiny_dataset(plane_surface):
    """Six noisy probe presses on a flat membrane, shared where any
    plausible calibration data will do."""
    return generate_calibration_dataset(
        plane_surface, make_camera(64, 48), RenderConfig(noise_sigma=0.01),
        n_samples=6, probe_radius=1.5, indentation_range=(0.3, 0.8), seed=11,
        band_width=4)


@pytest.fixture(scope="session")
def clean_dataset(plane_surface):
    """Noiseless presses for tests that check estimator fidelity."""
    return generate_calibration_dataset(
        plane_surface, make_camera(64, 48), RenderConfig(noise_sigma=0.0),
        n_samples=6, probe_radius=1.5, indentation_range=(0.3, 0.8), seed=3,
        band_width=4)
