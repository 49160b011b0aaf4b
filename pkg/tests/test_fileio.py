import numpy as np
import pytest
from PIL import Image

from tactile3d import (FormatError, NormalMap, heatmap_image, read_raster,
                       write_grayscale_png, write_heatmap_png,
                       write_normals_png, write_pointcloud_ply, write_raster,
                       write_rgb_png)


class TestRasterRoundTrip:

    def test_multichannel_with_mask(self, tmp_path):
        rng = np.random.default_rng(0)
        values = rng.normal(size=(4, 6, 9)).astype(np.float32).astype(np.float64)
        mask = rng.random((6, 9)) > 0.3
        path = tmp_path / "stack.tras"
        write_raster(path, values, mask)
        loaded, loaded_mask = read_raster(path)
        assert np.array_equal(loaded, values)
        assert np.array_equal(loaded_mask, mask)

    def test_two_dimensional_input_gains_channel_axis(self, tmp_path):
        path = tmp_path / "flat.tras"
        write_raster(path, np.ones((3, 4)))
        loaded, mask = read_raster(path)
        assert loaded.shape == (1, 3, 4)
        assert mask is None

    def test_write_is_byte_deterministic(self, tmp_path):
        values = np.linspace(0, 1, 24).reshape(2, 3, 4)
        mask = np.ones((3, 4), dtype=bool)
        write_raster(tmp_path / "a.tras", values, mask)
        write_raster(tmp_path / "b.tras", values, mask)
        assert (tmp_path / "a.tras").read_bytes() == \
            (tmp_path / "b.tras").read_bytes()

    def test_mask_shape_checked(self, tmp_path):
        with pytest.raises(ValueError):
            write_raster(tmp_path / "x.tras", np.ones((3, 4)),
                         np.ones((4, 4), dtype=bool))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.tras"
        write_raster(path, np.ones((3, 4)))
        blob = bytearray(path.read_bytes())
        blob[:4] = b"SART"
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError, match="magic"):
            read_raster(path)

    def test_unsupported_version(self, tmp_path):
        path = tmp_path / "x.tras"
        write_raster(path, np.ones((3, 4)))
        blob = bytearray(path.read_bytes())
        blob[4] = 7
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError, match="version"):
            read_raster(path)

    def test_truncations(self, tmp_path):
        path = tmp_path / "x.tras"
        write_raster(path, np.ones((3, 4)), np.ones((3, 4), dtype=bool))
        blob = path.read_bytes()
        path.write_bytes(blob[:8])
        with pytest.raises(FormatError, match="header"):
            read_raster(path)
        path.write_bytes(blob[:20])
        with pytest.raises(FormatError, match="data"):
            read_raster(path)
        path.write_bytes(blob[:-1])
        with pytest.raises(FormatError, match="mask"):
            read_raster(path)


class TestPointcloudPly:

    def test_golden_file(self, tmp_path):
        path = tmp_path / "cloud.ply"
        write_pointcloud_ply(path, np.array([[1.5, -2.25, 0.125],
                                             [0.0, 0.1, 3.0]]))
        lines = path.read_text().splitlines()
        assert lines[0] == "ply"
        assert lines[1] == "format ascii 1.0"
        assert lines[2] == "element vertex 2"
        assert lines[3:6] == ["property float x", "property float y",
                              "property float z"]
        assert lines[6] == "end_header"
        assert lines[7] == "1.500000 -2.250000 0.125000"
        assert lines[8] == "0.000000 0.100000 3.000000"

    def test_shape_validation(self, tmp_path):
        with pytest.raises(ValueError):
            write_pointcloud_ply(tmp_path / "bad.ply", np.ones((4, 2)))


class TestHeatmaps:

    def test_extreme_values_hit_anchor_colors(self):
        values = np.array([[0.0, 1.0]])
        rgb = heatmap_image(values, vmin=0.0, vmax=1.0)
        assert tuple(rgb[0, 0]) == (68, 1, 84)
        assert tuple(rgb[0, 1]) == (253, 231, 37)

    def test_diverging_midpoint_is_neutral(self):
        # 0.5 quantizes to table entry 128 of 256, one step past the exact
        # anchor, so the neutral gray is interpolated rather than exact.
        rgb = heatmap_image(np.array([[0.5]]), vmin=0.0, vmax=1.0,
                            colormap="diverging")
        assert tuple(rgb[0, 0]) == (247, 246, 246)

    def test_invalid_pixels_are_black(self):
        values = np.array([[0.2, 0.8]])
        mask = np.array([[True, False]])
        rgb = heatmap_image(values, mask=mask, vmin=0.0, vmax=1.0)
        assert tuple(rgb[0, 1]) == (0, 0, 0)
        assert tuple(rgb[0, 0]) != (0, 0, 0)

    def test_constant_fields_do_not_divide_by_zero(self):
        rgb = heatmap_image(np.full((2, 2), 3.7))
        assert rgb.shape == (2, 2, 3)

    def test_unknown_colormap_rejected(self):
        with pytest.raises(ValueError):
            heatmap_image(np.zeros((2, 2)), colormap="jet")

    def test_png_round_trip_and_determinism(self, tmp_path):
        values = np.linspace(0, 1, 12).reshape(3, 4)
        write_heatmap_png(tmp_path / "a.png", values, vmin=0.0, vmax=1.0)
        write_heatmap_png(tmp_path / "b.png", values, vmin=0.0, vmax=1.0)
        assert (tmp_path / "a.png").read_bytes() == \
            (tmp_path / "b.png").read_bytes()
        pixels = np.asarray(Image.open(tmp_path / "a.png"))
        assert np.array_equal(pixels, heatmap_image(values, vmin=0.0, vmax=1.0))


class TestImageEncodings:

    def test_normals_png_encoding(self, tmp_path):
        nx = np.zeros((2, 2))
        ny = np.zeros((2, 2))
        nz = np.ones((2, 2))
        mask = np.array([[True, True], [True, False]])
        path = tmp_path / "normals.png"
        write_normals_png(path, NormalMap(nx, ny, nz, mask))
        pixels = np.asarray(Image.open(path))
        assert tuple(pixels[0, 0]) == (128, 128, 255)
        assert tuple(pixels[1, 1]) == (0, 0, 0)

    def test_grayscale_clips_and_masks(self, tmp_path):
        values = np.array([[0.0, 0.5], [1.5, -0.2]])
        mask = np.array([[True, True], [True, False]])
        path = tmp_path / "gray.png"
        write_grayscale_png(path, values, mask)
        pixels = np.asarray(Image.open(path))
        assert pixels[0, 0] == 0
        assert pixels[0, 1] == 128
        assert pixels[1, 0] == 255
        assert pixels[1, 1] == 0

    def test_rgb_png_stacks_channels(self, tmp_path):
        channels = np.zeros((3, 2, 2))
        channels[0, 0, 0] = 1.0
        channels[1, 0, 1] = 1.0
        channels[2, 1, 0] = 1.0
        path = tmp_path / "rgb.png"
        write_rgb_png(path, channels)
        pixels = np.asarray(Image.open(path))
        assert tuple(pixels[0, 0]) == (255, 0, 0)
        assert tuple(pixels[0, 1]) == (0, 255, 0)
        assert tuple(pixels[1, 0]) == (0, 0, 255)

    def test_rgb_png_shape_validation(self, tmp_path):
        with pytest.raises(ValueError):
            write_rgb_png(tmp_path / "bad.png", np.zeros((2, 2)))
