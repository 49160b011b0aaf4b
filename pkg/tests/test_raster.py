import numpy as np
import pytest

from tactile3d import NormalMap, RasterGrid, normalize_vectors


class TestRasterGrid:
    def test_freezes_and_types(self):
        grid = RasterGrid(np.arange(6, dtype=np.int32).reshape(2, 3),
                          np.ones((2, 3), dtype=int))
        assert grid.values.dtype == np.float64
        assert grid.mask.dtype == np.bool_
        with pytest.raises(ValueError):
            grid.values[0, 0] = 5.0

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            RasterGrid(np.zeros((2, 3)), np.ones((3, 2), dtype=bool))

    def test_as_bool_thresholds_and_masks(self):
        values = np.array([[0.0, 0.6], [1.0, 0.4]])
        mask = np.array([[True, True], [False, True]])
        got = RasterGrid(values, mask).as_bool()
        np.testing.assert_array_equal(got, [[False, True], [False, False]])

    def test_from_bool_roundtrip(self):
        flags = np.array([[True, False], [False, True]])
        mask = np.ones((2, 2), dtype=bool)
        grid = RasterGrid.from_bool(flags, mask)
        np.testing.assert_array_equal(grid.as_bool(), flags)
        assert set(np.unique(grid.values)) <= {0.0, 1.0}


class TestNormalMap:
    def test_accepts_unit_normals(self):
        n = NormalMap(np.zeros((2, 2)), np.zeros((2, 2)), np.ones((2, 2)),
                      np.ones((2, 2), dtype=bool))
        assert n.shape == (2, 2)
        assert n.stacked().shape == (2, 2, 3)

    def test_rejects_non_unit(self):
        with pytest.raises(ValueError):
            NormalMap(np.zeros((2, 2)), np.zeros((2, 2)),
                      np.full((2, 2), 0.5), np.ones((2, 2), dtype=bool))

    def test_rejects_backward_facing(self):
        nz = np.ones((2, 2))
        nz[0, 0] = -1.0
        with pytest.raises(ValueError):
            NormalMap(np.zeros((2, 2)), np.zeros((2, 2)), nz,
                      np.ones((2, 2), dtype=bool))

    def test_invalid_pixels_unchecked(self):
        nz = np.ones((2, 2))
        nz[0, 0] = 17.0
        mask = np.ones((2, 2), dtype=bool)
        mask[0, 0] = False
        NormalMap(np.zeros((2, 2)), np.zeros((2, 2)), nz, mask)


class TestNormalizeVectors:
    def test_known_vector(self):
        nx, ny, nz = normalize_vectors(3.0, 0.0, 4.0)
        np.testing.assert_allclose([nx, ny, nz], [0.6, 0.0, 0.8])

    def test_degenerate_fallback(self):
        nx, ny, nz = normalize_vectors(np.array([0.0, 1e-12]),
                                       np.array([0.0, 0.0]),
                                       np.array([0.0, 0.0]))
        np.testing.assert_array_equal(nx, [0.0, 0.0])
        np.testing.assert_array_equal(nz, [1.0, 1.0])

    def test_random_vectors_become_unit(self):
        rng = np.random.default_rng(13)
        v = rng.normal(size=(3, 100))
        nx, ny, nz = normalize_vectors(*v)
        np.testing.assert_allclose(nx**2 + ny**2 + nz**2, 1.0, atol=1e-12)
