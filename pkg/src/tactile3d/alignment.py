"""Cross-view alignment from point correspondences via seeded RANSAC.

Correspondences arrive as coordinate lists (corner detection from real
images is out of scope). Transforms are returned as 3x3 matrices acting
on homogeneous pixel coordinates, affine with a fixed (0, 0, 1) last row,
homographies normalized to h33 = 1.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import NoConsensusError


class TransformModel(enum.Enum):
    AFFINE = "affine"
    HOMOGRAPHY = "homography"


_MIN_SAMPLES = {TransformModel.AFFINE: 3, TransformModel.HOMOGRAPHY: 4}


@dataclass(frozen=True)
class CorrespondenceSet:
    """Matched pixel coordinates between two camera views."""

    points_a: np.ndarray
    points_b: np.ndarray
    model: TransformModel

    def __post_init__(self):
        pa = np.ascontiguousarray(np.asarray(self.points_a, dtype=np.float64))
        pb = np.ascontiguousarray(np.asarray(self.points_b, dtype=np.float64))
        pa.setflags(write=False)
        pb.setflags(write=False)
        object.__setattr__(self, "points_a", pa)
        object.__setattr__(self, "points_b", pb)
        if pa.ndim != 2 or pa.shape[1] != 2 or pa.shape != pb.shape:
            raise ValueError("points must be matching (N, 2) arrays")
        if len(pa) < _MIN_SAMPLES[self.model]:
            raise ValueError(f"{self.model.value} needs >= {_MIN_SAMPLES[self.model]} pairs")

    def __len__(self) -> int:
        return len(self.points_a)


def apply_transform(transform: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Apply a 3x3 homogeneous transform to (N, 2) points."""
    pts = np.asarray(points, dtype=np.float64)
    ones = np.ones((len(pts), 1))
    mapped = np.hstack([pts, ones]) @ transform.T
    return mapped[:, :2] / mapped[:, 2:3]


def _has_collinear_triple(points: np.ndarray) -> bool:
    # Degenerate minimal samples pin down no unique model.
    spread = max(1.0, float(np.ptp(points)))
    tol = 1e-9 * spread * spread
    n = len(points)
    for i in range(n - 2):
        for j in range(i + 1, n - 1):
            for k in range(j + 1, n):
                u = points[j] - points[i]
                v = points[k] - points[i]
                if abs(u[0] * v[1] - u[1] * v[0]) <= tol:
                    return True
    return False


def fit_affine(points_a: np.ndarray, points_b: np.ndarray) -> np.ndarray:
    """Least-squares affine map a -> b, embedded in a 3x3 matrix."""
    design = np.hstack([points_a, np.ones((len(points_a), 1))])
    coeffs, _, _, _ = np.linalg.lstsq(design, points_b, rcond=None)
    out = np.eye(3)
    out[:2, :] = coeffs.T
    return out


def _normalization(points: np.ndarray) -> np.ndarray:
    # Hartley conditioning: centroid to origin, mean distance sqrt(2).
    centroid = points.mean(axis=0)
    dist = np.sqrt(((points - centroid) ** 2).sum(axis=1)).mean()
    scale = np.sqrt(2.0) / max(dist, 1e-12)
    t = np.eye(3)
    t[0, 0] = t[1, 1] = scale
    t[:2, 2] = -scale * centroid
    return t


def fit_homography(points_a: np.ndarray, points_b: np.ndarray) -> np.ndarray:
    """Normalized-DLT homography a -> b with h33 fixed to 1."""
    ta = _normalization(points_a)
    tb = _normalization(points_b)
    pa = apply_transform(ta, points_a)
    pb = apply_transform(tb, points_b)
    rows = []
    for (xa, ya), (xb, yb) in zip(pa, pb):
        rows.append([-xa, -ya, -1, 0, 0, 0, xb * xa, xb * ya, xb])
        rows.append([0, 0, 0, -xa, -ya, -1, yb * xa, yb * ya, yb])
    _, _, vt = np.linalg.svd(np.asarray(rows))
    h = vt[-1].reshape(3, 3)
    h = np.linalg.inv(tb) @ h @ ta
    if abs(h[2, 2]) < 1e-12:
        raise np.linalg.LinAlgError("degenerate homography")
    return h / h[2, 2]


def _fit(model: TransformModel, pa: np.ndarray, pb: np.ndarray) -> np.ndarray:
    if model is TransformModel.AFFINE:
        return fit_affine(pa, pb)
    return fit_homography(pa, pb)


def ransac_align(correspondences: CorrespondenceSet, inlier_threshold: float,
                 max_iterations: int = 2000, seed: int = 0):
    """Robustly fit the correspondence transform with seeded RANSAC.

    Minimal samples (3 affine, 4 homography) vote by inlier count under
    the reprojection threshold; the winner is refit on all its inliers by
    least squares. Deterministic for a fixed seed.

    Returns
    -------
    (transform, inlier_mask)
        3x3 transform and the boolean consensus mask it was refit on.
    """
    if inlier_threshold <= 0:
        raise ValueError("inlier_threshold must be positive")
    pa, pb = correspondences.points_a, correspondences.points_b
    model = correspondences.model
    k = _MIN_SAMPLES[model]
    rng = np.random.default_rng(seed)

    best_count = 0
    best_mask = None
    for _ in range(max_iterations):
        pick = rng.choice(len(pa), size=k, replace=False)
        if _has_collinear_triple(pa[pick]) or _has_collinear_triple(pb[pick]):
            continue
        try:
            candidate = _fit(model, pa[pick], pb[pick])
        except np.linalg.LinAlgError:
            continue
        err = np.sqrt(((apply_transform(candidate, pa) - pb) ** 2).sum(axis=1))
        mask = err < inlier_threshold
        count = int(mask.sum())
        if count > best_count:
            best_count, best_mask = count, mask

    if best_count < k:
        raise NoConsensusError("no minimal sample reached consensus")
    return _fit(model, pa[best_mask], pb[best_mask]), best_mask
