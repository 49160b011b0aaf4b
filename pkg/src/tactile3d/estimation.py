"""Per-pixel normal estimation over a tactile frame.

Dispatches to either the trained network or the lookup-table baseline
and always returns a well-formed NormalMap (unit norm, nz > 0).
"""

from __future__ import annotations

import numpy as np

from .errors import ModeMismatchError
from .lookup import LookupTable, lut_query
from .mlp import (PositionalEncodingConfig, PsnnModel, pixel_features,
                  psnn_forward_batch)
from .raster import NormalMap, normalize_vectors
from .render import TactileFrame

_BATCH = 65536


def _facing_camera(vx, vy, vz):
    """Flip sign where nz < 0 and rescue exact-zero nz; keeps unit norm."""
    flip = np.where(vz < 0, -1.0, 1.0)
    vx, vy, vz = vx * flip, vy * flip, vz * flip
    degenerate = vz <= 0
    if np.any(degenerate):
        vx = np.where(degenerate, 0.0, vx)
        vy = np.where(degenerate, 0.0, vy)
        vz = np.where(degenerate, 1.0, vz)
    return vx, vy, vz


def estimate_normal_map(frame: TactileFrame, estimator,
                        encoding_config: PositionalEncodingConfig | None = None) -> NormalMap:
    """Estimate normals at every valid pixel of the frame.

    For the network, intensities plus positional encoding feed batched
    inference; for the table, gradients come back and are lifted to
    normals via n = normalize((-Gx, -Gy, 1)).
    """
    rows, cols = np.nonzero(frame.mask)
    H, W = frame.shape
    if isinstance(estimator, PsnnModel):
        if encoding_config is not None and encoding_config != estimator.encoding:
            raise ModeMismatchError("encoding config does not match the checkpoint")
        outputs = np.empty((len(rows), 3))
        for start in range(0, len(rows), _BATCH):
            sel = slice(start, start + _BATCH)
            feats = pixel_features(frame.channels, rows[sel], cols[sel],
                                   estimator.channel_mode, estimator.encoding)
            outputs[sel] = psnn_forward_batch(estimator, feats)
        vx, vy, vz = outputs[:, 0], outputs[:, 1], outputs[:, 2]
    elif isinstance(estimator, LookupTable):
        intensities = frame.channels[:estimator.channel_mode.n_channels, rows, cols].T
        grads = lut_query(estimator, intensities)
        vx, vy, vz = normalize_vectors(-grads[:, 0], -grads[:, 1], np.ones(len(grads)))
    else:
        raise TypeError(f"unsupported estimator: {type(estimator).__name__}")
    vx, vy, vz = _facing_camera(vx, vy, vz)
    nx = np.zeros((H, W))
    ny = np.zeros((H, W))
    nz = np.ones((H, W))
    nx[rows, cols] = vx
    ny[rows, cols] = vy
    nz[rows, cols] = vz
    return NormalMap(nx, ny, nz, frame.mask)
