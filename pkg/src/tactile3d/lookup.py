"""Intensity-to-gradient lookup table baseline.

Quantizes channel intensities into per-channel bins and stores the
running mean of the true depth gradients (Gx, Gy) per occupied bin.
Queries landing in empty bins fall back to the nearest populated bin by
L1 distance in bin space, ties broken by the lowest flattened bin index,
so out-of-support behavior is deterministic.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import FormatError
from .integration import normals_to_gradients
from .mlp import ChannelMode


class LookupTable:
    """Populated bins stored sorted by flattened bin index."""

    def __init__(self, bins_per_channel: int, channel_mode: ChannelMode,
                 keys: np.ndarray, mean_gx: np.ndarray, mean_gy: np.ndarray,
                 counts: np.ndarray):
        if bins_per_channel < 2 or bins_per_channel > 255:
            raise ValueError("bins_per_channel must be in 2..255")
        keys = np.asarray(keys, dtype=np.int64)
        if keys.ndim != 2 or keys.shape[1] != channel_mode.n_channels:
            raise ValueError("keys must be (N, n_channels)")
        self.bins_per_channel = bins_per_channel
        self.channel_mode = channel_mode
        order = np.argsort(self._flatten(keys), kind="stable")
        self.keys = keys[order]
        self.mean_gx = np.asarray(mean_gx, dtype=np.float64)[order]
        self.mean_gy = np.asarray(mean_gy, dtype=np.float64)[order]
        self.counts = np.asarray(counts, dtype=np.int64)[order]
        if not (np.all(np.isfinite(self.mean_gx)) and np.all(np.isfinite(self.mean_gy))):
            raise ValueError("stored gradients must be finite")
        if np.any(self.counts < 1):
            raise ValueError("bin counts must be >= 1")
        self._flat_sorted = self._flatten(self.keys)
        self._fallback_cache: dict[int, int] = {}

    def __len__(self) -> int:
        return len(self.keys)

    def _flatten(self, keys: np.ndarray) -> np.ndarray:
        dims = (self.bins_per_channel,) * self.channel_mode.n_channels
        return np.ravel_multi_index(tuple(keys.T), dims)

    def quantize(self, intensities: np.ndarray) -> np.ndarray:
        """Bin indices for intensities in [0, 1]; 1.0 lands in the top bin."""
        scaled = np.floor(np.asarray(intensities, dtype=np.float64)
                          * self.bins_per_channel).astype(np.int64)
        return np.clip(scaled, 0, self.bins_per_channel - 1)

    def _nearest_row(self, key: np.ndarray, flat: int) -> int:
        cached = self._fallback_cache.get(flat)
        if cached is not None:
            return cached
        dists = np.abs(self.keys - key).sum(axis=1)
        # keys are sorted by flattened index, so argmin's first hit is the
        # lowest-index tie winner.
        row = int(np.argmin(dists))
        self._fallback_cache[flat] = row
        return row


def lut_build(dataset, bins_per_channel: int = 16,
              channel_mode: ChannelMode = ChannelMode.RGB_ONLY,
              split: str = "train") -> LookupTable:
    """Accumulate mean contact-pixel gradients per quantized intensity bin."""
    n_chan = channel_mode.n_channels
    dims = (bins_per_channel,) * n_chan
    flat_keys = []
    gx_list, gy_list = [], []
    for sample, tag in zip(dataset.samples, dataset.split):
        if split is not None and tag != split:
            continue
        contact = sample.contact_mask.as_bool()
        if not contact.any():
            continue
        intensities = sample.frame.channels[:n_chan, contact].T
        scaled = np.clip(np.floor(intensities * bins_per_channel).astype(np.int64),
                         0, bins_per_channel - 1)
        flat_keys.append(np.ravel_multi_index(tuple(scaled.T), dims))
        grad = normals_to_gradients(sample.gt_normals)
        gx_list.append(grad.p[contact])
        gy_list.append(grad.q[contact])
    if not flat_keys:
        raise ValueError("dataset has no contact pixels to build a table from")
    flat = np.concatenate(flat_keys)
    gx = np.concatenate(gx_list)
    gy = np.concatenate(gy_list)
    uniq, inverse = np.unique(flat, return_inverse=True)
    counts = np.bincount(inverse, minlength=len(uniq))
    mean_gx = np.bincount(inverse, weights=gx, minlength=len(uniq)) / counts
    mean_gy = np.bincount(inverse, weights=gy, minlength=len(uniq)) / counts
    keys = np.stack(np.unravel_index(uniq, dims), axis=1)
    return LookupTable(bins_per_channel, channel_mode, keys, mean_gx, mean_gy, counts)


def lut_query(table: LookupTable, intensities) -> np.ndarray:
    """(Gx, Gy) for one intensity tuple or an (M, C) batch."""
    if len(table) == 0:
        raise ValueError("empty lookup table")
    arr = np.atleast_2d(np.asarray(intensities, dtype=np.float64))
    if arr.shape[1] != table.channel_mode.n_channels:
        raise ValueError(f"expected {table.channel_mode.n_channels} intensities")
    keys = table.quantize(arr)
    flats = table._flatten(keys)
    pos = np.minimum(np.searchsorted(table._flat_sorted, flats), len(table) - 1)
    rows = np.where(table._flat_sorted[pos] == flats, pos, -1)
    for i in np.nonzero(rows < 0)[0]:
        rows[i] = table._nearest_row(keys[i], int(flats[i]))
    out = np.column_stack([table.mean_gx[rows], table.mean_gy[rows]])
    return out[0] if np.ndim(intensities) == 1 else out


_LUT_MAGIC = b"LUT1"
_LUT_VERSION = 1


def save_lut(path, table: LookupTable) -> None:
    """Binary table: header, then (bin key, mean Gx, mean Gy, count) records."""
    n_chan = table.channel_mode.n_channels
    with open(path, "wb") as fh:
        fh.write(_LUT_MAGIC)
        fh.write(struct.pack("<HHBI", _LUT_VERSION, table.bins_per_channel,
                             0 if table.channel_mode is ChannelMode.RGB_ONLY else 1,
                             len(table)))
        record = struct.Struct(f"<{n_chan}BffI")
        for key, gx, gy, count in zip(table.keys, table.mean_gx,
                                      table.mean_gy, table.counts):
            fh.write(record.pack(*key.tolist(), float(gx), float(gy), int(count)))


def load_lut(path) -> LookupTable:
    with open(path, "rb") as fh:
        blob = fh.read()
    header = struct.Struct("<4sHHBI")
    if len(blob) < header.size:
        raise FormatError(f"{path}: truncated table header")
    magic, version, bins, mode_code, n_records = header.unpack_from(blob)
    if magic != _LUT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != _LUT_VERSION:
        raise FormatError(f"{path}: unsupported table version {version}")
    mode = ChannelMode.RGB_ONLY if mode_code == 0 else ChannelMode.RGB_NIR
    record = struct.Struct(f"<{mode.n_channels}BffI")
    expected = header.size + n_records * record.size
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, have {len(blob)}")
    keys = np.empty((n_records, mode.n_channels), dtype=np.int64)
    gx = np.empty(n_records)
    gy = np.empty(n_records)
    counts = np.empty(n_records, dtype=np.int64)
    for i in range(n_records):
        fields = record.unpack_from(blob, header.size + i * record.size)
        keys[i] = fields[:mode.n_channels]
        gx[i], gy[i], counts[i] = fields[mode.n_channels:]
    return LookupTable(bins, mode, keys, gx, gy, counts)
