"""Per-pixel normal-from-intensity network, written directly in numpy.

Architecture: three [Linear -> BatchNorm -> ReLU -> Dropout] blocks plus a
linear 3-wide head. Inputs are the channel intensities concatenated with
a Fourier positional encoding of the normalized pixel coordinates. The
loss is plain MSE between the raw (pre-normalization) head output and the
unit target normal; outputs are normalized at evaluation time, which
avoids the unstable gradient of normalization near zero norm.

Everything trains in float64; checkpoints store float32.
"""

from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import FormatError

BN_EPS = 1e-5
BN_MOMENTUM = 0.9
DEGENERATE_NORM = 1e-8


class ChannelMode(enum.Enum):
    RGB_ONLY = "rgb"
    RGB_NIR = "rgbnir"

    @property
    def n_channels(self) -> int:
        return 3 if self is ChannelMode.RGB_ONLY else 6


@dataclass(frozen=True)
class PositionalEncodingConfig:
    """Fourier features of normalized pixel coordinates (u, v) in [-1, 1]."""

    n_frequencies: int = 4
    include_raw: bool = True

    def __post_init__(self):
        if self.n_frequencies < 0:
            raise ValueError("n_frequencies must be >= 0")

    @property
    def length(self) -> int:
        return 2 * int(self.include_raw) + 4 * self.n_frequencies


def positional_encoding(u, v, config: PositionalEncodingConfig) -> np.ndarray:
    """Encode coordinates as [u, v, sin(2^k pi u), cos(2^k pi u), sin/cos of v, ...].

    Accepts scalars or equally shaped arrays; the feature axis comes last.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if np.any(np.abs(u) > 1 + 1e-12) or np.any(np.abs(v) > 1 + 1e-12):
        raise ValueError("coordinates must lie in [-1, 1]")
    parts = []
    if config.include_raw:
        parts.extend([u, v])
    for k in range(config.n_frequencies):
        w = (2.0 ** k) * np.pi
        parts.extend([np.sin(w * u), np.cos(w * u), np.sin(w * v), np.cos(w * v)])
    if not parts:
        return np.zeros(u.shape + (0,))
    return np.stack(np.broadcast_arrays(*parts), axis=-1)


def pixel_features(channels: np.ndarray, rows: np.ndarray, cols: np.ndarray,
                   mode: ChannelMode, encoding: PositionalEncodingConfig) -> np.ndarray:
    """Assemble (N, D) model inputs for the given pixels of a (6, H, W) stack."""
    _, H, W = channels.shape
    intensities = channels[:mode.n_channels, rows, cols].T
    u = 2.0 * cols / max(W - 1, 1) - 1.0
    v = 2.0 * rows / max(H - 1, 1) - 1.0
    return np.hstack([intensities, positional_encoding(u, v, encoding)])


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and sampling settings; every default is recorded here."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 4096
    epochs: int = 200
    seed: int = 0
    channel_mode: ChannelMode = ChannelMode.RGB_NIR
    background_sample_fraction: float = 0.25
    hidden_widths: tuple[int, int, int] = (128, 128, 128)
    dropout_rate: float = 0.1
    encoding: PositionalEncodingConfig = field(default_factory=PositionalEncodingConfig)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0 <= self.background_sample_fraction <= 1:
            raise ValueError("background_sample_fraction must be in [0, 1]")
        if len(self.hidden_widths) != 3:
            raise ValueError("exactly three hidden layers")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must be in [0, 1)")


@dataclass
class PsnnModel:
    """Weights plus batchnorm state for the three-block normal network."""

    layer_widths: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    bn_gamma: list[np.ndarray]
    bn_beta: list[np.ndarray]
    bn_running_mean: list[np.ndarray]
    bn_running_var: list[np.ndarray]
    dropout_rate: float
    channel_mode: ChannelMode
    encoding: PositionalEncodingConfig

    def __post_init__(self):
        if len(self.layer_widths) != 5:
            raise ValueError("exactly three hidden layers (five widths)")
        if self.layer_widths[-1] != 3:
            raise ValueError("output width must be 3")
        expected = self.channel_mode.n_channels + self.encoding.length
        if self.layer_widths[0] != expected:
            raise ValueError(f"input width {self.layer_widths[0]} != {expected}")
        for i, w in enumerate(self.weights):
            if w.shape != (self.layer_widths[i], self.layer_widths[i + 1]):
                raise ValueError("weight shapes must chain through layer_widths")
        for var in self.bn_running_var:
            if np.any(var <= 0):
                raise ValueError("batchnorm running variance must stay positive")

    @property
    def input_width(self) -> int:
        return self.layer_widths[0]


def psnn_init(config: TrainConfig, rng: np.random.Generator | None = None) -> PsnnModel:
    """He-initialized model matching the train config's input layout."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    widths = [config.channel_mode.n_channels + config.encoding.length,
              *config.hidden_widths, 3]
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), (fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    hidden = list(config.hidden_widths)
    return PsnnModel(
        layer_widths=widths, weights=weights, biases=biases,
        bn_gamma=[np.ones(w) for w in hidden],
        bn_beta=[np.zeros(w) for w in hidden],
        bn_running_mean=[np.zeros(w) for w in hidden],
        bn_running_var=[np.ones(w) for w in hidden],
        dropout_rate=config.dropout_rate,
        channel_mode=config.channel_mode,
        encoding=config.encoding)


def _forward(model: PsnnModel, x: np.ndarray, training: bool,
             dropout_masks: list[np.ndarray] | None, update_running: bool):
    """Raw head outputs plus the caches the backward pass needs."""
    caches = []
    h = x
    for i in range(3):
        a = h @ model.weights[i] + model.biases[i]
        if training:
            mu = a.mean(axis=0)
            var = a.var(axis=0)
            if update_running:
                model.bn_running_mean[i] = (BN_MOMENTUM * model.bn_running_mean[i]
                                            + (1 - BN_MOMENTUM) * mu)
                model.bn_running_var[i] = (BN_MOMENTUM * model.bn_running_var[i]
                                           + (1 - BN_MOMENTUM) * var)
        else:
            mu = model.bn_running_mean[i]
            var = model.bn_running_var[i]
        inv_std = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (a - mu) * inv_std
        bn = model.bn_gamma[i] * xhat + model.bn_beta[i]
        relu = np.maximum(bn, 0.0)
        if training and dropout_masks is not None and model.dropout_rate > 0:
            keep = 1.0 - model.dropout_rate
            out = relu * dropout_masks[i] / keep
        else:
            out = relu
        caches.append({"h_in": h, "a": a, "mu": mu, "inv_std": inv_std,
                       "xhat": xhat, "bn": bn, "out": out})
        h = out
    raw = h @ model.weights[3] + model.biases[3]
    return raw, caches


def _normalize_outputs(raw: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(raw, axis=-1, keepdims=True)
    bad = norm[..., 0] < DEGENERATE_NORM
    out = raw / np.where(norm < DEGENERATE_NORM, 1.0, norm)
    out[bad] = (0.0, 0.0, 1.0)
    return out


def psnn_forward(model: PsnnModel, intensities, encoding, inference_mode: bool = True):
    """Unit normal for one pixel's intensities plus encoding vector."""
    intensities = np.atleast_1d(np.asarray(intensities, dtype=np.float64))
    encoding = np.atleast_1d(np.asarray(encoding, dtype=np.float64))
    if len(intensities) != model.channel_mode.n_channels:
        raise ValueError(f"expected {model.channel_mode.n_channels} intensities, "
                         f"got {len(intensities)}")
    x = np.concatenate([intensities, encoding])[None, :]
    if x.shape[1] != model.input_width:
        raise ValueError(f"expected input width {model.input_width}, got {x.shape[1]}")
    raw, _ = _forward(model, x, training=not inference_mode,
                      dropout_masks=None, update_running=False)
    return _normalize_outputs(raw)[0]


def psnn_forward_batch(model: PsnnModel, inputs: np.ndarray) -> np.ndarray:
    """Inference-mode raw outputs for an (N, D) batch, normalized."""
    if inputs.shape[1] != model.input_width:
        raise ValueError(f"expected input width {model.input_width}, got {inputs.shape[1]}")
    raw, _ = _forward(model, inputs, training=False,
                      dropout_masks=None, update_running=False)
    return _normalize_outputs(raw)


def draw_dropout_masks(model: PsnnModel, batch_size: int,
                       rng: np.random.Generator) -> list[np.ndarray]:
    keep = 1.0 - model.dropout_rate
    return [(rng.random((batch_size, w)) < keep).astype(np.float64)
            for w in model.layer_widths[1:4]]


def psnn_loss_grad(model: PsnnModel, batch, config: TrainConfig,
                   dropout_masks: list[np.ndarray] | None = None,
                   update_running: bool = False):
    """MSE loss and backprop gradients for one training batch.

    `dropout_masks` freezes the stochastic part, which finite-difference
    checks and the optimizer both rely on; pass None for mask-free
    (deterministic) gradients.
    """
    inputs, targets = batch
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if len(inputs) == 0:
        raise ValueError("empty batch")
    raw, caches = _forward(model, inputs, training=True,
                           dropout_masks=dropout_masks, update_running=update_running)
    diff = raw - targets
    loss = float(np.mean(diff * diff))

    n_elems = diff.size
    grads = {"weights": [None] * 4, "biases": [None] * 4,
             "bn_gamma": [None] * 3, "bn_beta": [None] * 3}
    d_out = 2.0 * diff / n_elems

    grads["weights"][3] = caches[2]["out"].T @ d_out
    grads["biases"][3] = d_out.sum(axis=0)
    d_h = d_out @ model.weights[3].T

    for i in reversed(range(3)):
        cache = caches[i]
        if dropout_masks is not None and model.dropout_rate > 0:
            d_h = d_h * dropout_masks[i] / (1.0 - model.dropout_rate)
        d_bn = d_h * (cache["bn"] > 0)
        grads["bn_gamma"][i] = (d_bn * cache["xhat"]).sum(axis=0)
        grads["bn_beta"][i] = d_bn.sum(axis=0)
        # Batchnorm backward with batch statistics (biased variance).
        n = d_bn.shape[0]
        d_xhat = d_bn * model.bn_gamma[i]
        centered = cache["a"] - cache["mu"]
        inv_std = cache["inv_std"]
        d_var = (d_xhat * centered).sum(axis=0) * (-0.5) * inv_std ** 3
        d_mu = (-inv_std) * d_xhat.sum(axis=0) + d_var * (-2.0 / n) * centered.sum(axis=0)
        d_a = d_xhat * inv_std + d_var * 2.0 * centered / n + d_mu / n
        # cache["h_in"] is the block's actual input (already post-dropout
        # for i > 0), so it multiplies d_a directly.
        grads["weights"][i] = cache["h_in"].T @ d_a
        grads["biases"][i] = d_a.sum(axis=0)
        d_h = d_a @ model.weights[i].T
    return loss, grads


def _parameter_tensors(model: PsnnModel):
    """(group, index, array) triples in declaration order."""
    out = []
    for i in range(4):
        out.append(("weights", i, model.weights[i]))
    for i in range(4):
        out.append(("biases", i, model.biases[i]))
    for i in range(3):
        out.append(("bn_gamma", i, model.bn_gamma[i]))
    for i in range(3):
        out.append(("bn_beta", i, model.bn_beta[i]))
    return out


class AdamState:
    """First/second moment buffers for every trainable tensor."""

    def __init__(self, model: PsnnModel):
        self.m = {(g, i): np.zeros_like(a) for g, i, a in _parameter_tensors(model)}
        self.v = {(g, i): np.zeros_like(a) for g, i, a in _parameter_tensors(model)}
        self.t = 0

    def step(self, model: PsnnModel, grads: dict, config: TrainConfig) -> None:
        self.t += 1
        b1, b2 = config.beta1, config.beta2
        scale = config.learning_rate * np.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        for group, i, tensor in _parameter_tensors(model):
            g = grads[group][i]
            key = (group, i)
            self.m[key] = b1 * self.m[key] + (1 - b1) * g
            self.v[key] = b2 * self.v[key] + (1 - b2) * g * g
            tensor -= scale * self.m[key] / (np.sqrt(self.v[key]) + config.adam_eps)


def _normals_at(normal_map, sel: np.ndarray) -> np.ndarray:
    return np.stack([normal_map.nx[sel], normal_map.ny[sel], normal_map.nz[sel]], axis=-1)


def _training_pools(dataset, config: TrainConfig, rng: np.random.Generator):
    """Contact and background (features, targets) pools over train samples.

    The background pool is a seeded subsample capped at 4x the contact
    pool, which keeps memory flat while leaving plenty to mix 25% of each
    batch from.
    """
    feat_c, targ_c, feat_b, targ_b = [], [], [], []
    for sample, tag in zip(dataset.samples, dataset.split):
        if tag != "train":
            continue
        contact = sample.contact_mask.as_bool()
        background = sample.frame.mask & ~contact
        for sel, feats, targs in ((contact, feat_c, targ_c),
                                  (background, feat_b, targ_b)):
            rows, cols = np.nonzero(sel)
            if len(rows) == 0:
                continue
            feats.append(pixel_features(sample.frame.channels, rows, cols,
                                        config.channel_mode, config.encoding))
            targs.append(_normals_at(sample.gt_normals, sel))
    if not feat_c:
        raise ValueError("dataset has no valid training pixels")
    fc = np.vstack(feat_c)
    tc = np.vstack(targ_c)
    if feat_b:
        fb = np.vstack(feat_b)
        tb = np.vstack(targ_b)
        cap = min(len(fb), max(4 * len(fc), 50000))
        pick = rng.choice(len(fb), size=cap, replace=False)
        fb, tb = fb[pick], tb[pick]
    else:
        fb = np.zeros((0, fc.shape[1]))
        tb = np.zeros((0, 3))
    return fc, tc, fb, tb


def psnn_train(dataset, config: TrainConfig):
    """Train a fresh model on the dataset's train split.

    Batches cycle through shuffled contact pixels with a background
    fraction mixed in; Adam updates and batchnorm running statistics are
    applied per batch. Deterministic for a fixed seed. Returns the model
    and the per-epoch mean batch loss.
    """
    rng = np.random.default_rng(config.seed)
    model = psnn_init(config, rng)
    feat_c, targ_c, feat_b, targ_b = _training_pools(dataset, config, rng)
    bsf = config.background_sample_fraction if len(feat_b) else 0.0
    contact_per_batch = max(1, config.batch_size - round(config.batch_size * bsf))
    optimizer = AdamState(model)
    history = []
    for _ in range(config.epochs):
        order = rng.permutation(len(feat_c))
        losses = []
        for start in range(0, len(order), contact_per_batch):
            chunk = order[start:start + contact_per_batch]
            if bsf > 0:
                n_bg = round(len(chunk) * bsf / (1 - bsf))
                bg = rng.integers(0, len(feat_b), n_bg)
                x = np.vstack([feat_c[chunk], feat_b[bg]])
                y = np.vstack([targ_c[chunk], targ_b[bg]])
            else:
                x, y = feat_c[chunk], targ_c[chunk]
            masks = draw_dropout_masks(model, len(x), rng)
            loss, grads = psnn_loss_grad(model, (x, y), config,
                                         dropout_masks=masks, update_running=True)
            optimizer.step(model, grads, config)
            losses.append(loss)
        history.append(float(np.mean(losses)))
    return model, history


_CHECKPOINT_MAGIC = b"PSNN1"
_CHECKPOINT_VERSION = 1


def _encoding_dict(encoding: PositionalEncodingConfig) -> dict:
    return {"n_frequencies": encoding.n_frequencies,
            "include_raw": encoding.include_raw}


def train_config_to_dict(config: TrainConfig) -> dict:
    return {
        "learning_rate": config.learning_rate,
        "beta1": config.beta1,
        "beta2": config.beta2,
        "adam_eps": config.adam_eps,
        "batch_size": config.batch_size,
        "epochs": config.epochs,
        "seed": config.seed,
        "channel_mode": config.channel_mode.value,
        "background_sample_fraction": config.background_sample_fraction,
        "hidden_widths": list(config.hidden_widths),
        "dropout_rate": config.dropout_rate,
        "encoding": _encoding_dict(config.encoding),
    }


def train_config_from_dict(data: dict) -> TrainConfig:
    data = dict(data)
    enc = data.pop("encoding", {})
    mode = data.pop("channel_mode", ChannelMode.RGB_NIR.value)
    widths = data.pop("hidden_widths", [128, 128, 128])
    return TrainConfig(channel_mode=ChannelMode(mode),
                       hidden_widths=tuple(widths),
                       encoding=PositionalEncodingConfig(**enc), **data)


def save_model(path, model: PsnnModel, train_config: TrainConfig | None = None) -> None:
    """Write the binary checkpoint plus its JSON sidecar (path + \".json\")."""
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(struct.pack("<HI", _CHECKPOINT_VERSION, len(model.layer_widths)))
        fh.write(struct.pack(f"<{len(model.layer_widths)}I", *model.layer_widths))
        for i in range(4):
            fh.write(np.ascontiguousarray(model.weights[i], dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(model.biases[i], dtype="<f4").tobytes())
        for i in range(3):
            for tensor in (model.bn_gamma[i], model.bn_beta[i],
                           model.bn_running_mean[i], model.bn_running_var[i]):
                fh.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())
    sidecar = {
        "channel_mode": model.channel_mode.value,
        "dropout_rate": model.dropout_rate,
        "encoding": _encoding_dict(model.encoding),
        "train_config": None if train_config is None else train_config_to_dict(train_config),
    }
    with open(str(path) + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_exact(fh, n: int, path) -> bytes:
    blob = fh.read(n)
    if len(blob) != n:
        raise FormatError(f"{path}: truncated checkpoint")
    return blob


def load_model(path) -> PsnnModel:
    """Read a checkpoint written by save_model; raises FormatError on damage."""
    try:
        with open(str(path) + ".json", "r", encoding="utf-8") as fh:
            sidecar = json.load(fh)
    except FileNotFoundError:
        raise FormatError(f"{path}: missing JSON sidecar")
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: bad JSON sidecar: {exc}")
    with open(path, "rb") as fh:
        if _read_exact(fh, len(_CHECKPOINT_MAGIC), path) != _CHECKPOINT_MAGIC:
            raise FormatError(f"{path}: bad checkpoint magic")
        version, n_widths = struct.unpack("<HI", _read_exact(fh, 6, path))
        if version != _CHECKPOINT_VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {version}")
        if n_widths != 5:
            raise FormatError(f"{path}: expected five layer widths, got {n_widths}")
        widths = list(struct.unpack("<5I", _read_exact(fh, 20, path)))

        def tensor(shape):
            n = int(np.prod(shape))
            raw = np.frombuffer(_read_exact(fh, 4 * n, path), dtype="<f4")
            return raw.astype(np.float64).reshape(shape)

        weights, biases = [], []
        for i in range(4):
            weights.append(tensor((widths[i], widths[i + 1])))
            biases.append(tensor((widths[i + 1],)))
        gamma, beta, r_mean, r_var = [], [], [], []
        for i in range(3):
            gamma.append(tensor((widths[i + 1],)))
            beta.append(tensor((widths[i + 1],)))
            r_mean.append(tensor((widths[i + 1],)))
            r_var.append(tensor((widths[i + 1],)))
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after checkpoint payload")
    try:
        mode = ChannelMode(sidecar["channel_mode"])
        encoding = PositionalEncodingConfig(**sidecar["encoding"])
        dropout = float(sidecar["dropout_rate"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed sidecar: {exc}")
    return PsnnModel(layer_widths=widths, weights=weights, biases=biases,
                     bn_gamma=gamma, bn_beta=beta, bn_running_mean=r_mean,
                     bn_running_var=r_var, dropout_rate=dropout,
                     channel_mode=mode, encoding=encoding)
