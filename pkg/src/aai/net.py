"""Speaker-conditioned BLSTM regressor with exact-gradient training.

Architecture: a tanh dense projection of the per-frame acoustic input,
a tanh dense projection of the speaker embedding broadcast over time,
their concatenation feeding a stack of bidirectional LSTM layers, and a
linear output head. Loss is mean-squared error over real (unmasked)
frames only. Backpropagation through time, Adam with decoupled weight
decay, a halve-on-plateau learning-rate schedule, and early stopping are
implemented here directly in 64-bit numpy.

Batches are zero-padded to the longest utterance; the backward direction
of every LSTM layer runs on sequences reversed within their true length,
so predictions on real frames never depend on the amount of padding.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointMismatchError, ConfigError, FormatError
from .featio import stable_seed

CHECKPOINT_MAGIC = b"AAIM"
CHECKPOINT_VERSION = 1

# Gate order inside every 4H-wide LSTM tensor: input, forget, cell, output.
GATE_ORDER = ("i", "f", "g", "o")


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    embedding_dim: int
    acoustic_units: int = 200
    speaker_units: int = 32
    hidden_units: int = 256
    num_layers: int = 3
    output_dim: int = 24
    source_tag: str = ""

    def __post_init__(self):
        for name in ("input_dim", "embedding_dim", "acoustic_units", "speaker_units",
                     "hidden_units", "num_layers", "output_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def layer_input_dim(self, layer: int) -> int:
        if layer == 0:
            return self.acoustic_units + self.speaker_units
        return 2 * self.hidden_units


def param_keys(config: ModelConfig) -> list[str]:
    """Canonical parameter order; checkpoints serialize tensors in this order."""
    keys = ["acoustic_dense.W", "acoustic_dense.b", "speaker_dense.W", "speaker_dense.b"]
    for layer in range(config.num_layers):
        keys += [f"blstm{layer}.Wx", f"blstm{layer}.Wh", f"blstm{layer}.b"]
    keys += ["head.W", "head.b"]
    return keys


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    h = config.hidden_units
    shapes: dict[str, tuple[int, ...]] = {
        "acoustic_dense.W": (config.input_dim, config.acoustic_units),
        "acoustic_dense.b": (config.acoustic_units,),
        "speaker_dense.W": (config.embedding_dim, config.speaker_units),
        "speaker_dense.b": (config.speaker_units,),
        "head.W": (2 * h, config.output_dim),
        "head.b": (config.output_dim,),
    }
    for layer in range(config.num_layers):
        d_in = config.layer_input_dim(layer)
        shapes[f"blstm{layer}.Wx"] = (2, d_in, 4 * h)
        shapes[f"blstm{layer}.Wh"] = (2, h, 4 * h)
        shapes[f"blstm{layer}.b"] = (2, 4 * h)
    return shapes


class ModelParams:
    """All trainable tensors plus shape metadata.

    Weight tensors for the bidirectional layers carry a leading axis of
    size 2 (forward, backward direction).
    """

    def __init__(self, config: ModelConfig, tensors: dict[str, np.ndarray], scope: str = ""):
        shapes = param_shapes(config)
        if set(tensors) != set(shapes):
            raise ValueError("tensor keys do not match the configuration")
        for key, shape in shapes.items():
            if tensors[key].shape != shape:
                raise ValueError(f"{key}: expected shape {shape}, got {tensors[key].shape}")
        self.config = config
        self.tensors = tensors
        self.scope = scope

    @classmethod
    def init(cls, config: ModelConfig, seed: int = 0) -> "ModelParams":
        """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases
        except the LSTM forget gate bias, which starts at 1."""
        rng = np.random.default_rng(stable_seed(seed, "model-init"))
        h = config.hidden_units
        tensors: dict[str, np.ndarray] = {}

        def uniform(shape, fan_in):
            bound = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-bound, bound, size=shape)

        tensors["acoustic_dense.W"] = uniform((config.input_dim, config.acoustic_units), config.input_dim)
        tensors["acoustic_dense.b"] = np.zeros(config.acoustic_units)
        tensors["speaker_dense.W"] = uniform((config.embedding_dim, config.speaker_units), config.embedding_dim)
        tensors["speaker_dense.b"] = np.zeros(config.speaker_units)
        for layer in range(config.num_layers):
            d_in = config.layer_input_dim(layer)
            tensors[f"blstm{layer}.Wx"] = uniform((2, d_in, 4 * h), d_in)
            tensors[f"blstm{layer}.Wh"] = uniform((2, h, 4 * h), h)
            b = np.zeros((2, 4 * h))
            b[:, h:2 * h] = 1.0
            tensors[f"blstm{layer}.b"] = b
        tensors["head.W"] = uniform((2 * h, config.output_dim), 2 * h)
        tensors["head.b"] = np.zeros(config.output_dim)
        return cls(config, tensors)

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()}, self.scope)

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.tensors.items()}


@dataclass
class Batch:
    """Zero-padded batch: frames at or beyond each utterance's length are zero."""

    inputs: np.ndarray      # B x T x D_in
    embeddings: np.ndarray  # B x E
    targets: np.ndarray     # B x T x D_out
    lengths: np.ndarray     # B ints
    utterance_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        self.lengths = np.asarray(self.lengths, dtype=np.int64)
        b, t_max = self.inputs.shape[0], self.inputs.shape[1]
        if self.targets.shape[:2] != (b, t_max) or self.embeddings.shape[0] != b \
                or self.lengths.shape != (b,):
            raise ValueError("batch member shapes are inconsistent")
        if np.any(self.lengths < 1) or np.any(self.lengths > t_max):
            raise ValueError("lengths must lie in [1, T_max]")
        mask = self.mask()
        self.inputs = self.inputs * mask[:, :, None]
        self.targets = self.targets * mask[:, :, None]

    def mask(self) -> np.ndarray:
        t_max = self.inputs.shape[1]
        return (np.arange(t_max)[None, :] < self.lengths[:, None]).astype(np.float64)

    @property
    def size(self) -> int:
        return self.inputs.shape[0]


def make_batch(samples) -> Batch:
    """Assemble (inputs, embedding, targets, utterance_id) tuples into a Batch."""
    lengths = np.array([s[0].shape[0] for s in samples], dtype=np.int64)
    t_max = int(lengths.max())
    d_in = samples[0][0].shape[1]
    d_out = samples[0][2].shape[1]
    b = len(samples)
    inputs = np.zeros((b, t_max, d_in))
    targets = np.zeros((b, t_max, d_out))
    embeddings = np.stack([np.asarray(s[1], dtype=np.float64) for s in samples])
    ids = []
    for i, (x, _, y, utt_id) in enumerate(samples):
        inputs[i, :x.shape[0]] = x
        targets[i, :y.shape[0]] = y
        ids.append(utt_id)
    return Batch(inputs, embeddings, targets, lengths, ids)


def make_batches(samples, batch_size: int, seed: int = 0) -> list[Batch]:
    """Seeded shuffle, then sort by length inside buckets of four batches
    to bound padding waste, then cut into batches."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if not samples:
        return []
    rng = np.random.default_rng(stable_seed(seed, "batching"))
    order = list(rng.permutation(len(samples)))
    bucket_span = 4 * batch_size
    batches = []
    for start in range(0, len(order), bucket_span):
        bucket = order[start:start + bucket_span]
        bucket.sort(key=lambda i: (-samples[i][0].shape[0], samples[i][3]))
        for k in range(0, len(bucket), batch_size):
            batches.append(make_batch([samples[i] for i in bucket[k:k + batch_size]]))
    return batches


# ---------------------------------------------------------------------------
# forward / backward

def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _reverse_by_length(x: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Reverse each sequence of a B x T x D array within its true length;
    padding stays in place.

    The map is a self-inverse permutation, so it is its own gradient.
    """
    t_max = x.shape[1]
    t = np.arange(t_max)[None, :]
    idx = np.where(t < lengths[:, None], lengths[:, None] - 1 - t, t)  # B x T
    return np.take_along_axis(x, idx[:, :, None], axis=1)


def _lstm_layer_forward(x2: np.ndarray, lengths: np.ndarray, wx, wh, b, mask):
    """Run both directions of one layer as a direction-batched recurrence.

    x2 is (2, B, T, D_in) with x2[1] already reversed by length. Returns
    hidden states (2, B, T, H) and the cache needed for backprop. Hidden
    and cell states are zeroed beyond each utterance's length so padded
    frames contribute nothing anywhere downstream.
    """
    two, bsz, t_max, _ = x2.shape
    h_units = wh.shape[1]
    gates_in = np.matmul(x2.reshape(two, bsz * t_max, -1), wx).reshape(two, bsz, t_max, 4 * h_units)
    gates_in += b[:, None, None, :]

    gates = np.empty((two, bsz, t_max, 4 * h_units))
    tanh_c = np.empty((two, bsz, t_max, h_units))
    cells = np.empty((two, bsz, t_max, h_units))
    hidden = np.empty((two, bsz, t_max, h_units))
    h_prev = np.zeros((two, bsz, h_units))
    c_prev = np.zeros((two, bsz, h_units))
    for t in range(t_max):
        a = gates_in[:, :, t, :] + np.matmul(h_prev, wh)
        i = _sigmoid(a[..., :h_units])
        f = _sigmoid(a[..., h_units:2 * h_units])
        g = np.tanh(a[..., 2 * h_units:3 * h_units])
        o = _sigmoid(a[..., 3 * h_units:])
        c_raw = f * c_prev + i * g
        tc = np.tanh(c_raw)
        m = mask[:, t][None, :, None]
        h_prev = o * tc * m
        c_prev = c_raw * m
        gates[:, :, t, :] = np.concatenate([i, f, g, o], axis=-1)
        tanh_c[:, :, t, :] = tc
        cells[:, :, t, :] = c_prev
        hidden[:, :, t, :] = h_prev
    cache = {"x2": x2, "gates": gates, "tanh_c": tanh_c, "cells": cells, "hidden": hidden}
    return hidden, cache


def _lstm_layer_backward(d_hidden: np.ndarray, cache, wx, wh, mask):
    """Backprop one direction-batched layer; returns (dx2, dWx, dWh, db)."""
    x2 = cache["x2"]
    gates = cache["gates"]
    tanh_c = cache["tanh_c"]
    cells = cache["cells"]
    hidden = cache["hidden"]
    two, bsz, t_max, h4 = gates.shape
    h_units = h4 // 4

    d_gates_in = np.empty_like(gates)
    d_wh = np.zeros_like(wh)
    dh_carry = np.zeros((two, bsz, h_units))
    dc_carry = np.zeros((two, bsz, h_units))
    for t in range(t_max - 1, -1, -1):
        m = mask[:, t][None, :, None]
        i = gates[:, :, t, :h_units]
        f = gates[:, :, t, h_units:2 * h_units]
        g = gates[:, :, t, 2 * h_units:3 * h_units]
        o = gates[:, :, t, 3 * h_units:]
        tc = tanh_c[:, :, t, :]
        c_prev = cells[:, :, t - 1, :] if t > 0 else np.zeros((two, bsz, h_units))
        h_prev = hidden[:, :, t - 1, :] if t > 0 else np.zeros((two, bsz, h_units))

        dh = (d_hidden[:, :, t, :] + dh_carry) * m
        do = dh * tc
        d_craw = dh * o * (1.0 - tc * tc) + dc_carry * m
        di = d_craw * g
        df = d_craw * c_prev
        dg = d_craw * i
        dc_carry = d_craw * f
        da = np.concatenate([
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            dg * (1.0 - g * g),
            do * o * (1.0 - o),
        ], axis=-1)
        d_gates_in[:, :, t, :] = da
        dh_carry = np.matmul(da, wh.transpose(0, 2, 1))
        d_wh += np.matmul(h_prev.transpose(0, 2, 1), da)

    flat = d_gates_in.reshape(two, bsz * t_max, h4)
    d_wx = np.matmul(x2.reshape(two, bsz * t_max, -1).transpose(0, 2, 1), flat)
    d_b = flat.sum(axis=1)
    dx2 = np.matmul(flat, wx.transpose(0, 2, 1)).reshape(x2.shape)
    return dx2, d_wx, d_wh, d_b


def _forward_cache(params: ModelParams, batch: Batch):
    cfg = params.config
    ten = params.tensors
    if batch.inputs.shape[2] != cfg.input_dim:
        raise ValueError(f"input dim {batch.inputs.shape[2]} != model input_dim {cfg.input_dim}")
    if batch.embeddings.shape[1] != cfg.embedding_dim:
        raise ValueError(f"embedding dim {batch.embeddings.shape[1]} != model embedding_dim {cfg.embedding_dim}")
    if batch.targets.shape[2] != cfg.output_dim:
        raise ValueError(f"target dim {batch.targets.shape[2]} != model output_dim {cfg.output_dim}")
    mask = batch.mask()
    lengths = batch.lengths

    h_ac = np.tanh(batch.inputs @ ten["acoustic_dense.W"] + ten["acoustic_dense.b"])
    h_sp = np.tanh(batch.embeddings @ ten["speaker_dense.W"] + ten["speaker_dense.b"])
    t_max = batch.inputs.shape[1]
    z = np.concatenate([h_ac, np.repeat(h_sp[:, None, :], t_max, axis=1)], axis=2)
    z *= mask[:, :, None]

    layer_caches = []
    layer_inputs = []
    for layer in range(cfg.num_layers):
        layer_inputs.append(z)
        x2 = np.stack([z, _reverse_by_length(z, lengths)])
        hidden, cache = _lstm_layer_forward(
            x2, lengths, ten[f"blstm{layer}.Wx"], ten[f"blstm{layer}.Wh"],
            ten[f"blstm{layer}.b"], mask)
        layer_caches.append(cache)
        z = np.concatenate([hidden[0], _reverse_by_length(hidden[1], lengths)], axis=2)
    preds = (z @ ten["head.W"] + ten["head.b"]) * mask[:, :, None]
    cache = {
        "mask": mask, "h_ac": h_ac, "h_sp": h_sp,
        "layer_caches": layer_caches, "layer_inputs": layer_inputs, "blstm_out": z,
    }
    return preds, cache


def forward(params: ModelParams, batch: Batch) -> np.ndarray:
    """Predictions of shape B x T_max x output_dim, zero beyond each length."""
    preds, _ = _forward_cache(params, batch)
    return preds


def masked_mse(pred: np.ndarray, targets: np.ndarray, lengths: np.ndarray) -> float:
    """Mean squared error over real frame-dimension pairs only."""
    lengths = np.asarray(lengths, dtype=np.int64)
    if pred.shape != targets.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {targets.shape}")
    total = int(lengths.sum())
    if total == 0:
        raise ValueError("all lengths are zero")
    t_max = pred.shape[1]
    mask = (np.arange(t_max)[None, :] < lengths[:, None]).astype(np.float64)
    sq = (pred - targets) ** 2 * mask[:, :, None]
    return float(sq.sum() / (total * pred.shape[2]))


def backward(params: ModelParams, batch: Batch):
    """Loss and exact gradients of masked_mse w.r.t. every parameter."""
    cfg = params.config
    ten = params.tensors
    preds, cache = _forward_cache(params, batch)
    mask = cache["mask"]
    lengths = batch.lengths
    denom = float(lengths.sum()) * cfg.output_dim
    resid = (preds - batch.targets) * mask[:, :, None]
    loss = float((resid ** 2).sum() / denom)

    grads = params.zeros_like()
    d_pred = 2.0 * resid / denom

    z = cache["blstm_out"]
    bsz, t_max, _ = z.shape
    grads["head.W"] = z.reshape(bsz * t_max, -1).T @ d_pred.reshape(bsz * t_max, -1)
    grads["head.b"] = d_pred.sum(axis=(0, 1))
    dz = d_pred @ ten["head.W"].T

    h_units = cfg.hidden_units
    for layer in range(cfg.num_layers - 1, -1, -1):
        d_hidden = np.stack([dz[..., :h_units], _reverse_by_length(dz[..., h_units:], lengths)])
        dx2, d_wx, d_wh, d_b = _lstm_layer_backward(
            d_hidden, cache["layer_caches"][layer],
            ten[f"blstm{layer}.Wx"], ten[f"blstm{layer}.Wh"], mask)
        grads[f"blstm{layer}.Wx"] = d_wx
        grads[f"blstm{layer}.Wh"] = d_wh
        grads[f"blstm{layer}.b"] = d_b
        dz = dx2[0] + _reverse_by_length(dx2[1], lengths)

    dz *= mask[:, :, None]
    a_units = cfg.acoustic_units
    d_hac = dz[..., :a_units] * (1.0 - cache["h_ac"] ** 2)
    grads["acoustic_dense.W"] = (
        batch.inputs.reshape(bsz * t_max, -1).T @ d_hac.reshape(bsz * t_max, -1))
    grads["acoustic_dense.b"] = d_hac.sum(axis=(0, 1))
    d_hsp = dz[..., a_units:].sum(axis=1) * (1.0 - cache["h_sp"] ** 2)
    grads["speaker_dense.W"] = batch.embeddings.T @ d_hsp
    grads["speaker_dense.b"] = d_hsp.sum(axis=0)
    return loss, grads


# ---------------------------------------------------------------------------
# optimization

@dataclass
class OptimizerState:
    """Adam accumulators with decoupled weight decay."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    lr: float = 1e-4
    weight_decay: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def create(cls, params: ModelParams, lr: float = 1e-4, weight_decay: float = 1e-6) -> "OptimizerState":
        return cls(m=params.zeros_like(), v=params.zeros_like(), lr=lr, weight_decay=weight_decay)


def adam_step(params: ModelParams, grads: dict[str, np.ndarray], state: OptimizerState) -> None:
    """One in-place update: decay parameters, then bias-corrected Adam."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for key, p in params.tensors.items():
        g = grads[key]
        if state.weight_decay:
            p -= state.lr * state.weight_decay * p
        state.m[key] = state.beta1 * state.m[key] + (1.0 - state.beta1) * g
        state.v[key] = state.beta2 * state.v[key] + (1.0 - state.beta2) * g * g
        m_hat = state.m[key] / bc1
        v_hat = state.v[key] / bc2
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass
class TrainControl:
    max_epochs: int = 50
    batch_size: int = 5
    plateau_factor: float = 0.5
    plateau_patience: int = 3
    early_stop_patience: int = 7
    min_lr: float = 1e-6
    seed: int = 0
    lr: float = 1e-4
    weight_decay: float = 1e-6

    def __post_init__(self):
        if self.plateau_patience < 1 or self.early_stop_patience < 1:
            raise ValueError("patience values must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


def evaluate_loss(params: ModelParams, batches: list[Batch]) -> float:
    """Exact masked MSE pooled over a list of batches."""
    sse = 0.0
    count = 0
    for batch in batches:
        preds = forward(params, batch)
        resid = (preds - batch.targets) * batch.mask()[:, :, None]
        sse += float((resid ** 2).sum())
        count += int(batch.lengths.sum()) * params.config.output_dim
    if count == 0:
        raise ValueError("no frames to evaluate")
    return sse / count


def fit(params: ModelParams, train_batches: list[Batch], val_batches: list[Batch],
        ctrl: TrainControl):
    """Train until max_epochs, plateau-halving the learning rate and stopping
    early on stagnant validation loss.

    The starting parameters count as the initial best, so a warm start is
    never returned worse than it arrived. Returns (best params, history).
    """
    if not train_batches or not val_batches:
        raise ConfigError("training and validation sets must be non-empty")
    opt = OptimizerState.create(params, lr=ctrl.lr, weight_decay=ctrl.weight_decay)
    rng = np.random.default_rng(stable_seed(ctrl.seed, "fit"))
    best_val = evaluate_loss(params, val_batches)
    best_params = params.copy()
    plateau_wait = 0
    stop_wait = 0
    history: list[EpochRecord] = []
    for epoch in range(ctrl.max_epochs):
        lr_this_epoch = opt.lr
        order = rng.permutation(len(train_batches))
        sse = 0.0
        count = 0
        for idx in order:
            batch = train_batches[idx]
            loss, grads = backward(params, batch)
            adam_step(params, grads, opt)
            n = int(batch.lengths.sum()) * params.config.output_dim
            sse += loss * n
            count += n
        val_loss = evaluate_loss(params, val_batches)
        history.append(EpochRecord(epoch, sse / count, val_loss, lr_this_epoch))
        if val_loss < best_val:
            best_val = val_loss
            best_params = params.copy()
            plateau_wait = 0
            stop_wait = 0
        else:
            plateau_wait += 1
            stop_wait += 1
            if plateau_wait >= ctrl.plateau_patience:
                opt.lr = max(opt.lr * ctrl.plateau_factor, ctrl.min_lr)
                plateau_wait = 0
            if stop_wait >= ctrl.early_stop_patience:
                break
    return best_params, history


# ---------------------------------------------------------------------------
# checkpoints

def save_checkpoint(params: ModelParams, path) -> None:
    """Serialize config metadata and tensors (f64 little-endian, fixed order)."""
    cfg = params.config
    tag = cfg.source_tag.encode("utf-8")
    scope = params.scope.encode("utf-8")
    header = CHECKPOINT_MAGIC + struct.pack(
        "<IIIIIIIIHH", CHECKPOINT_VERSION, cfg.input_dim, cfg.embedding_dim,
        cfg.acoustic_units, cfg.speaker_units, cfg.hidden_units, cfg.num_layers,
        cfg.output_dim, len(tag), len(scope),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(tag)
        fh.write(scope)
        for key in param_keys(cfg):
            fh.write(np.ascontiguousarray(params.tensors[key], dtype="<f8").tobytes())


def load_checkpoint(path) -> ModelParams:
    blob = Path(path).read_bytes()
    if len(blob) < 4 or blob[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic at offset 0 (expected AAIM)")
    fixed = struct.calcsize("<IIIIIIIIHH")
    if len(blob) < 4 + fixed:
        raise FormatError(f"{path}: truncated header")
    (version, input_dim, embedding_dim, acoustic_units, speaker_units,
     hidden_units, num_layers, output_dim, tag_len, scope_len) = struct.unpack_from("<IIIIIIIIHH", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    offset = 4 + fixed
    tag = blob[offset:offset + tag_len].decode("utf-8")
    offset += tag_len
    scope = blob[offset:offset + scope_len].decode("utf-8")
    offset += scope_len
    cfg = ModelConfig(input_dim, embedding_dim, acoustic_units, speaker_units,
                      hidden_units, num_layers, output_dim, tag)
    tensors = {}
    for key, shape in ((k, param_shapes(cfg)[k]) for k in param_keys(cfg)):
        n = int(np.prod(shape))
        if len(blob) < offset + 8 * n:
            raise FormatError(f"{path}: truncated tensor {key} at offset {offset}")
        tensors[key] = np.frombuffer(blob, dtype="<f8", count=n, offset=offset).reshape(shape).copy()
        offset += 8 * n
    if offset != len(blob):
        raise FormatError(f"{path}: {len(blob) - offset} trailing bytes")
    return ModelParams(cfg, tensors, scope)


def load_checkpoint_compatible(path, input_dim: int, embedding_dim: int,
                               source_tag: str | None = None) -> ModelParams:
    """Load for fine-tuning, insisting the corpus dimensions (and feature tag,
    when given) match what the checkpoint was trained on."""
    params = load_checkpoint(path)
    cfg = params.config
    if cfg.input_dim != input_dim:
        raise CheckpointMismatchError(
            f"{path}: checkpoint input_dim {cfg.input_dim} != corpus input_dim {input_dim}")
    if cfg.embedding_dim != embedding_dim:
        raise CheckpointMismatchError(
            f"{path}: checkpoint embedding_dim {cfg.embedding_dim} != corpus embedding_dim {embedding_dim}")
    if source_tag is not None and cfg.source_tag != source_tag:
        raise CheckpointMismatchError(
            f"{path}: checkpoint feature tag {cfg.source_tag!r} != requested {source_tag!r}")
    return params
