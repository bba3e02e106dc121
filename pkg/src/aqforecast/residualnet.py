"""Residual corrector: multi-scale Conv1D -> BiLSTM -> gated attention -> dense.

Everything is plain numpy with hand-derived backpropagation. The attention
gate consumes the local volatility of the window (absolute first differences,
min-max normalized per window), so turbulent stretches can be weighted
differently from calm ones. Training is mini-batch Adam on MSE with early
stopping, fully deterministic under the config seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import timedelta

import numpy as np

from .series import TimeSeries

__all__ = [
    "NetError",
    "NetConfig",
    "NetParams",
    "WindowDataset",
    "TrainReport",
    "make_windows",
    "volatility",
    "init_params",
    "forward",
    "loss_and_gradients",
    "train",
    "predict_series",
    "save_params",
    "load_params",
    "write_train_report",
]

CHECKPOINT_VERSION = 1


class NetError(ValueError):
    pass


@dataclass(frozen=True)
class NetConfig:
    """Architecture and training settings.

    ``kernel_sizes`` and ``filters_per_branch`` run parallel: one Conv1D
    branch per entry. ``attention_dim`` is the width of the tanh gate layer
    (the reference architecture leaves it open).
    """

    kernel_sizes: tuple = (3, 5, 7)
    filters_per_branch: tuple = (32, 64, 128)
    bilstm_units: int = 64
    bilstm_layers: int = 1
    window: int = 24
    attention_dim: int = 32
    learning_rate: float = 0.001
    batch_size: int = 32
    max_epochs: int = 278
    patience: int = 20
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kernel_sizes", tuple(self.kernel_sizes))
        object.__setattr__(self, "filters_per_branch",
                           tuple(self.filters_per_branch))
        if len(self.kernel_sizes) != len(self.filters_per_branch):
            raise NetError("kernel_sizes and filters_per_branch must have "
                           "the same length")
        if not self.kernel_sizes:
            raise NetError("need at least one convolution branch")
        for k in self.kernel_sizes:
            if k < 1 or k % 2 == 0:
                raise NetError(f"kernel sizes must be odd and >= 1, got {k}")
            if k > self.window:
                raise NetError(f"kernel size {k} exceeds window {self.window}")
        for f in self.filters_per_branch:
            if f < 1:
                raise NetError("filter counts must be >= 1")
        if self.bilstm_units < 1 or self.bilstm_layers < 1:
            raise NetError("bilstm_units and bilstm_layers must be >= 1")
        if self.window < 2:
            raise NetError("window must be >= 2")
        if self.attention_dim < 1:
            raise NetError("attention_dim must be >= 1")
        if self.learning_rate <= 0 or self.batch_size < 1:
            raise NetError("learning_rate must be > 0 and batch_size >= 1")
        if self.max_epochs < 1 or self.patience < 0:
            raise NetError("max_epochs must be >= 1 and patience >= 0")

    @property
    def total_filters(self) -> int:
        return sum(self.filters_per_branch)


@dataclass
class NetParams:
    """All learnable tensors plus the scaling metadata of the training data.

    ``tensors`` maps names to arrays; gradients come back under the same
    names. ``scale_mean``/``scale_std`` record the affine transform applied
    to the residuals during training so predictions can be mapped back.
    """

    config: NetConfig
    tensors: dict
    scale_mean: float = 0.0
    scale_std: float = 1.0

    def __post_init__(self):
        for name, arr in self.tensors.items():
            if not np.all(np.isfinite(arr)):
                raise NetError(f"tensor {name} contains non-finite values")

    def copy(self) -> "NetParams":
        return NetParams(self.config,
                         {k: v.copy() for k, v in self.tensors.items()},
                         self.scale_mean, self.scale_std)


@dataclass
class WindowDataset:
    """Scaled sliding windows with a chronological train/validation split."""

    inputs: np.ndarray          # (n_windows, window), scaled
    targets: np.ndarray         # (n_windows,), scaled
    train_idx: np.ndarray
    val_idx: np.ndarray
    scale_mean: float
    scale_std: float
    degenerate: bool = False

    def __post_init__(self):
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise NetError("inputs and targets misaligned")
        if self.train_idx.size and self.val_idx.size:
            if self.train_idx.max() >= self.val_idx.min():
                raise NetError("validation windows must follow training "
                               "windows chronologically")


@dataclass
class TrainReport:
    """Per-epoch loss curves plus where early stopping landed."""

    epochs: list              # (epoch, train_mse, val_mse) tuples
    best_epoch: int
    best_val_mse: float
    stopped_early: bool


def volatility(window) -> np.ndarray:
    """Local volatility: absolute first differences, with v_1 = 0.

    The first step has no predecessor, so its volatility is defined as 0.
    """
    window = np.asarray(window, dtype=float)
    if window.size < 2:
        raise NetError("volatility needs a window of at least 2 values")
    v = np.zeros(window.size)
    v[1:] = np.abs(np.diff(window))
    return v


def _gate_volatility(X: np.ndarray) -> np.ndarray:
    """Min-max normalized volatility per window row, in [0, 1].

    Normalization makes the gate input scale-free, so it does not matter
    whether rows are raw or affinely scaled residuals.
    """
    V = np.zeros_like(X)
    V[:, 1:] = np.abs(np.diff(X, axis=1))
    lo = V.min(axis=1, keepdims=True)
    rng = V.max(axis=1, keepdims=True) - lo
    rng = np.where(rng > 0, rng, 1.0)
    return (V - lo) / rng


def make_windows(residual: TimeSeries, window: int,
                 val_fraction: float = 0.15) -> WindowDataset:
    """Sliding (input, next-value) pairs, scaled by training statistics.

    A series of length n yields n - window - 1 pairs; the last
    ``ceil(val_fraction * count)`` are validation. Mean/std are computed
    from the stretch of raw values covered by the training pairs only. A
    zero-variance training stretch sets the ``degenerate`` flag.
    """
    if window < 2:
        raise NetError("window must be >= 2")
    if not 0.0 < val_fraction < 0.5:
        raise NetError("val_fraction must lie in (0, 0.5)")
    n = len(residual)
    if n <= window + 1:
        raise NetError(f"series of {n} points too short for window {window}")
    count = n - window - 1
    values = residual.values
    inputs = np.lib.stride_tricks.sliding_window_view(
        values, window)[:count].copy()
    targets = values[window:window + count].copy()

    n_val = int(np.ceil(val_fraction * count))
    n_train = count - n_val
    if n_train < 1:
        raise NetError("not enough windows for a non-empty training split")

    train_region = values[:n_train + window]
    mean = float(train_region.mean())
    std = float(train_region.std())
    degenerate = std == 0.0
    if degenerate:
        std = 1.0
    return WindowDataset((inputs - mean) / std, (targets - mean) / std,
                         np.arange(n_train), np.arange(n_train, count),
                         mean, std, degenerate)


def init_params(config: NetConfig) -> NetParams:
    """Seeded uniform fan-in/fan-out init; forget-gate biases start at 1."""
    rng = np.random.default_rng(config.seed)

    def glorot(*shape):
        fan_in, fan_out = shape[-1], shape[0]
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, shape)

    U = config.bilstm_units
    tensors: dict[str, np.ndarray] = {}
    for s, (k, f) in enumerate(zip(config.kernel_sizes,
                                   config.filters_per_branch)):
        tensors[f"conv{s}_K"] = glorot(f, k)
        tensors[f"conv{s}_b"] = np.zeros(f)
    in_dim = config.total_filters
    for layer in range(config.bilstm_layers):
        for direction in ("fwd", "bwd"):
            prefix = f"lstm{layer}_{direction}"
            tensors[f"{prefix}_W"] = glorot(4 * U, in_dim)
            tensors[f"{prefix}_R"] = glorot(4 * U, U)
            bias = np.zeros(4 * U)
            bias[U:2 * U] = 1.0
            tensors[f"{prefix}_b"] = bias
        in_dim = 2 * U
    A = config.attention_dim
    tensors["att_Wh"] = glorot(A, 2 * U)
    tensors["att_Wv"] = glorot(A, 1).reshape(A)
    tensors["att_b"] = np.zeros(A)
    tensors["att_w"] = glorot(A, 1).reshape(A)
    tensors["dense_w"] = glorot(2 * U, 1).reshape(2 * U)
    tensors["dense_b"] = np.zeros(1)
    return NetParams(config, tensors)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _lstm_core_forward(X, Wx, Wr, b):
    """Plain forward LSTM over time-ordered X (B, W, D) -> H (B, W, U)."""
    B, W, _ = X.shape
    U = Wr.shape[1]
    h = np.zeros((B, U))
    c = np.zeros((B, U))
    H = np.empty((B, W, U))
    cache = []
    for t in range(W):
        z = X[:, t] @ Wx.T + h @ Wr.T + b
        i = _sigmoid(z[:, :U])
        f = _sigmoid(z[:, U:2 * U])
        g = np.tanh(z[:, 2 * U:3 * U])
        o = _sigmoid(z[:, 3 * U:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        cache.append((i, f, g, o, c, tc, h))
        h = o * tc
        c = c_new
        H[:, t] = h
    return H, cache


def _lstm_core_backward(X, Wx, Wr, dH, cache):
    B, W, D = X.shape
    U = Wr.shape[1]
    dWx = np.zeros_like(Wx)
    dWr = np.zeros_like(Wr)
    db = np.zeros(4 * U)
    dX = np.zeros_like(X)
    dh_carry = np.zeros((B, U))
    dc_carry = np.zeros((B, U))
    for t in range(W - 1, -1, -1):
        i, f, g, o, c_prev, tc, h_prev = cache[t]
        dh = dH[:, t] + dh_carry
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_carry
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dc_carry = dc * f
        dz = np.concatenate([di * i * (1 - i), df * f * (1 - f),
                             dg * (1 - g * g), do * o * (1 - o)], axis=1)
        dWx += dz.T @ X[:, t]
        dWr += dz.T @ h_prev
        db += dz.sum(axis=0)
        dX[:, t] = dz @ Wx
        dh_carry = dz @ Wr
    return dWx, dWr, db, dX


def _forward_batch(params: NetParams, X: np.ndarray):
    """Batched forward pass. X is (B, window), already scaled.

    Returns (pred (B,), alpha (B, window), cache) where cache carries every
    intermediate needed by :func:`_backward_batch`.
    """
    cfg = params.config
    T = params.tensors
    B, W = X.shape
    if W != cfg.window:
        raise NetError(f"window length {W} does not match config window "
                       f"{cfg.window}")
    V = _gate_volatility(X)

    feats = []
    conv_cache = []
    for s, k in enumerate(cfg.kernel_sizes):
        pad = k // 2
        Xp = np.pad(X, ((0, 0), (pad, pad)))
        windows = np.lib.stride_tricks.sliding_window_view(Xp, k, axis=1)
        z = windows @ T[f"conv{s}_K"].T + T[f"conv{s}_b"]
        a = np.maximum(z, 0.0)
        feats.append(a)
        conv_cache.append((windows, z))
    A_feat = np.concatenate(feats, axis=2)

    inp = A_feat
    lstm_inputs = []
    lstm_caches = []
    for layer in range(cfg.bilstm_layers):
        lstm_inputs.append(inp)
        Hf, cache_f = _lstm_core_forward(
            inp, T[f"lstm{layer}_fwd_W"], T[f"lstm{layer}_fwd_R"],
            T[f"lstm{layer}_fwd_b"])
        rev = inp[:, ::-1]
        Hb_rev, cache_b = _lstm_core_forward(
            rev, T[f"lstm{layer}_bwd_W"], T[f"lstm{layer}_bwd_R"],
            T[f"lstm{layer}_bwd_b"])
        H = np.concatenate([Hf, Hb_rev[:, ::-1]], axis=2)
        lstm_caches.append((cache_f, cache_b, rev))
        inp = H

    Z = H @ T["att_Wh"].T + V[..., None] * T["att_Wv"] + T["att_b"]
    Uh = np.tanh(Z)
    S = Uh @ T["att_w"]
    S_shift = S - S.max(axis=1, keepdims=True)
    expS = np.exp(S_shift)
    alpha = expS / expS.sum(axis=1, keepdims=True)
    ctx = (alpha[..., None] * H).sum(axis=1)
    pred = ctx @ T["dense_w"] + T["dense_b"][0]

    cache = dict(X=X, V=V, conv=conv_cache, lstm_inputs=lstm_inputs,
                 lstm_caches=lstm_caches, H=H, Uh=Uh, alpha=alpha, ctx=ctx)
    return pred, alpha, cache


def _backward_batch(params: NetParams, cache, dpred: np.ndarray) -> dict:
    cfg = params.config
    T = params.tensors
    alpha = cache["alpha"]
    H = cache["H"]
    Uh = cache["Uh"]
    V = cache["V"]

    grads = {name: np.zeros_like(arr) for name, arr in T.items()}
    grads["dense_b"][0] = dpred.sum()
    grads["dense_w"][:] = cache["ctx"].T @ dpred
    dctx = dpred[:, None] * T["dense_w"]

    dalpha = (dctx[:, None, :] * H).sum(axis=2)
    dH = alpha[..., None] * dctx[:, None, :]
    dS = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
    grads["att_w"][:] = (dS[..., None] * Uh).sum(axis=(0, 1))
    dU = dS[..., None] * T["att_w"]
    dZ = dU * (1.0 - Uh * Uh)
    grads["att_Wh"][:] = np.einsum("bwa,bwh->ah", dZ, H)
    grads["att_Wv"][:] = (dZ * V[..., None]).sum(axis=(0, 1))
    grads["att_b"][:] = dZ.sum(axis=(0, 1))
    dH = dH + dZ @ T["att_Wh"]

    U = cfg.bilstm_units
    for layer in range(cfg.bilstm_layers - 1, -1, -1):
        cache_f, cache_b, rev = cache["lstm_caches"][layer]
        inp = cache["lstm_inputs"][layer]
        dWf, dRf, dbf, dXf = _lstm_core_backward(
            inp, T[f"lstm{layer}_fwd_W"], T[f"lstm{layer}_fwd_R"],
            dH[:, :, :U], cache_f)
        dWb, dRb, dbb, dXb_rev = _lstm_core_backward(
            rev, T[f"lstm{layer}_bwd_W"], T[f"lstm{layer}_bwd_R"],
            dH[:, ::-1, U:], cache_b)
        grads[f"lstm{layer}_fwd_W"][:] = dWf
        grads[f"lstm{layer}_fwd_R"][:] = dRf
        grads[f"lstm{layer}_fwd_b"][:] = dbf
        grads[f"lstm{layer}_bwd_W"][:] = dWb
        grads[f"lstm{layer}_bwd_R"][:] = dRb
        grads[f"lstm{layer}_bwd_b"][:] = dbb
        dH = dXf + dXb_rev[:, ::-1]

    offset = 0
    for s, f in enumerate(cfg.filters_per_branch):
        windows, z = cache["conv"][s]
        da = dH[:, :, offset:offset + f]
        dz = da * (z > 0)
        grads[f"conv{s}_K"][:] = np.einsum("bwf,bwk->fk", dz, windows)
        grads[f"conv{s}_b"][:] = dz.sum(axis=(0, 1))
        offset += f
    return grads


def forward(params: NetParams, window) -> tuple:
    """Prediction and attention weights for one scaled window."""
    window = np.asarray(window, dtype=float)
    if window.ndim != 1:
        raise NetError("forward expects a single 1-D window")
    pred, alpha, _ = _forward_batch(params, window[None, :])
    return float(pred[0]), alpha[0]


def predict_windows(params: NetParams, windows) -> np.ndarray:
    """One-step predictions, in residual units, for raw (unscaled) windows.

    ``windows`` is (n, window); scaling in and out uses the training
    statistics carried on ``params``.
    """
    X = np.asarray(windows, dtype=float)
    if X.ndim != 2 or X.shape[1] != params.config.window:
        raise NetError(f"expected windows shaped (n, {params.config.window})"
                       f", got {X.shape}")
    scaled = (X - params.scale_mean) / params.scale_std
    out = np.empty(X.shape[0])
    for lo in range(0, X.shape[0], 256):
        pred, _, _ = _forward_batch(params, scaled[lo:lo + 256])
        out[lo:lo + 256] = pred
    return out * params.scale_std + params.scale_mean


def loss_and_gradients(params: NetParams, batch) -> tuple:
    """Mean squared error over a batch and exact gradients for every tensor.

    ``batch`` is an (inputs, targets) pair with inputs shaped
    (batch, window). Raises if any prediction goes non-finite, naming the
    offending sample.
    """
    inputs, targets = batch
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if inputs.ndim != 2 or inputs.shape[0] == 0:
        raise NetError("batch must be non-empty and 2-D")
    B = inputs.shape[0]
    pred, _, cache = _forward_batch(params, inputs)
    bad = ~np.isfinite(pred)
    if bad.any():
        raise NetError(f"non-finite prediction at batch index "
                       f"{int(np.argmax(bad))}")
    err = pred - targets
    mse = float(np.mean(err * err))
    if not np.isfinite(mse):
        raise NetError("non-finite loss over batch")
    dpred = 2.0 * err / B
    return mse, _backward_batch(params, cache, dpred)


def _dataset_mse(params: NetParams, inputs, targets, chunk: int = 256) -> float:
    total = 0.0
    n = inputs.shape[0]
    for lo in range(0, n, chunk):
        pred, _, _ = _forward_batch(params, inputs[lo:lo + chunk])
        d = pred - targets[lo:lo + chunk]
        total += float(np.dot(d, d))
    return total / n


def train(config: NetConfig, data: WindowDataset) -> tuple:
    """Mini-batch Adam on MSE with early stopping on validation loss.

    Returns (best-validation params, TrainReport). Deterministic under
    ``config.seed``: init, shuffling and updates all draw from one seeded
    generator.
    """
    if data.degenerate:
        raise NetError("dataset is degenerate (zero-variance training data)")
    if data.train_idx.size == 0 or data.val_idx.size == 0:
        raise NetError("need non-empty train and validation splits")
    params = init_params(config)
    params.scale_mean = data.scale_mean
    params.scale_std = data.scale_std
    rng = np.random.default_rng(config.seed + 1)

    m = {k: np.zeros_like(v) for k, v in params.tensors.items()}
    v = {k: np.zeros_like(vv) for k, vv in params.tensors.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0

    X_tr = data.inputs[data.train_idx]
    y_tr = data.targets[data.train_idx]
    X_val = data.inputs[data.val_idx]
    y_val = data.targets[data.val_idx]

    best_val = np.inf
    best_params = params.copy()
    best_epoch = 0
    wait = 0
    rows = []
    stopped_early = False

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(X_tr.shape[0])
        for lo in range(0, order.size, config.batch_size):
            sel = order[lo:lo + config.batch_size]
            try:
                _, grads = loss_and_gradients(params,
                                              (X_tr[sel], y_tr[sel]))
            except NetError as exc:
                raise NetError(f"training diverged at epoch {epoch}: {exc}"
                               ) from exc
            step += 1
            for name, g in grads.items():
                m[name] = beta1 * m[name] + (1 - beta1) * g
                v[name] = beta2 * v[name] + (1 - beta2) * g * g
                mhat = m[name] / (1 - beta1 ** step)
                vhat = v[name] / (1 - beta2 ** step)
                params.tensors[name] -= (config.learning_rate * mhat
                                         / (np.sqrt(vhat) + eps))

        train_mse = _dataset_mse(params, X_tr, y_tr)
        val_mse = _dataset_mse(params, X_val, y_val)
        if not (np.isfinite(train_mse) and np.isfinite(val_mse)):
            raise NetError(f"training diverged at epoch {epoch}")
        rows.append((epoch, train_mse, val_mse))
        if val_mse < best_val:
            best_val = val_mse
            best_params = params.copy()
            best_epoch = epoch
            wait = 0
        else:
            wait += 1
            if wait > config.patience:
                stopped_early = True
                break

    return best_params, TrainReport(rows, best_epoch, float(best_val),
                                    stopped_early)


def predict_series(params: NetParams, residual_history: TimeSeries,
                   horizon: int) -> TimeSeries:
    """Recursive multi-step forecast of the residual component.

    The last ``window`` values are scaled with the training statistics
    carried on ``params``; each prediction is appended in scaled space and
    the window slides. Output is mapped back to residual units and continues
    the history's time axis.
    """
    if horizon < 1:
        raise NetError(f"horizon must be >= 1, got {horizon}")
    W = params.config.window
    if len(residual_history) < W:
        raise NetError(f"history of {len(residual_history)} points shorter "
                       f"than window {W}")
    scaled = ((residual_history.values - params.scale_mean)
              / params.scale_std)
    buf = list(scaled[-W:])
    out = np.empty(horizon)
    for h in range(horizon):
        pred, _, _ = _forward_batch(params, np.asarray(buf)[None, :])
        out[h] = pred[0]
        buf.pop(0)
        buf.append(out[h])
    out = out * params.scale_std + params.scale_mean
    step = timedelta(hours=residual_history.step_hours)
    last = residual_history.start + (len(residual_history) - 1) * step
    return TimeSeries(last + step, residual_history.step_hours, out,
                      residual_history.name)


def save_params(path, params: NetParams) -> None:
    """Versioned .npz checkpoint: config echo, scaling, every tensor."""
    cfg = params.config
    config_json = json.dumps({
        "kernel_sizes": list(cfg.kernel_sizes),
        "filters_per_branch": list(cfg.filters_per_branch),
        "bilstm_units": cfg.bilstm_units, "bilstm_layers": cfg.bilstm_layers,
        "window": cfg.window, "attention_dim": cfg.attention_dim,
        "learning_rate": cfg.learning_rate, "batch_size": cfg.batch_size,
        "max_epochs": cfg.max_epochs, "patience": cfg.patience,
        "seed": cfg.seed,
    })
    np.savez(path,
             checkpoint_version=np.array(CHECKPOINT_VERSION),
             config_json=np.array(config_json),
             scale_mean=np.array(params.scale_mean),
             scale_std=np.array(params.scale_std),
             **{f"tensor_{k}": v for k, v in params.tensors.items()})


def load_params(path) -> NetParams:
    """Read a checkpoint written by :func:`save_params`."""
    try:
        with np.load(path, allow_pickle=False) as npz:
            data = dict(npz.items())
    except (OSError, ValueError) as exc:
        raise NetError(f"cannot read checkpoint {path}: {exc}") from exc
    if "checkpoint_version" not in data:
        raise NetError(f"{path}: not a parameter checkpoint")
    version = int(data["checkpoint_version"])
    if version != CHECKPOINT_VERSION:
        raise NetError(f"{path}: unsupported checkpoint version {version}")
    cfg_dict = json.loads(str(data["config_json"]))
    cfg_dict["kernel_sizes"] = tuple(cfg_dict["kernel_sizes"])
    cfg_dict["filters_per_branch"] = tuple(cfg_dict["filters_per_branch"])
    config = NetConfig(**cfg_dict)
    tensors = {k[len("tensor_"):]: v for k, v in data.items()
               if k.startswith("tensor_")}
    return NetParams(config, tensors,
                     float(data["scale_mean"]), float(data["scale_std"]))


def write_train_report(path, report: TrainReport) -> None:
    """Training curves as CSV: epoch, train_mse, val_mse."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_mse,val_mse\n")
        for epoch, train_mse, val_mse in report.epochs:
            fh.write(f"{epoch},{train_mse:.10g},{val_mse:.10g}\n")
