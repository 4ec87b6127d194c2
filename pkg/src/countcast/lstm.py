"""Bidirectional LSTM trained from scratch with numpy.

One bidirectional layer reads a ``k``-day window of every series; the two
final hidden states are concatenated and passed through a linear layer to
give the next-day value of every series on the normalized log scale.

Weights live in a flat dict so the optimizer, gradient checks and
serialization can treat every block the same way. Gate blocks are stacked
in the order input, forget, candidate, output.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .data import (
    CountPanel,
    DataError,
    Feature,
    NormalizationSpec,
    SeriesKey,
    denormalize,
    fit_normalizer,
    make_windows,
    normalize,
)

FORMAT_VERSION = 1
GATES = ("i", "f", "g", "o")
DIRECTIONS = ("fwd", "bwd")
RMS_DECAY = 0.9
RMS_EPS = 1e-8


class NumericError(ArithmeticError):
    """Raised when a forward or backward pass produces non-finite values."""


@dataclass
class TrainConfig:
    steps: int = 200
    batch_size: int = 10
    validation_per_batch: int = 2
    k: int = 14
    hidden: int = 32
    dropout: float = 0.10
    recurrent_dropout: float = 0.10
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.k < 1 or self.hidden < 1:
            raise ValueError("k and hidden must be >= 1")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if not 0 <= self.validation_per_batch < self.batch_size:
            raise ValueError("validation_per_batch must be in [0, batch_size)")
        for name in ("dropout", "recurrent_dropout"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must be in [0, 1)")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")


@dataclass
class TrainHistory:
    train_mae: list = field(default_factory=list)
    val_mae: list = field(default_factory=list)


@dataclass
class LstmDirectionWeights:
    """View of one direction's weights, gates stacked as rows of W, U, b."""

    W: np.ndarray  # (4H, D)
    U: np.ndarray  # (4H, H)
    b: np.ndarray  # (4H,)

    @property
    def hidden(self):
        return self.U.shape[1]

    def gate(self, name):
        H = self.hidden
        j = GATES.index(name)
        return self.W[j * H:(j + 1) * H], self.U[j * H:(j + 1) * H], self.b[j * H:(j + 1) * H]


@dataclass
class BiLstmModel:
    params: dict
    norm: NormalizationSpec
    k: int
    keys: list
    config: TrainConfig = field(default_factory=TrainConfig)

    @property
    def hidden(self):
        return self.params["fwd_U"].shape[1]

    @property
    def n_series(self):
        return self.params["dense_b"].shape[0]

    def direction(self, name):
        return LstmDirectionWeights(
            self.params[f"{name}_W"], self.params[f"{name}_U"], self.params[f"{name}_b"]
        )

    def copy(self):
        return BiLstmModel(
            {n: p.copy() for n, p in self.params.items()}, self.norm, self.k,
            list(self.keys), self.config,
        )


def param_shapes(n_series, hidden):
    D, H = n_series, hidden
    shapes = {}
    for d in DIRECTIONS:
        shapes[f"{d}_W"] = (4 * H, D)
        shapes[f"{d}_U"] = (4 * H, H)
        shapes[f"{d}_b"] = (4 * H,)
    shapes["dense_W"] = (D, 2 * H)
    shapes["dense_b"] = (D,)
    return shapes


def count_parameters(model_or_dims, hidden=None):
    """Number of trainable weights; accepts a model or ``(n_series, hidden)``."""
    if hidden is None:
        D, H = model_or_dims.n_series, model_or_dims.hidden
    else:
        D, H = model_or_dims, hidden
    if D < 1 or H < 1:
        raise ValueError("n_series and hidden must be >= 1")
    return 2 * 4 * (H * D + H * H + H) + (D * 2 * H + D)


def init_params(n_series, hidden, rng):
    """Glorot-uniform weight matrices per gate, zero biases, forget bias 1."""
    D, H = n_series, hidden
    params = {}
    for d in DIRECTIONS:
        for name, fan_in in (("W", D), ("U", H)):
            limit = math.sqrt(6.0 / (fan_in + H))
            blocks = [rng.uniform(-limit, limit, size=(H, fan_in)) for _ in GATES]
            params[f"{d}_{name}"] = np.vstack(blocks)
        b = np.zeros(4 * H)
        b[H:2 * H] = 1.0
        params[f"{d}_b"] = b
    limit = math.sqrt(6.0 / (2 * H + D))
    params["dense_W"] = rng.uniform(-limit, limit, size=(D, 2 * H))
    params["dense_b"] = np.zeros(D)
    return params


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def lstm_cell_step(x, h, c, w, rec_mask=None):
    """Advance one LSTM step.

    Works on single vectors or on batches (leading axis). ``rec_mask``
    multiplies the hidden state entering the recurrent weights.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite input to LSTM cell")
    hm = h if rec_mask is None else h * rec_mask
    a = x @ w.W.T + hm @ w.U.T + w.b
    H = w.hidden
    i = _sigmoid(a[..., :H])
    f = _sigmoid(a[..., H:2 * H])
    g = np.tanh(a[..., 2 * H:3 * H])
    o = _sigmoid(a[..., 3 * H:])
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    return h_new, c_new


@dataclass
class DropoutMasks:
    rec_fwd: np.ndarray  # (B, H)
    rec_bwd: np.ndarray  # (B, H)
    output: np.ndarray  # (B, 2H)


def sample_masks(rng, batch, hidden, dropout, recurrent_dropout):
    def draw(p, shape):
        if p == 0:
            return np.ones(shape)
        return (rng.random(shape) >= p) / (1.0 - p)

    return DropoutMasks(
        rec_fwd=draw(recurrent_dropout, (batch, hidden)),
        rec_bwd=draw(recurrent_dropout, (batch, hidden)),
        output=draw(dropout, (batch, 2 * hidden)),
    )


def _run_direction(X, w, mask, reverse, keep_cache):
    B, k, _ = X.shape
    H = w.hidden
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    order = range(k - 1, -1, -1) if reverse else range(k)
    cache = []
    for t in order:
        x = X[:, t, :]
        hm = h if mask is None else h * mask
        a = x @ w.W.T + hm @ w.U.T + w.b
        i = _sigmoid(a[:, :H])
        f = _sigmoid(a[:, H:2 * H])
        g = np.tanh(a[:, 2 * H:3 * H])
        o = _sigmoid(a[:, 3 * H:])
        c_prev = c
        c = f * c + i * g
        tc = np.tanh(c)
        if keep_cache:
            cache.append((x, hm, c_prev, i, f, g, o, tc))
        h = o * tc
    return h, cache


def _forward(model, X, masks, keep_cache=False):
    X = np.asarray(X, dtype=float)
    if X.ndim != 3 or X.shape[1] != model.k or X.shape[2] != model.n_series:
        raise ValueError(
            f"expected windows of shape (B, {model.k}, {model.n_series}), got {X.shape}"
        )
    if not np.all(np.isfinite(X)):
        raise NumericError("non-finite values in input window")
    h_f, cache_f = _run_direction(
        X, model.direction("fwd"), None if masks is None else masks.rec_fwd, False, keep_cache
    )
    h_b, cache_b = _run_direction(
        X, model.direction("bwd"), None if masks is None else masks.rec_bwd, True, keep_cache
    )
    hcat = np.concatenate([h_f, h_b], axis=1)
    if masks is not None:
        hcat = hcat * masks.output
    out = hcat @ model.params["dense_W"].T + model.params["dense_b"]
    return out, (hcat, cache_f, cache_b)


def model_forward(window, model, masks=None):
    """Normalized next-day prediction for one ``(k, D)`` window or a batch."""
    window = np.asarray(window, dtype=float)
    single = window.ndim == 2
    X = window[None] if single else window
    out, _ = _forward(model, X, masks)
    return out[0] if single else out


def mae_loss(pred, target):
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    return float(np.mean(np.abs(pred - target)))


def _direction_grads(cache, w, dh, mask):
    H = w.hidden
    dW = np.zeros_like(w.W)
    dU = np.zeros_like(w.U)
    db = np.zeros_like(w.b)
    dc = np.zeros_like(dh)
    for x, hm, c_prev, i, f, g, o, tc in reversed(cache):
        do = dh * tc
        dct = dc + dh * o * (1.0 - tc * tc)
        da = np.empty((dh.shape[0], 4 * H))
        da[:, :H] = dct * g * i * (1.0 - i)
        da[:, H:2 * H] = dct * c_prev * f * (1.0 - f)
        da[:, 2 * H:3 * H] = dct * i * (1.0 - g * g)
        da[:, 3 * H:] = do * o * (1.0 - o)
        dW += da.T @ x
        dU += da.T @ hm
        db += da.sum(axis=0)
        dc = dct * f
        dh = da @ w.U
        if mask is not None:
            dh = dh * mask
    return dW, dU, db


def loss_and_grads(model, X, Y, masks=None):
    """MAE loss of a batch and its exact gradient by backpropagation through time.

    ``X`` is ``(B, k, D)``, ``Y`` is ``(B, D)``. The subgradient of
    ``|.|`` at zero is taken as zero.
    """
    Y = np.asarray(Y, dtype=float)
    pred, (hcat, cache_f, cache_b) = _forward(model, X, masks, keep_cache=True)
    diff = pred - Y
    loss = float(np.mean(np.abs(diff)))
    dpred = np.sign(diff) / diff.size
    H = model.hidden
    grads = {
        "dense_W": dpred.T @ hcat,
        "dense_b": dpred.sum(axis=0),
    }
    dhcat = dpred @ model.params["dense_W"]
    if masks is not None:
        dhcat = dhcat * masks.output
    for name, cache, dh, mask in (
        ("fwd", cache_f, dhcat[:, :H], None if masks is None else masks.rec_fwd),
        ("bwd", cache_b, dhcat[:, H:], None if masks is None else masks.rec_bwd),
    ):
        dW, dU, db = _direction_grads(cache, model.direction(name), dh, mask)
        grads[f"{name}_W"], grads[f"{name}_U"], grads[f"{name}_b"] = dW, dU, db
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in {name}")
    return loss, grads


def backward(batch, model, masks=None):
    """Gradient of the batch MAE w.r.t. every weight block."""
    X = np.stack([s.input for s in batch])
    Y = np.stack([s.target for s in batch])
    return loss_and_grads(model, X, Y, masks)[1]


def optimizer_step(params, grads, state, learning_rate):
    """One RMSprop update. Returns new ``(params, state)``; inputs are untouched."""
    if state is None:
        state = {n: np.zeros_like(p) for n, p in params.items()}
    new_params, new_state = {}, {}
    for name, p in params.items():
        g = grads[name]
        acc = RMS_DECAY * state[name] + (1.0 - RMS_DECAY) * g * g
        new_state[name] = acc
        new_params[name] = p - learning_rate * g / np.sqrt(acc + RMS_EPS)
    return new_params, new_state


def _seed_streams(seed):
    init_seq, train_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init_seq), np.random.default_rng(train_seq)


def initialize_model(panel, cfg):
    norm = fit_normalizer(panel)
    init_rng, _ = _seed_streams(cfg.seed)
    params = init_params(panel.values.shape[1], cfg.hidden, init_rng)
    return BiLstmModel(params, norm, cfg.k, list(panel.keys), cfg)


def train(panel, cfg=None):
    """Fit the network on one panel. Returns ``(model, history)``."""
    cfg = cfg or TrainConfig()
    T = panel.values.shape[0]
    if T <= cfg.k + 1:
        raise DataError(f"insufficient history: {T} days for lookback {cfg.k}")
    model = initialize_model(panel, cfg)
    _, rng = _seed_streams(cfg.seed)
    z = normalize(panel.values, model.norm)
    windows = make_windows(z, cfg.k)
    X_all = np.stack([w.input for w in windows])
    Y_all = np.stack([w.target for w in windows])
    n = len(windows)
    history = TrainHistory()
    params, state = model.params, None
    n_val = cfg.validation_per_batch
    for _ in range(cfg.steps):
        idx = rng.choice(n, size=cfg.batch_size, replace=n < cfg.batch_size)
        val_idx, fit_idx = idx[:n_val], idx[n_val:]
        masks = sample_masks(rng, len(fit_idx), cfg.hidden, cfg.dropout, cfg.recurrent_dropout)
        model.params = params
        loss, grads = loss_and_grads(model, X_all[fit_idx], Y_all[fit_idx], masks)
        if n_val:
            val_pred, _ = _forward(model, X_all[val_idx], None)
            val = mae_loss(val_pred, Y_all[val_idx])
        else:
            val = float("nan")
        history.train_mae.append(loss)
        history.val_mae.append(val)
        params, state = optimizer_step(params, grads, state, cfg.learning_rate)
    model.params = params
    return model, history


@dataclass
class PointForecast:
    days: np.ndarray
    values: np.ndarray
    observed: np.ndarray

    def __len__(self):
        return len(self.days)


def _values(panel):
    return panel.values if isinstance(panel, CountPanel) else np.asarray(panel)


def predict_onestep_all(model, panel):
    """One-step-ahead point guesses for every observed day ``t >= k``."""
    values = _values(panel)
    z = normalize(values, model.norm)
    windows = make_windows(z, model.k)
    X = np.stack([w.input for w in windows])
    out = model_forward(X, model)
    return PointForecast(
        days=np.arange(model.k, values.shape[0]),
        values=denormalize(out, model.norm),
        observed=np.ones(len(windows), dtype=bool),
    )


def forecast_horizon(model, panel, horizon):
    """Iterated forecast: each day's prediction is fed back as the next input row."""
    values = _values(panel)
    T = values.shape[0]
    if T < model.k:
        raise DataError(f"insufficient history: {T} days for lookback {model.k}")
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    window = normalize(values[T - model.k:], model.norm)
    rows = []
    for _ in range(horizon):
        y = denormalize(model_forward(window, model), model.norm)
        rows.append(y)
        window = np.vstack([window[1:], normalize(y[None], model.norm)])
    out = np.array(rows).reshape(horizon, values.shape[1])
    return PointForecast(
        days=np.arange(T, T + horizon),
        values=out,
        observed=np.zeros(horizon, dtype=bool),
    )


def save_model(model, path):
    """Write a model as JSON. Floats are written with ``repr`` precision so
    loading gives back bit-identical arrays."""
    doc = {
        "format_version": FORMAT_VERSION,
        "n_series": model.n_series,
        "hidden": model.hidden,
        "k": model.k,
        "keys": [[key.region, key.feature.value] for key in model.keys],
        "norm": {
            "location": model.norm.location.tolist(),
            "scale": model.norm.scale.tolist(),
        },
        "params": {
            name: {"shape": list(p.shape), "data": p.ravel().tolist()}
            for name, p in model.params.items()
        },
        "config": asdict(model.config),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, separators=(",", ":"))
        fh.write("\n")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported model format {doc.get('format_version')!r}")
    params = {
        name: np.array(entry["data"], dtype=float).reshape(entry["shape"])
        for name, entry in doc["params"].items()
    }
    expected = param_shapes(doc["n_series"], doc["hidden"])
    for name, shape in expected.items():
        if name not in params or params[name].shape != shape:
            raise DataError(f"model file has bad weight block {name}")
    keys = [SeriesKey(r, Feature.parse(f), i) for i, (r, f) in enumerate(doc["keys"])]
    norm = NormalizationSpec(
        np.array(doc["norm"]["location"], dtype=float),
        np.array(doc["norm"]["scale"], dtype=float),
    )
    return BiLstmModel(params, norm, doc["k"], keys, TrainConfig(**doc["config"]))


class BiLSTMForecaster(BaseEstimator):
    """Estimator wrapper around :func:`train` for ``(n_days, n_series)`` count arrays.

    ``predict`` gives one-step-ahead guesses for days ``k..n_days-1``;
    ``forecast`` rolls the model forward past the end of ``X``.
    """

    def __init__(self, steps=200, batch_size=10, validation_per_batch=2, k=14,
                 hidden=32, dropout=0.10, recurrent_dropout=0.10,
                 learning_rate=1e-3, seed=0):
        self.steps = steps
        self.batch_size = batch_size
        self.validation_per_batch = validation_per_batch
        self.k = k
        self.hidden = hidden
        self.dropout = dropout
        self.recurrent_dropout = recurrent_dropout
        self.learning_rate = learning_rate
        self.seed = seed

    def _config(self):
        return TrainConfig(**self.get_params())

    def fit(self, X, y=None):
        X = self._validate_counts(X)
        D = X.shape[1]
        keys = [SeriesKey(f"s{d}", Feature.CASES, d) for d in range(D)]
        panel = CountPanel(list(range(X.shape[0])), keys, X)
        self.model_, self.history_ = train(panel, self._config())
        self.n_features_in_ = D
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = self._validate_counts(X)
        return predict_onestep_all(self.model_, X).values

    def forecast(self, X, horizon=30):
        check_is_fitted(self, "model_")
        X = self._validate_counts(X)
        return forecast_horizon(self.model_, X, horizon).values

    def _validate_counts(self, X):
        X = check_array(X, dtype=float)
        if np.any(X < 0):
            raise ValueError("counts must be non-negative")
        if hasattr(self, "n_features_in_") and X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} series, model was fitted on {self.n_features_in_}"
            )
        return X
