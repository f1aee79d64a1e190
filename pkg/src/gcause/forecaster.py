"""Probabilistic recurrent forecaster over all variables of a series.

A single-layer GRU reads the joint vector ``z_t`` at every step and a linear
head maps its hidden state, plus a direct linear read of ``z_t`` itself, to
``2N`` numbers: the predictive means and the raw scales of the next step,
``sigma = softplus(raw) + min_sigma``. Training
minimises the Gaussian negative log-likelihood of the horizon steps of each
window under teacher forcing; forecasting rolls the cell over a context and
then feeds its own means back in.

Forward and backward passes are written out by hand in numpy and are
checked against central finite differences by :func:`gradient_check`.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .series import MultivariateSeries, WindowSet

logger = logging.getLogger(__name__)

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
PARAM_NAMES = ("Wx", "Wh", "b", "Wo", "Ws", "bo")
FORMAT_TAG = "gcause-forecaster/1"


class ForecasterError(ValueError):
    pass


class TrainingDiverged(ForecasterError):
    pass


@dataclass(frozen=True)
class ForecasterConfig:
    context: int = 12
    horizon: int = 2
    hidden: int | None = None  # None -> max(16, 8 * N)
    epochs: int = 50
    learning_rate: float = 1e-2
    lr_decay: float = 0.95  # per-epoch multiplicative decay
    clip_norm: float = 5.0
    seed: int = 0
    min_sigma: float = 1e-3
    batch_size: int = 64
    train_stride: int = 1
    val_fraction: float = 0.2  # chronological tail of the training windows; 0 disables early stopping
    patience: int = 10

    def __post_init__(self):
        if self.context < 1 or self.horizon < 1:
            raise ForecasterError("context and horizon must be >= 1")
        if self.hidden is not None and self.hidden < 1:
            raise ForecasterError("hidden size must be >= 1")
        if self.learning_rate <= 0 or self.min_sigma <= 0:
            raise ForecasterError("learning_rate and min_sigma must be > 0")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ForecasterError("lr_decay must lie in (0, 1]")
        if self.epochs < 0 or self.batch_size < 1 or self.train_stride < 1 or self.patience < 1:
            raise ForecasterError("epochs >= 0 and batch_size, train_stride, patience >= 1 required")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ForecasterError("val_fraction must lie in [0, 1)")

    def hidden_for(self, n_vars: int) -> int:
        return self.hidden if self.hidden is not None else max(16, 8 * n_vars)


@dataclass(frozen=True)
class PredictiveTrajectory:
    mu: np.ndarray     # (..., T_h, N)
    sigma: np.ndarray  # (..., T_h, N)

    @property
    def horizon(self) -> int:
        return self.mu.shape[-2]


@dataclass
class TrainedForecaster:
    params: dict[str, np.ndarray]
    config: ForecasterConfig
    loss_trace: list[float] = field(default_factory=list)
    val_trace: list[float] = field(default_factory=list)
    best_epoch: int = 0

    @property
    def n_vars(self) -> int:
        return self.params["Wx"].shape[0]

    @property
    def hidden(self) -> int:
        return self.params["Wh"].shape[0]

    def to_json(self) -> dict:
        return {
            "format": FORMAT_TAG,
            "config": asdict(self.config),
            "params": {k: self.params[k].tolist() for k in PARAM_NAMES},
            "loss_trace": list(self.loss_trace),
            "val_trace": list(self.val_trace),
            "best_epoch": self.best_epoch,
        }

    @classmethod
    def from_json(cls, data: dict) -> "TrainedForecaster":
        if data.get("format") != FORMAT_TAG:
            raise ForecasterError(f"unsupported model format {data.get('format')!r}")
        params = {k: np.asarray(data["params"][k], dtype=float) for k in PARAM_NAMES}
        return cls(params, ForecasterConfig(**data["config"]), list(data.get("loss_trace", [])),
                   list(data.get("val_trace", [])), int(data.get("best_epoch", 0)))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path: str | Path) -> "TrainedForecaster":
        return cls.from_json(json.loads(Path(path).read_text()))

    def write_loss_trace(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "loss"])
            for epoch, loss in enumerate(self.loss_trace, start=1):
                writer.writerow([epoch, repr(loss)])


def nll_loss(mu, sigma, z):
    """Gaussian negative log-likelihood, elementwise."""
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ForecasterError("sigma must be strictly positive")
    return HALF_LOG_2PI + np.log(sigma) + (np.asarray(z) - mu) ** 2 / (2.0 * sigma ** 2)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softplus(x):
    return np.logaddexp(0.0, x)


def init_params(n_vars: int, hidden: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    bound = 1.0 / math.sqrt(hidden)
    bo = np.zeros(2 * n_vars)
    bo[n_vars:] = math.log(math.e - 1.0)  # softplus^-1(1): start at unit predictive scale
    return {
        "Wx": rng.uniform(-bound, bound, (n_vars, 3 * hidden)),
        "Wh": rng.uniform(-bound, bound, (hidden, 3 * hidden)),
        "b": np.zeros(3 * hidden),
        "Wo": rng.uniform(-bound, bound, (hidden, 2 * n_vars)),
        "Ws": np.zeros((n_vars, 2 * n_vars)),
        "bo": bo,
    }


def zero_params(n_vars: int, hidden: int) -> dict[str, np.ndarray]:
    return {
        "Wx": np.zeros((n_vars, 3 * hidden)),
        "Wh": np.zeros((hidden, 3 * hidden)),
        "b": np.zeros(3 * hidden),
        "Wo": np.zeros((hidden, 2 * n_vars)),
        "Ws": np.zeros((n_vars, 2 * n_vars)),
        "bo": np.zeros(2 * n_vars),
    }


def _cell(params, x, h):
    H = h.shape[1]
    Wh = params["Wh"]
    a = x @ params["Wx"] + params["b"]
    gates = _sigmoid(a[:, :2 * H] + h @ Wh[:, :2 * H])
    z, r = gates[:, :H], gates[:, H:]
    rh = r * h
    n = np.tanh(a[:, 2 * H:] + rh @ Wh[:, 2 * H:])
    h_new = (1.0 - z) * n + z * h
    return h_new, (x, h, z, r, rh, n)


def _head(params, h, x, min_sigma):
    N = params["Wx"].shape[0]
    o = h @ params["Wo"] + x @ params["Ws"] + params["bo"]
    return o[:, :N], _softplus(o[:, N:]) + min_sigma, o[:, N:]


def _forward_loss(params, inputs, targets, min_sigma, need_grad=True):
    """Teacher-forced pass over ``inputs`` (B, L, N); the last ``T_h`` hidden states
    are scored against ``targets`` (B, T_h, N). Returns mean NLL and gradients."""
    B, L, N = inputs.shape
    T_h = targets.shape[1]
    H = params["Wh"].shape[0]
    first_out = L - T_h
    h = np.zeros((B, H))
    caches, outs = [], []
    for t in range(L):
        h, cache = _cell(params, inputs[:, t], h)
        caches.append(cache)
        if t >= first_out:
            mu, sigma, raw = _head(params, h, inputs[:, t], min_sigma)
            outs.append((h, inputs[:, t], mu, sigma, raw))
    count = B * T_h * N
    loss = 0.0
    for k, (_, _, mu, sigma, _) in enumerate(outs):
        loss += float(np.sum(nll_loss(mu, sigma, targets[:, k])))
    loss /= count
    if not need_grad:
        return loss, None

    grads = {k: np.zeros_like(v) for k, v in params.items()}
    Wh, Wx, Wo = params["Wh"], params["Wx"], params["Wo"]
    dh_out = {}
    for k, (h_k, x_k, mu, sigma, raw) in enumerate(outs):
        err = mu - targets[:, k]
        dmu = err / sigma ** 2 / count
        dsigma = (1.0 / sigma - err ** 2 / sigma ** 3) / count
        draw = dsigma * _sigmoid(raw)
        do = np.concatenate([dmu, draw], axis=1)
        grads["Wo"] += h_k.T @ do
        grads["Ws"] += x_k.T @ do
        grads["bo"] += do.sum(axis=0)
        dh_out[first_out + k] = do @ Wo.T

    dh_next = np.zeros((B, H))
    for t in range(L - 1, -1, -1):
        x, h_prev, z, r, rh, n = caches[t]
        dh = dh_next + dh_out.get(t, 0.0)
        dn = dh * (1.0 - z)
        dz = dh * (h_prev - n)
        dh_prev = dh * z
        dan = dn * (1.0 - n ** 2)
        grads["Wh"][:, 2 * H:] += rh.T @ dan
        drh = dan @ Wh[:, 2 * H:].T
        dr = drh * h_prev
        dh_prev += drh * r
        dgates = np.concatenate([dz * z * (1.0 - z), dr * r * (1.0 - r)], axis=1)
        grads["Wh"][:, :2 * H] += h_prev.T @ dgates
        dh_prev += dgates @ Wh[:, :2 * H].T
        da = np.concatenate([dgates, dan], axis=1)
        grads["Wx"] += x.T @ da
        grads["b"] += da.sum(axis=0)
        dh_next = dh_prev
    return loss, grads


def window_batch(values: np.ndarray, windows: WindowSet) -> tuple[np.ndarray, np.ndarray]:
    """Teacher-forcing inputs ``(n, C + T_h - 1, N)`` and targets ``(n, T_h, N)``."""
    C, T_h = windows.context, windows.horizon
    inputs = np.stack([values[w.t0 - C:w.t0 + T_h - 1] for w in windows])
    targets = windows.targets(values)
    return inputs, targets


def _global_clip(grads, max_norm):
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def train(series: MultivariateSeries | np.ndarray, windows: WindowSet, config: ForecasterConfig,
          init: dict[str, np.ndarray] | None = None) -> TrainedForecaster:
    """Fit by Adam on the mean per-window NLL with global-norm clipping.

    The step size decays by ``lr_decay`` every epoch.

    The last ``val_fraction`` of the windows (in time order) is held out;
    training stops once the held-out loss has not improved for ``patience``
    epochs and the best held-out parameters are returned. ``epochs`` caps
    the run. Mini-batch order comes from a permutation seeded by
    ``config.seed``, so a run is fully reproducible.
    """
    values = series.values if isinstance(series, MultivariateSeries) else np.asarray(series, dtype=float)
    if windows.context != config.context or windows.horizon != config.horizon:
        raise ForecasterError(
            f"windows (C={windows.context}, T_h={windows.horizon}) do not match config "
            f"(C={config.context}, T_h={config.horizon})"
        )
    N = values.shape[1]
    rng = np.random.default_rng(config.seed)
    params = init_params(N, config.hidden_for(N), rng) if init is None else \
        {k: np.array(v, dtype=float) for k, v in init.items()}
    inputs, targets = window_batch(values, windows)
    n_val = int(round(config.val_fraction * len(windows)))
    if n_val and len(windows) - n_val < 1:
        n_val = 0
    if n_val:
        # drop training windows whose targets overlap the held-out span
        cutoff = windows.windows[len(windows) - n_val].t0 - windows.context
        keep = np.array([w.t0 + w.horizon <= cutoff for w in windows.windows[:len(windows) - n_val]])
        if keep.any():
            val_inputs, val_targets = inputs[-n_val:], targets[-n_val:]
            inputs, targets = inputs[:-n_val][keep], targets[:-n_val][keep]
        else:
            n_val = 0
    n = inputs.shape[0]

    beta1, beta2, eps = 0.9, 0.999, 1e-8
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(p) for k, p in params.items()}
    step = 0
    trace, val_trace = [], []
    best_val, best_epoch, best_params, stale = math.inf, 0, None, 0
    for epoch in range(config.epochs):
        lr = config.learning_rate * config.lr_decay ** epoch
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = _forward_loss(params, inputs[idx], targets[idx], config.min_sigma)
            norm = _global_clip(grads, config.clip_norm)
            if not (math.isfinite(loss) and math.isfinite(norm)):
                raise TrainingDiverged(f"non-finite loss or gradient in epoch {epoch + 1}")
            step += 1
            for k in params:
                m[k] = beta1 * m[k] + (1 - beta1) * grads[k]
                v[k] = beta2 * v[k] + (1 - beta2) * grads[k] ** 2
                m_hat = m[k] / (1 - beta1 ** step)
                v_hat = v[k] / (1 - beta2 ** step)
                params[k] -= lr * m_hat / (np.sqrt(v_hat) + eps)
            total += loss * len(idx)
        trace.append(total / n)
        if not n_val:
            logger.debug("epoch %d loss %.5f", epoch + 1, trace[-1])
            continue
        val_loss, _ = _forward_loss(params, val_inputs, val_targets, config.min_sigma, need_grad=False)
        if not math.isfinite(val_loss):
            raise TrainingDiverged(f"non-finite validation loss in epoch {epoch + 1}")
        val_trace.append(val_loss)
        logger.debug("epoch %d loss %.5f val %.5f", epoch + 1, trace[-1], val_loss)
        if val_loss < best_val:
            best_val, best_epoch, stale = val_loss, epoch + 1, 0
            best_params = {k: p.copy() for k, p in params.items()}
        else:
            stale += 1
            if stale >= config.patience:
                break
    if best_params is not None:
        params = best_params
    else:
        best_epoch = len(trace)
    return TrainedForecaster(params, config, trace, val_trace, best_epoch)


def predict(model: TrainedForecaster, context: np.ndarray, horizon: int | None = None) -> PredictiveTrajectory:
    """Roll over ``context`` (C, N) or a batch (B, C, N), then decode ``horizon``
    steps feeding back the predictive means."""
    horizon = model.config.horizon if horizon is None else horizon
    if horizon < 1:
        raise ForecasterError("horizon must be >= 1")
    ctx = np.asarray(context, dtype=float)
    single = ctx.ndim == 2
    if single:
        ctx = ctx[None]
    if ctx.ndim != 3 or ctx.shape[2] != model.n_vars or ctx.shape[1] < 1:
        raise ForecasterError(f"context shape {np.shape(context)} incompatible with {model.n_vars} variables")
    p = model.params
    h = np.zeros((ctx.shape[0], model.hidden))
    for t in range(ctx.shape[1]):
        h, _ = _cell(p, ctx[:, t], h)
    x = ctx[:, -1]
    mus, sigmas = [], []
    for k in range(horizon):
        mu, sigma, _ = _head(p, h, x, model.config.min_sigma)
        mus.append(mu)
        sigmas.append(sigma)
        if k + 1 < horizon:
            x = mu
            h, _ = _cell(p, x, h)
    mu, sigma = np.stack(mus, axis=1), np.stack(sigmas, axis=1)
    if single:
        mu, sigma = mu[0], sigma[0]
    return PredictiveTrajectory(mu, sigma)


def window_loss(params: dict[str, np.ndarray], window: np.ndarray, context: int,
                min_sigma: float = 1e-3) -> tuple[float, dict[str, np.ndarray]]:
    """Teacher-forced NLL and gradients for one ``(C + T_h, N)`` block."""
    window = np.asarray(window, dtype=float)
    inputs, targets = window[None, :-1], window[None, context:]
    return _forward_loss(params, inputs, targets, min_sigma)


def gradient_check(config: ForecasterConfig, probe_data: np.ndarray, step: float = 1e-5,
                   params: dict[str, np.ndarray] | None = None) -> float:
    """Largest ``|g_a - g_fd| / max(1, |g_a|, |g_fd|)`` over every parameter.

    ``probe_data`` is one ``(C + T_h, N)`` block. Parameters are drawn from
    ``config.seed`` unless given.
    """
    probe = np.asarray(probe_data, dtype=float)
    if probe.shape[0] != config.context + config.horizon:
        raise ForecasterError("probe block must have context + horizon rows")
    N = probe.shape[1]
    if params is None:
        params = init_params(N, config.hidden_for(N), np.random.default_rng(config.seed))
        # push gates and the scale head away from their symmetric start
        params["b"] = np.random.default_rng(config.seed + 1).normal(0, 0.5, params["b"].shape)
    params = {k: np.array(v, dtype=float) for k, v in params.items()}
    _, grads = window_loss(params, probe, config.context, config.min_sigma)
    worst = 0.0
    for name, value in params.items():
        flat = value.reshape(-1)
        g_a = grads[name].reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + step
            up, _ = _forward_loss(params, probe[None, :-1], probe[None, config.context:], config.min_sigma, False)
            flat[i] = old - step
            down, _ = _forward_loss(params, probe[None, :-1], probe[None, config.context:], config.min_sigma, False)
            flat[i] = old
            g_fd = (up - down) / (2.0 * step)
            worst = max(worst, abs(g_a[i] - g_fd) / max(1.0, abs(g_a[i]), abs(g_fd)))
    return worst


def with_zeroed_inputs(model: TrainedForecaster, columns) -> TrainedForecaster:
    """Copy of ``model`` that ignores the given input columns entirely."""
    params = {k: v.copy() for k, v in model.params.items()}
    params["Wx"][list(columns), :] = 0.0
    params["Ws"][list(columns), :] = 0.0
    return TrainedForecaster(params, replace(model.config), list(model.loss_trace),
                             list(model.val_trace), model.best_epoch)
