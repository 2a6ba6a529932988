"""Neural-network canceller: a linear FIR plus a small real-valued MLP.

The FIR canceller removes the bulk of the self-interference; the MLP learns
only the residual.  Its input is the real/imaginary split of the L most
recent transmit samples, ordered [Re x(n), ..., Re x(n-L+1), Im x(n), ...,
Im x(n-L+1)], and its two linear outputs are the real and imaginary parts of
the residual estimate.  The training target is scaled by a power of two
(2**-s with s = round(log2 of the residual RMS)) so the quantised datapath
can undo the scaling with a plain arithmetic shift.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .cancellers import LinearModel, delay_matrix, fit_linear, linear_predict
from .errors import ConfigurationError, NumericError
from .signals import SignalBuffer, as_samples


@dataclass(frozen=True)
class NNModel:
    """Two-layer MLP (ReLU hidden, linear output) on top of an FIR canceller."""

    w1: np.ndarray  # [n_hidden, 2L]
    b1: np.ndarray  # [n_hidden]
    w2: np.ndarray  # [2, n_hidden]
    b2: np.ndarray  # [2]
    denorm_shift: int
    linear: LinearModel

    def __post_init__(self):
        w1 = np.asarray(self.w1, dtype=np.float64)
        b1 = np.asarray(self.b1, dtype=np.float64)
        w2 = np.asarray(self.w2, dtype=np.float64)
        b2 = np.asarray(self.b2, dtype=np.float64)
        nh = w1.shape[0]
        l2 = 2 * self.linear.memory_len
        if w1.shape != (nh, l2) or b1.shape != (nh,) or w2.shape != (2, nh) or b2.shape != (2,):
            raise ConfigurationError("inconsistent network weight shapes")
        for arr in (w1, b1, w2, b2):
            if not np.all(np.isfinite(arr)):
                raise ConfigurationError("network weights must be finite")
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "w2", w2)
        object.__setattr__(self, "b2", b2)

    @property
    def n_hidden(self) -> int:
        return int(self.w1.shape[0])

    @property
    def memory_len(self) -> int:
        return self.linear.memory_len


def make_windows(x, memory_len: int) -> np.ndarray:
    """Real input matrix [n, 2L]: delayed real parts then delayed imaginary parts."""
    samples = as_samples(x)
    if samples.size < memory_len:
        raise ConfigurationError("buffer shorter than the canceller memory")
    delayed = delay_matrix(samples, memory_len)
    return np.hstack([delayed.real, delayed.imag])


def forward(w1, b1, w2, b2, windows: np.ndarray) -> np.ndarray:
    """MLP forward pass on [n, 2L] windows; returns [n, 2] outputs."""
    z1 = windows @ w1.T + b1
    a1 = np.maximum(z1, 0.0)
    return a1 @ w2.T + b2


def nn_forward(model: NNModel, windows: np.ndarray) -> np.ndarray:
    return forward(model.w1, model.b1, model.w2, model.b2, windows)


def nn_predict(model: NNModel, x):
    """Full canceller output: FIR prediction plus the denormalised MLP output."""
    samples = as_samples(x)
    lin = linear_predict(model.linear, samples)
    out = nn_forward(model, make_windows(samples, model.memory_len))
    yhat = lin + (out[:, 0] + 1j * out[:, 1]) * 2.0**model.denorm_shift
    if isinstance(x, SignalBuffer):
        return SignalBuffer(yhat, x.sample_rate_hz)
    return yhat


def loss_and_grads(w1, b1, w2, b2, windows, targets):
    """Mean squared error over all output elements and its exact gradients.

    Kept as a pure function of the raw parameter arrays so tests can compare
    the analytic gradients against central finite differences.
    """
    n = windows.shape[0]
    z1 = windows @ w1.T + b1
    a1 = np.maximum(z1, 0.0)
    out = a1 @ w2.T + b2
    err = out - targets
    loss = float(np.mean(err**2))
    d_out = 2.0 * err / err.size
    g_w2 = d_out.T @ a1
    g_b2 = d_out.sum(axis=0)
    d_a1 = d_out @ w2
    d_z1 = d_a1 * (z1 > 0.0)
    g_w1 = d_z1.T @ windows
    g_b1 = d_z1.sum(axis=0)
    return loss, (g_w1, g_b1, g_w2, g_b2)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 3000
    batch_size: int = 512
    learning_rate: float = 3e-3
    optimizer: str = "adam"  # or "sgd"
    seed: int = 0
    val_fraction: float = 0.15
    # step schedule: halve the rate every lr_decay_every epochs (0 disables)
    lr_decay_every: int = 400
    lr_decay_factor: float = 0.5
    lr_min: float = 1e-5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigurationError("optimizer must be 'sgd' or 'adam'")
        if not 0.0 < self.val_fraction < 0.5:
            raise ConfigurationError("val_fraction must lie in (0, 0.5)")
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ConfigurationError("epochs, batch_size and learning_rate must be positive")
        if self.lr_decay_every < 0 or not 0.0 < self.lr_decay_factor <= 1.0:
            raise ConfigurationError("bad learning-rate schedule")


@dataclass
class TrainReport:
    initial_val_mse: float
    best_val_mse: float
    best_epoch: int
    epochs_run: int
    denorm_shift: int
    history: list = field(default_factory=list)


def _init_params(n_hidden: int, n_in: int, rng):
    bound1 = np.sqrt(6.0 / (n_in + n_hidden))
    bound2 = np.sqrt(6.0 / (n_hidden + 2))
    w1 = rng.uniform(-bound1, bound1, size=(n_hidden, n_in))
    w2 = rng.uniform(-bound2, bound2, size=(2, n_hidden))
    return w1, np.zeros(n_hidden), w2, np.zeros(2)


def train_nn(
    x,
    y,
    memory_len: int,
    n_hidden: int,
    cfg: TrainConfig = TrainConfig(),
    linear: LinearModel | None = None,
    ridge: float = 0.0,
):
    """Fit the FIR stage by least squares, then train the MLP on the residual.

    Deterministic for a fixed cfg.seed.  The weights returned are the snapshot
    with the best validation MSE, so the result is never worse than the
    untrained network on the validation split.

    Returns:
        (NNModel, TrainReport)
    """
    xs, ys = as_samples(x), as_samples(y)
    if xs.size != ys.size:
        raise ConfigurationError("x and y must have equal length")
    if n_hidden < 1:
        raise ConfigurationError("n_hidden must be >= 1")
    if linear is None:
        linear = fit_linear(xs, ys, memory_len, ridge=ridge)

    resid = ys - linear_predict(linear, xs)
    rms = np.sqrt(np.mean(np.abs(resid) ** 2) / 2.0)
    shift = int(np.round(np.log2(rms))) if rms > 0 else 0
    targets = np.column_stack([resid.real, resid.imag]) / 2.0**shift
    windows = make_windows(xs, memory_len)

    n = windows.shape[0]
    n_val = max(1, int(n * cfg.val_fraction))
    train_x, train_t = windows[: n - n_val], targets[: n - n_val]
    val_x, val_t = windows[n - n_val :], targets[n - n_val :]

    rng = np.random.default_rng(cfg.seed)
    params = _init_params(n_hidden, 2 * memory_len, rng)

    def val_mse(p):
        err = forward(*p, val_x) - val_t
        return float(np.mean(err**2))

    initial = val_mse(params)
    best = initial
    best_params = tuple(a.copy() for a in params)
    best_epoch = 0
    history = []

    # Adam state
    m = [np.zeros_like(a) for a in params]
    v = [np.zeros_like(a) for a in params]
    step = 0

    n_train = train_x.shape[0]
    lr = cfg.learning_rate
    for epoch in range(1, cfg.epochs + 1):
        if cfg.lr_decay_every and epoch > 1 and (epoch - 1) % cfg.lr_decay_every == 0:
            lr = max(lr * cfg.lr_decay_factor, cfg.lr_min)
        order = rng.permutation(n_train)
        for start in range(0, n_train, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads = loss_and_grads(*params, train_x[idx], train_t[idx])
            if not np.isfinite(loss):
                raise NumericError(f"training diverged at epoch {epoch} (loss={loss})")
            if cfg.optimizer == "sgd":
                params = tuple(p - lr * g for p, g in zip(params, grads))
            else:
                step += 1
                new = []
                for i, (p, g) in enumerate(zip(params, grads)):
                    m[i] = cfg.adam_beta1 * m[i] + (1 - cfg.adam_beta1) * g
                    v[i] = cfg.adam_beta2 * v[i] + (1 - cfg.adam_beta2) * g * g
                    mhat = m[i] / (1 - cfg.adam_beta1**step)
                    vhat = v[i] / (1 - cfg.adam_beta2**step)
                    new.append(p - lr * mhat / (np.sqrt(vhat) + cfg.adam_eps))
                params = tuple(new)
        cur = val_mse(params)
        history.append(cur)
        if cur < best:
            best = cur
            best_params = tuple(a.copy() for a in params)
            best_epoch = epoch

    model = NNModel(*best_params, denorm_shift=shift, linear=linear)
    report = TrainReport(
        initial_val_mse=initial,
        best_val_mse=best,
        best_epoch=best_epoch,
        epochs_run=cfg.epochs,
        denorm_shift=shift,
        history=history,
    )
    return model, report


def scale_output_layer(model: NNModel, alpha: float) -> NNModel:
    """Scale w2 by alpha; with alpha > 0 the pre-bias MLP output scales by alpha."""
    return replace(model, w2=model.w2 * alpha)
