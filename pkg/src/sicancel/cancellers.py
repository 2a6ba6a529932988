"""Linear FIR and memory-polynomial cancellers with least-squares fitting.

The polynomial canceller models the received self-interference as

    yhat(n) = sum_{p odd} sum_{q=0}^{p} sum_{l=0}^{L-1}
              h[p,q,l] * x(n-l)^q * conj(x(n-l))^(p-q)

with odd orders up to P.  Basis columns are enumerated in one canonical order
everywhere in the package: delay l outer, order p next (1, 3, ..., P), then q
from 0 to p.  A history of zeros is assumed before the first sample, so
prediction and fitting agree on the warm-up rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericError
from .signals import SignalBuffer, as_samples


def num_basis(memory_len: int, max_order: int) -> int:
    """Number of basis terms: L * (P+1) * (P+3) / 4 for odd P."""
    return memory_len * (max_order + 1) * (max_order + 3) // 4


def basis_terms(memory_len: int, max_order: int):
    """Yield (l, p, q) in the canonical column order."""
    for l in range(memory_len):
        for p in range(1, max_order + 1, 2):
            for q in range(p + 1):
                yield l, p, q


@dataclass(frozen=True)
class LinearModel:
    """FIR canceller: yhat(n) = sum_l taps[l] * x(n-l)."""

    taps: np.ndarray

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.complex128)
        if taps.ndim != 1 or taps.size < 1:
            raise ConfigurationError("linear model needs at least one tap")
        object.__setattr__(self, "taps", taps)

    @property
    def memory_len(self) -> int:
        return int(self.taps.size)


@dataclass(frozen=True)
class PolyModel:
    """Memory-polynomial canceller; coeffs follow the canonical term order."""

    coeffs: np.ndarray
    memory_len: int
    max_order: int

    def __post_init__(self):
        if self.max_order < 1 or self.max_order % 2 == 0:
            raise ConfigurationError("max_order must be odd and >= 1")
        if self.memory_len < 1:
            raise ConfigurationError("memory_len must be >= 1")
        coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        expected = num_basis(self.memory_len, self.max_order)
        if coeffs.shape != (expected,):
            raise ConfigurationError(
                f"expected {expected} coefficients for L={self.memory_len}, P={self.max_order}"
            )
        object.__setattr__(self, "coeffs", coeffs)


def delay_matrix(x: np.ndarray, memory_len: int) -> np.ndarray:
    """Columns x(n), x(n-1), ..., x(n-L+1) with zeros before the first sample."""
    n = x.size
    out = np.zeros((n, memory_len), dtype=np.complex128)
    for l in range(memory_len):
        out[l:, l] = x[: n - l]
    return out


def build_basis(x, memory_len: int, max_order: int) -> np.ndarray:
    """Basis matrix [n_samples, num_basis] in canonical column order."""
    samples = as_samples(x)
    if samples.size < memory_len:
        raise ConfigurationError("buffer shorter than the canceller memory")
    delayed = delay_matrix(samples, memory_len)
    cols = np.empty((samples.size, num_basis(memory_len, max_order)), dtype=np.complex128)
    i = 0
    for l in range(memory_len):
        u = delayed[:, l]
        uc = np.conj(u)
        for p in range(1, max_order + 1, 2):
            for q in range(p + 1):
                cols[:, i] = u**q * uc ** (p - q)
                i += 1
    return cols


def _solve_ls(a: np.ndarray, b: np.ndarray, ridge: float) -> np.ndarray:
    """Least squares with optional Tikhonov term; rank-deficient unregularised
    systems are rejected rather than silently resolved by the pseudo-inverse."""
    if ridge < 0:
        raise ConfigurationError("ridge must be non-negative")
    if ridge > 0:
        a = np.vstack([a, np.sqrt(ridge) * np.eye(a.shape[1], dtype=a.dtype)])
        b = np.concatenate([b, np.zeros(a.shape[1], dtype=b.dtype)])
    coef, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
    if ridge == 0 and rank < a.shape[1]:
        raise NumericError(
            f"rank-deficient fit ({rank}/{a.shape[1]}); add ridge regularisation"
        )
    return coef


def fit_linear(x, y, memory_len: int, ridge: float = 0.0) -> LinearModel:
    xs, ys = as_samples(x), as_samples(y)
    if xs.size != ys.size:
        raise ConfigurationError("x and y must have equal length")
    if xs.size < memory_len:
        raise ConfigurationError("need at least memory_len samples to fit")
    a = delay_matrix(xs, memory_len)
    return LinearModel(_solve_ls(a, ys, ridge))


def fit_poly(x, y, memory_len: int, max_order: int, ridge: float = 0.0) -> PolyModel:
    xs, ys = as_samples(x), as_samples(y)
    if xs.size != ys.size:
        raise ConfigurationError("x and y must have equal length")
    nb = num_basis(memory_len, max_order)
    if xs.size < nb:
        raise ConfigurationError(f"need at least {nb} samples to fit {nb} coefficients")
    a = build_basis(xs, memory_len, max_order)
    return PolyModel(_solve_ls(a, ys, ridge), memory_len, max_order)


def linear_predict(model: LinearModel, x):
    samples = as_samples(x)
    if samples.size < model.memory_len:
        raise ConfigurationError("buffer shorter than the canceller memory")
    yhat = np.convolve(samples, model.taps)[: samples.size]
    if isinstance(x, SignalBuffer):
        return SignalBuffer(yhat, x.sample_rate_hz)
    return yhat


def poly_predict(model: PolyModel, x):
    basis = build_basis(x, model.memory_len, model.max_order)
    yhat = basis @ model.coeffs
    if isinstance(x, SignalBuffer):
        return SignalBuffer(yhat, x.sample_rate_hz)
    return yhat


def cancel(y, yhat):
    """Residual after cancellation: y - yhat."""
    ys, hs = as_samples(y), as_samples(yhat)
    if ys.size != hs.size:
        raise ConfigurationError("y and yhat must have equal length")
    resid = ys - hs
    if isinstance(y, SignalBuffer):
        return SignalBuffer(resid, y.sample_rate_hz)
    return resid


def poly_from_linear(model: LinearModel) -> PolyModel:
    """Embed an FIR canceller as a P=1 polynomial (conjugate terms zero)."""
    coeffs = np.zeros(num_basis(model.memory_len, 1), dtype=np.complex128)
    for i, (l, _, q) in enumerate(basis_terms(model.memory_len, 1)):
        if q == 1:
            coeffs[i] = model.taps[l]
    return PolyModel(coeffs, model.memory_len, 1)
