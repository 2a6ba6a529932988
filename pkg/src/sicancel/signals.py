"""Transmit signal generation, nonlinear self-interference channel, dataset files.

The transmit waveform is OFDM: QPSK on the used subcarriers, zero-padded IFFT
for oversampling, cyclic prefix per symbol, whole buffer normalised to unit
mean power.  The channel is a Hammerstein chain: IQ imbalance, then a
memoryless odd-order polynomial amplifier, then a causal FIR with additive
complex Gaussian noise.  Both ends of a dataset file carry float64 samples so
round-trips are bit-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DataFormatError

DATASET_MAGIC = b"FDXD"
DATASET_VERSION = 1


@dataclass
class SignalBuffer:
    """Complex baseband samples plus their sample rate."""

    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.complex128)
        if arr.ndim != 1:
            raise ConfigurationError("signal buffer must be one-dimensional")
        if not np.all(np.isfinite(arr.view(np.float64))):
            raise ConfigurationError("signal buffer contains non-finite samples")
        if self.sample_rate_hz <= 0:
            raise ConfigurationError("sample rate must be positive")
        self.samples = arr

    def __len__(self) -> int:
        return self.samples.shape[0]


def as_samples(x) -> np.ndarray:
    """Accept a SignalBuffer or a bare array; return complex128 samples."""
    if isinstance(x, SignalBuffer):
        return x.samples
    return np.asarray(x, dtype=np.complex128)


@dataclass(frozen=True)
class OfdmConfig:
    fft_size: int = 64
    used_subcarriers: int = 52
    cp_length: int = 16
    oversample: int = 2
    num_symbols: int = 96
    sample_rate_hz: float = 20e6

    def __post_init__(self):
        if self.fft_size < 2 or self.fft_size & (self.fft_size - 1):
            raise ConfigurationError("fft_size must be a power of two >= 2")
        if not 0 < self.used_subcarriers < self.fft_size:
            raise ConfigurationError("used_subcarriers must lie in (0, fft_size)")
        if self.used_subcarriers % 2:
            raise ConfigurationError("used_subcarriers must be even (symmetric halves)")
        if self.cp_length < 0 or self.cp_length >= self.fft_size:
            raise ConfigurationError("cp_length must lie in [0, fft_size)")
        if self.oversample < 1:
            raise ConfigurationError("oversample must be >= 1")
        if self.num_symbols < 1:
            raise ConfigurationError("num_symbols must be >= 1")
        if self.sample_rate_hz <= 0:
            raise ConfigurationError("sample_rate_hz must be positive")

    @property
    def samples_per_symbol(self) -> int:
        return (self.fft_size + self.cp_length) * self.oversample

    @property
    def num_samples(self) -> int:
        return self.num_symbols * self.samples_per_symbol


_QPSK = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2.0)


def generate_tx(cfg: OfdmConfig, seed=1) -> SignalBuffer:
    """Generate the OFDM transmit buffer.

    Per symbol, QPSK points are drawn for the used subcarriers (positive bins
    1..K/2 first, then negative bins -1..-K/2), the zero-padded IFFT gives the
    oversampled time symbol and the cyclic prefix is prepended.  The whole
    buffer is scaled to unit mean power at the end.

    Args:
        cfg: OFDM parameters.
        seed: anything accepted by ``np.random.default_rng``.

    Returns:
        SignalBuffer of length ``cfg.num_samples`` with mean power 1.0.
    """
    rng = np.random.default_rng(seed)
    n_fft = cfg.fft_size * cfg.oversample
    half = cfg.used_subcarriers // 2
    cp = cfg.cp_length * cfg.oversample

    out = np.empty(cfg.num_samples, dtype=np.complex128)
    pos = 0
    for _ in range(cfg.num_symbols):
        points = _QPSK[rng.integers(0, 4, size=cfg.used_subcarriers)]
        spec = np.zeros(n_fft, dtype=np.complex128)
        spec[1 : half + 1] = points[:half]
        spec[n_fft - half : n_fft] = points[half:][::-1]
        sym = np.fft.ifft(spec)
        if cp:
            out[pos : pos + cp] = sym[-cp:]
        out[pos + cp : pos + cp + n_fft] = sym
        pos += cp + n_fft

    out /= np.sqrt(np.mean(np.abs(out) ** 2))
    return SignalBuffer(out, cfg.sample_rate_hz)


@dataclass(frozen=True)
class SiChainModel:
    """Hammerstein self-interference channel: IQ imbalance -> PA -> FIR + noise."""

    taps: np.ndarray
    iq_gain: complex = 1.0 + 0.0j
    iq_image: complex = 0.0j
    pa_coeffs: dict = field(default_factory=lambda: {1: 1.0 + 0.0j})
    noise_power: float = 0.0

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.complex128)
        if taps.ndim != 1 or taps.size < 1:
            raise ConfigurationError("chain taps must be a non-empty 1-D array")
        if not np.all(np.isfinite(taps.view(np.float64))):
            raise ConfigurationError("chain taps must be finite")
        object.__setattr__(self, "taps", taps)
        for p in self.pa_coeffs:
            if p < 1 or p % 2 == 0:
                raise ConfigurationError("amplifier orders must be odd and >= 1")
        if self.noise_power < 0:
            raise ConfigurationError("noise_power must be non-negative")

    @property
    def num_taps(self) -> int:
        return int(self.taps.size)


def iq_impair(x: np.ndarray, gain: complex, image: complex) -> np.ndarray:
    return gain * x + image * np.conj(x)


def pa_apply(x: np.ndarray, coeffs: dict) -> np.ndarray:
    """Memoryless odd-order polynomial amplifier: sum_p a_p * x * |x|^(p-1)."""
    mag2 = np.abs(x) ** 2
    out = np.zeros_like(x)
    for p, a in sorted(coeffs.items()):
        out = out + a * x * mag2 ** ((p - 1) // 2)
    return out


def apply_si_chain(model: SiChainModel, x, noise_seed=None) -> SignalBuffer:
    """Run the transmit buffer through the channel.

    The FIR part is causal with zero history before the first sample.  Noise
    is complex white Gaussian with total power ``model.noise_power``, drawn
    from ``np.random.default_rng(noise_seed)``; pass None for a noiseless run
    regardless of the configured power.
    """
    samples = as_samples(x)
    rate = x.sample_rate_hz if isinstance(x, SignalBuffer) else 1.0
    d = pa_apply(iq_impair(samples, model.iq_gain, model.iq_image), model.pa_coeffs)
    y = np.convolve(d, model.taps)[: samples.size]
    if noise_seed is not None and model.noise_power > 0:
        rng = np.random.default_rng(noise_seed)
        scale = np.sqrt(model.noise_power / 2.0)
        y = y + scale * (rng.standard_normal(samples.size) + 1j * rng.standard_normal(samples.size))
    return SignalBuffer(y, rate)


def default_chain(
    num_taps: int = 8,
    tap_decay: float = 2.0,
    tap_phase_step: float = 2.39996323,
    iq_gain: complex = 1.0 + 0.0j,
    iq_image: complex = 0.09 * np.exp(0.3j),
    pa_a1: complex = 1.0 + 0.0j,
    pa_a3: complex = 8e-3 * np.exp(-0.2j),
    pa_a5: complex = 3e-4 * np.exp(0.5j),
    pa_a7: complex = 3e-5 * np.exp(-0.8j),
    noise_power: float = 1e-4,
) -> SiChainModel:
    """Build the default channel: unit-energy exponentially decaying taps.

    The default numbers put the linear-only residual roughly 19 dB above the
    noise floor (image-dominated, with a mild cubic term and faint 5th/7th
    order tails), which keeps the polynomial and NN cancellers separable from
    the FIR canceller while staying inside what an 18-neuron network can fit.
    """
    l = np.arange(num_taps)
    taps = np.exp(-tap_decay * l) * np.exp(1j * tap_phase_step * l)
    taps /= np.sqrt(np.sum(np.abs(taps) ** 2))
    return SiChainModel(
        taps=taps,
        iq_gain=complex(iq_gain),
        iq_image=complex(iq_image),
        pa_coeffs={1: complex(pa_a1), 3: complex(pa_a3), 5: complex(pa_a5), 7: complex(pa_a7)},
        noise_power=noise_power,
    )


def make_dataset(cfg: OfdmConfig, chain: SiChainModel, seed=1):
    """Generate an aligned (transmit, received) pair with derived sub-seeds."""
    x = generate_tx(cfg, seed=[seed, 0])
    y = apply_si_chain(chain, x, noise_seed=[seed, 1])
    return x, y


def write_dataset(path, x: SignalBuffer, y: SignalBuffer) -> None:
    """Write an aligned dataset: magic, version, count, rate, then per-sample
    (x.re, x.im, y.re, y.im) as little-endian float64."""
    xs, ys = x.samples, y.samples
    if xs.size != ys.size:
        raise ConfigurationError("transmit and receive buffers must have equal length")
    header = DATASET_MAGIC + struct.pack("<IQd", DATASET_VERSION, xs.size, x.sample_rate_hz)
    records = np.empty((xs.size, 4), dtype="<f8")
    records[:, 0] = xs.real
    records[:, 1] = xs.imag
    records[:, 2] = ys.real
    records[:, 3] = ys.imag
    with open(path, "wb") as f:
        f.write(header)
        f.write(records.tobytes())


def read_dataset(path):
    """Read a dataset file; returns (x, y) SignalBuffers."""
    with open(path, "rb") as f:
        blob = f.read()
    head = struct.calcsize("<IQd")
    if len(blob) < 4 + head or blob[:4] != DATASET_MAGIC:
        raise DataFormatError(f"{path}: not a dataset file")
    version, count, rate = struct.unpack("<IQd", blob[4 : 4 + head])
    if version != DATASET_VERSION:
        raise DataFormatError(f"{path}: unsupported dataset version {version}")
    body = blob[4 + head :]
    if len(body) != count * 4 * 8:
        raise DataFormatError(f"{path}: truncated dataset (expected {count} samples)")
    records = np.frombuffer(body, dtype="<f8").reshape(count, 4)
    x = SignalBuffer(records[:, 0] + 1j * records[:, 1], rate)
    y = SignalBuffer(records[:, 2] + 1j * records[:, 3], rate)
    return x, y
