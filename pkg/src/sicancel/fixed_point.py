"""Saturating two's-complement fixed-point arithmetic and model quantization.

A format Q<total>.<frac> stores values as raw integers in
[-2^(Q-1), 2^(Q-1)-1] scaled by 2^-F.  All rounding is round-to-nearest with
ties away from zero; every add and multiply saturates instead of wrapping.
Multiplies keep the full double-width product internally and rescale once.

Two implementations of the same semantics live here on purpose: scalar ops on
FxValue (plain Python integers, used by tests and small tools) and vectorized
kernels on int64 arrays (used by the evaluators and the cycle simulator).
They must agree bit-for-bit; the test suite checks both against an
arbitrary-precision oracle.

Complex multiplies use the 3-multiplier form (3 real multiplies, 5 real
adds): t1 = b_re*(a_re+a_im), t2 = a_re*(b_im-b_re), t3 = a_im*(b_re+b_im),
result = (t1-t3) + j(t1+t2).  The operand order matters for rounding, so call
sites fix it: coefficient first, data second for MAC terms; running basis
value first, u^2 or conj(u^2) second inside the polynomial basis ladder.
"""

from __future__ import annotations

import math
import re as _re
from dataclasses import dataclass

import numpy as np

from .cancellers import (
    LinearModel,
    PolyModel,
    basis_terms,
    build_basis,
    delay_matrix,
    linear_predict,
)
from .errors import ConfigurationError, NumericError
from .network import NNModel, make_windows
from .signals import as_samples

_FMT_RE = _re.compile(r"^Q(\d+)\.(\d+)$")


@dataclass(frozen=True)
class FxFormat:
    total_bits: int
    frac_bits: int

    def __post_init__(self):
        if not 2 <= self.total_bits <= 32:
            raise ConfigurationError("total_bits must lie in [2, 32]")
        if not 0 <= self.frac_bits < self.total_bits:
            raise ConfigurationError("frac_bits must lie in [0, total_bits)")

    @property
    def raw_min(self) -> int:
        return -(1 << (self.total_bits - 1))

    @property
    def raw_max(self) -> int:
        return (1 << (self.total_bits - 1)) - 1

    @property
    def resolution(self) -> float:
        return 2.0**-self.frac_bits

    def __str__(self) -> str:
        return f"Q{self.total_bits}.{self.frac_bits}"

    @classmethod
    def parse(cls, text: str) -> "FxFormat":
        m = _FMT_RE.match(text.strip())
        if not m:
            raise ConfigurationError(f"bad fixed-point format {text!r}, expected Q<total>.<frac>")
        return cls(int(m.group(1)), int(m.group(2)))


# ---------------------------------------------------------------- scalar ops

def quantize_value(v: float, fmt: FxFormat) -> int:
    """Float -> raw integer: scale, round half away from zero, saturate."""
    if not math.isfinite(v):
        raise NumericError(f"cannot quantize non-finite value {v!r}")
    scaled = v * (1 << fmt.frac_bits)
    raw = math.floor(abs(scaled) + 0.5)
    if scaled < 0:
        raw = -raw
    return min(max(raw, fmt.raw_min), fmt.raw_max)


def to_float(raw, fmt: FxFormat):
    return raw * fmt.resolution


def _sat(raw: int, fmt: FxFormat) -> int:
    return min(max(raw, fmt.raw_min), fmt.raw_max)


def _round_shift(p: int, shift: int) -> int:
    # round-to-nearest, ties away from zero, on p / 2**shift
    if shift == 0:
        return p
    half = 1 << (shift - 1)
    if p >= 0:
        return (p + half) >> shift
    return -((-p + half) >> shift)


def add_raw(a: int, b: int, fmt: FxFormat) -> int:
    return _sat(a + b, fmt)


def sub_raw(a: int, b: int, fmt: FxFormat) -> int:
    return _sat(a - b, fmt)


def neg_raw(a: int, fmt: FxFormat) -> int:
    return _sat(-a, fmt)


def mul_raw(a: int, b: int, fmt: FxFormat) -> int:
    return _sat(_round_shift(a * b, fmt.frac_bits), fmt)


def shift_raw(a: int, shift: int, fmt: FxFormat) -> int:
    """Multiply by 2**shift: left shifts saturate, right shifts round."""
    if abs(shift) > 32:
        raise ConfigurationError("shift magnitude limited to 32")
    if shift >= 0:
        return _sat(a << shift, fmt)
    return _sat(_round_shift(a, -shift), fmt)


@dataclass(frozen=True)
class FxValue:
    raw: int
    fmt: FxFormat

    @property
    def value(self) -> float:
        return to_float(self.raw, self.fmt)

    @classmethod
    def from_float(cls, v: float, fmt: FxFormat) -> "FxValue":
        return cls(quantize_value(v, fmt), fmt)


def _same_fmt(a: FxValue, b: FxValue) -> FxFormat:
    if a.fmt != b.fmt:
        raise ConfigurationError(f"format mismatch: {a.fmt} vs {b.fmt}")
    return a.fmt


def fx_add(a: FxValue, b: FxValue) -> FxValue:
    fmt = _same_fmt(a, b)
    return FxValue(add_raw(a.raw, b.raw, fmt), fmt)


def fx_sub(a: FxValue, b: FxValue) -> FxValue:
    fmt = _same_fmt(a, b)
    return FxValue(sub_raw(a.raw, b.raw, fmt), fmt)


def fx_mul(a: FxValue, b: FxValue) -> FxValue:
    fmt = _same_fmt(a, b)
    return FxValue(mul_raw(a.raw, b.raw, fmt), fmt)


def fx_shift(a: FxValue, shift: int) -> FxValue:
    return FxValue(shift_raw(a.raw, shift, a.fmt), a.fmt)


def fx_relu(a: FxValue) -> FxValue:
    return FxValue(max(a.raw, 0), a.fmt)


# ------------------------------------------------------------ vector kernels

def quantize_array(values, fmt: FxFormat) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NumericError("cannot quantize non-finite values")
    scaled = arr * float(1 << fmt.frac_bits)
    raw = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    return np.clip(raw, fmt.raw_min, fmt.raw_max).astype(np.int64)


def _vsat(raw: np.ndarray, fmt: FxFormat) -> np.ndarray:
    return np.clip(raw, fmt.raw_min, fmt.raw_max)


def _vround_shift(p: np.ndarray, shift: int) -> np.ndarray:
    if shift == 0:
        return p
    half = np.int64(1) << np.int64(shift - 1)
    mag = (np.abs(p) + half) >> np.int64(shift)
    return np.where(p >= 0, mag, -mag)


def vadd(a, b, fmt: FxFormat) -> np.ndarray:
    return _vsat(np.add(a, b, dtype=np.int64), fmt)


def vsub(a, b, fmt: FxFormat) -> np.ndarray:
    return _vsat(np.subtract(a, b, dtype=np.int64), fmt)


def vmul(a, b, fmt: FxFormat) -> np.ndarray:
    p = np.multiply(a, b, dtype=np.int64)  # |a*b| <= 2^62 for Q <= 32
    return _vsat(_vround_shift(p, fmt.frac_bits), fmt)


def vshift(a, shift: int, fmt: FxFormat) -> np.ndarray:
    if abs(shift) > 32:
        raise ConfigurationError("shift magnitude limited to 32")
    a = np.asarray(a, dtype=np.int64)
    if shift >= 0:
        # decide saturation before shifting so the int64 product cannot wrap
        over = a > (fmt.raw_max >> shift)
        under = a < -((-fmt.raw_min) >> shift)
        shifted = np.where(over | under, 0, a) << np.int64(shift)
        return np.where(over, fmt.raw_max, np.where(under, fmt.raw_min, shifted))
    return _vsat(_vround_shift(a, -shift), fmt)


def vrelu(a, fmt: FxFormat) -> np.ndarray:
    del fmt  # range unchanged by clamping at zero
    return np.maximum(a, 0)


def cmul3(a_re, a_im, b_re, b_im, fmt: FxFormat):
    """3-multiplier complex product; works on scalars and int64 arrays alike."""
    if isinstance(a_re, np.ndarray) or isinstance(b_re, np.ndarray):
        t1 = vmul(b_re, vadd(a_re, a_im, fmt), fmt)
        t2 = vmul(a_re, vsub(b_im, b_re, fmt), fmt)
        t3 = vmul(a_im, vadd(b_re, b_im, fmt), fmt)
        return vsub(t1, t3, fmt), vadd(t1, t2, fmt)
    t1 = mul_raw(b_re, add_raw(a_re, a_im, fmt), fmt)
    t2 = mul_raw(a_re, sub_raw(b_im, b_re, fmt), fmt)
    t3 = mul_raw(a_im, add_raw(b_re, b_im, fmt), fmt)
    return sub_raw(t1, t3, fmt), add_raw(t1, t2, fmt)


def cadd(a_re, a_im, b_re, b_im, fmt: FxFormat):
    if isinstance(a_re, np.ndarray) or isinstance(b_re, np.ndarray):
        return vadd(a_re, b_re, fmt), vadd(a_im, b_im, fmt)
    return add_raw(a_re, b_re, fmt), add_raw(a_im, b_im, fmt)


def basis_ladder(u_re, u_im, max_order: int, fmt: FxFormat):
    """Fixed-point memory-polynomial basis values for one delay.

    Returns [(re, im), ...] over (p, q) in canonical order (p ascending, q
    ascending).  Recurrence: row 1 is [conj(u), u]; interior terms of row p
    scale row p-2 terms by |u|^2 (two real multiplies), the edges multiply by
    conj(u)^2 and u^2 (one complex multiply each).  Works on scalars and on
    int64 sample arrays.
    """
    vec = isinstance(u_re, np.ndarray)

    def neg(x):
        return vsub(np.int64(0), x, fmt) if vec else neg_raw(x, fmt)

    def mul(x, y):
        return vmul(x, y, fmt) if vec else mul_raw(x, y, fmt)

    def add(x, y):
        return vadd(x, y, fmt) if vec else add_raw(x, y, fmt)

    mag2 = add(mul(u_re, u_re), mul(u_im, u_im))
    sq_re, sq_im = cmul3(u_re, u_im, u_re, u_im, fmt)
    sqc_re, sqc_im = sq_re, neg(sq_im)

    rows = {1: [(u_re, neg(u_im)), (u_re, u_im)]}
    for p in range(3, max_order + 1, 2):
        prev = rows[p - 2]
        row = [cmul3(prev[0][0], prev[0][1], sqc_re, sqc_im, fmt)]
        for q in range(1, p):
            pr, pi = prev[q - 1]
            row.append((mul(pr, mag2), mul(pi, mag2)))
        row.append(cmul3(prev[p - 2][0], prev[p - 2][1], sq_re, sq_im, fmt))
        rows[p] = row

    out = []
    for p in range(1, max_order + 1, 2):
        out.extend(rows[p])
    return out


# ------------------------------------------------------- quantized models

@dataclass(frozen=True)
class QuantLinearModel:
    taps_re: np.ndarray  # int64 [L]
    taps_im: np.ndarray
    fmt: FxFormat

    @property
    def memory_len(self) -> int:
        return int(self.taps_re.size)


@dataclass(frozen=True)
class QuantPolyModel:
    """Quantized memory polynomial.

    The datapath consumes the input scaled down by 2^input_shift, and every
    order-p coefficient is pre-scaled by 2^(p*input_shift) to compensate, so
    outputs keep their physical scale.  The rescaling keeps basis values near
    unity instead of letting the high-order powers blow past the integer
    range of the shared format.
    """

    coef_re: np.ndarray  # int64 [num_basis], canonical order, pre-scaled
    coef_im: np.ndarray
    memory_len: int
    max_order: int
    fmt: FxFormat
    input_shift: int = 0


@dataclass(frozen=True)
class QuantNNModel:
    w1: np.ndarray  # int64 [n_hidden, 2L]
    b1: np.ndarray
    w2: np.ndarray  # int64 [2, n_hidden]
    b2: np.ndarray
    denorm_shift: int
    linear: QuantLinearModel
    fmt: FxFormat

    @property
    def n_hidden(self) -> int:
        return int(self.w1.shape[0])

    @property
    def memory_len(self) -> int:
        return self.linear.memory_len


@dataclass(frozen=True)
class QuantizationReport:
    max_abs_error: float
    saturated_count: int


def _quant_with_stats(arr, fmt: FxFormat):
    arr = np.asarray(arr, dtype=np.float64)
    raw = quantize_array(arr, fmt)
    err = float(np.max(np.abs(raw * fmt.resolution - arr))) if arr.size else 0.0
    sat = int(np.count_nonzero((raw == fmt.raw_min) | (raw == fmt.raw_max)))
    return raw, err, sat


def scaled_poly_coeffs(model: PolyModel, input_shift: int) -> np.ndarray:
    """Coefficients compensated for an input scaled down by 2^input_shift."""
    orders = np.array(
        [p for _, p, _ in basis_terms(model.memory_len, model.max_order)], dtype=np.float64
    )
    return model.coeffs * 2.0 ** (orders * input_shift)


def quantize_model(model, fmt: FxFormat, input_shift: int = 0, hidden_shift: int = 0):
    """Quantize a canceller's coefficients; returns (quantized, report).

    input_shift only applies to the memory polynomial, whose datapath runs on
    a power-of-two-scaled copy of the input (see QuantPolyModel).  Similarly
    hidden_shift only applies to the neural canceller: the hidden layer is
    scaled down by 2^hidden_shift (exact, since the activation commutes with
    positive scaling) and the denormalization shift grows to compensate, so
    pre-activations stay inside the integer range of the shared format.
    """
    err = 0.0
    sat = 0

    def q(arr):
        nonlocal err, sat
        raw, e, s = _quant_with_stats(arr, fmt)
        err = max(err, e)
        sat += s
        return raw

    if input_shift and not isinstance(model, PolyModel):
        raise ConfigurationError("input_shift is only meaningful for a memory polynomial")
    if hidden_shift and not isinstance(model, NNModel):
        raise ConfigurationError("hidden_shift is only meaningful for a neural canceller")
    if isinstance(model, LinearModel):
        qm = QuantLinearModel(q(model.taps.real), q(model.taps.imag), fmt)
    elif isinstance(model, PolyModel):
        coeffs = scaled_poly_coeffs(model, input_shift)
        qm = QuantPolyModel(
            q(coeffs.real), q(coeffs.imag),
            model.memory_len, model.max_order, fmt, input_shift,
        )
    elif isinstance(model, NNModel):
        down = 2.0**-hidden_shift
        qlin = QuantLinearModel(q(model.linear.taps.real), q(model.linear.taps.imag), fmt)
        qm = QuantNNModel(
            q(model.w1 * down), q(model.b1 * down), q(model.w2), q(model.b2 * down),
            model.denorm_shift + hidden_shift, qlin, fmt,
        )
    else:
        raise ConfigurationError(f"cannot quantize object of type {type(model).__name__}")
    return qm, QuantizationReport(err, sat)


# ------------------------------------------------- format calibration

def _int_bits_for(max_abs: float) -> int:
    if max_abs <= 0:
        return 0
    return math.frexp(max_abs)[1]  # floor(log2) + 1


def format_for_max(max_abs: float, total_bits: int) -> FxFormat:
    frac = total_bits - 1 - _int_bits_for(max_abs)
    return FxFormat(total_bits, min(max(frac, 0), total_bits - 1))


def _running_max(*arrays) -> float:
    m = 0.0
    for a in arrays:
        if a.size:
            m = max(m, float(np.max(np.abs(a))))
    return m


def poly_input_shift(x_calib) -> int:
    """Right-shift that brings the calibration input inside the unit circle.

    Minimal by design: every extra shift bit multiplies the top-order
    coefficient by 2^max_order and eats integer bits again.
    """
    xs = as_samples(x_calib)
    peak = _running_max(xs.real, xs.imag)
    return max(0, _int_bits_for(peak))


def calibration_max_abs(model, x, input_shift: int = 0, hidden_shift: int = 0) -> float:
    """Largest magnitude any Q-bit register sees in a float dry run.

    Covers inputs, coefficients, per-term products, running partial sums in
    the sequential evaluation order, basis values, neuron pre-activations and
    outputs, and the final canceller output.
    """
    xs = as_samples(x)

    if input_shift and not isinstance(model, PolyModel):
        raise ConfigurationError("input_shift is only meaningful for a memory polynomial")
    if hidden_shift and not isinstance(model, NNModel):
        raise ConfigurationError("hidden_shift is only meaningful for a neural canceller")

    if isinstance(model, LinearModel):
        d = delay_matrix(xs, model.memory_len)
        prods = d * model.taps
        partial = np.cumsum(prods, axis=1)
        return _running_max(
            xs.real, xs.imag,
            model.taps.real, model.taps.imag,
            prods.real, prods.imag, partial.real, partial.imag,
        )

    if isinstance(model, PolyModel):
        xs = xs * 2.0**-input_shift
        coeffs = scaled_poly_coeffs(model, input_shift)
        basis = build_basis(xs, model.memory_len, model.max_order)
        prods = basis * coeffs
        partial = np.cumsum(prods, axis=1)
        mag2 = np.abs(delay_matrix(xs, model.memory_len)) ** 2
        return _running_max(
            xs.real, xs.imag,
            coeffs.real, coeffs.imag,
            basis.real, basis.imag, mag2,
            prods.real, prods.imag, partial.real, partial.imag,
        )

    if isinstance(model, NNModel):
        down = 2.0**-hidden_shift
        w1, b1, b2 = model.w1 * down, model.b1 * down, model.b2 * down
        shift = model.denorm_shift + hidden_shift
        win = make_windows(xs, model.memory_len)
        prods1 = win[:, None, :] * w1[None, :, :]
        part1 = np.cumsum(prods1, axis=2)
        z1 = part1[:, :, -1] + b1
        a1 = np.maximum(z1, 0.0)
        prods2 = a1[:, None, :] * model.w2[None, :, :]
        part2 = np.cumsum(prods2, axis=2)
        out = part2[:, :, -1] + b2
        shifted = out * 2.0**shift
        lin_max = calibration_max_abs(model.linear, xs)
        final = linear_predict(model.linear, xs) + (out[:, 0] + 1j * out[:, 1]) * 2.0**shift
        return max(
            lin_max,
            _running_max(
                w1, b1, model.w2, b2,
                prods1, part1, z1, prods2, part2, out, shifted,
                final.real, final.imag,
            ),
        )

    raise ConfigurationError(f"cannot calibrate object of type {type(model).__name__}")


def nn_hidden_shift(model: NNModel, x_calib) -> int:
    """Smallest hidden-layer right-shift that minimizes integer bits needed."""
    best = 0
    best_bits = _int_bits_for(calibration_max_abs(model, x_calib))
    for h in range(1, 7):
        bits = _int_bits_for(calibration_max_abs(model, x_calib, hidden_shift=h))
        if bits < best_bits:
            best, best_bits = h, bits
    return best


def scale_plan(model, x_calib):
    """Power-of-two rescaling for a model's datapath: (input_shift, hidden_shift)."""
    if isinstance(model, PolyModel):
        return poly_input_shift(x_calib), 0
    if isinstance(model, NNModel):
        return 0, nn_hidden_shift(model, x_calib)
    return 0, 0


def calibrate_format(model, x_calib, total_bits: int):
    """Pick the width split and rescaling for a model on a calibration buffer.

    Returns (fmt, input_shift, hidden_shift): one sign bit, enough integer
    bits for the largest magnitude the rescaled datapath produces, the rest
    fractional.
    """
    in_shift, hid_shift = scale_plan(model, x_calib)
    max_abs = calibration_max_abs(model, x_calib, in_shift, hid_shift)
    return format_for_max(max_abs, total_bits), in_shift, hid_shift


# ------------------------------------------- sequential quantized evaluation
#
# These evaluate the quantized cancellers in plain sequential order (terms and
# neuron inputs accumulated one by one, ascending).  The cycle-accurate
# simulator reproduces exactly this arithmetic when run with a single
# processing element per stage; wider configurations regroup the additions.

def fx_window_raw(x, memory_len: int, fmt: FxFormat):
    xs = as_samples(x)
    if xs.size < memory_len:
        raise ConfigurationError("buffer shorter than the canceller memory")
    d = delay_matrix(xs, memory_len)
    return quantize_array(d.real, fmt), quantize_array(d.imag, fmt)


def fx_linear_outputs(qlin: QuantLinearModel, win_re, win_im):
    """FIR MAC over delays, coefficient-first complex multiplies; [N] raws."""
    fmt = qlin.fmt
    acc_re = acc_im = None
    for l in range(qlin.memory_len):
        pr, pi = cmul3(qlin.taps_re[l], qlin.taps_im[l], win_re[:, l], win_im[:, l], fmt)
        if acc_re is None:
            acc_re, acc_im = pr, pi
        else:
            acc_re, acc_im = cadd(acc_re, acc_im, pr, pi, fmt)
    return acc_re, acc_im


def fx_poly_outputs(qpoly: QuantPolyModel, win_re, win_im):
    """Memory-polynomial MAC over canonical terms; returns [N] raws."""
    fmt = qpoly.fmt
    per_delay = (qpoly.max_order + 1) * (qpoly.max_order + 3) // 4
    acc_re = acc_im = None
    for l in range(qpoly.memory_len):
        terms = basis_ladder(win_re[:, l], win_im[:, l], qpoly.max_order, fmt)
        for t, (b_re, b_im) in enumerate(terms):
            i = l * per_delay + t
            pr, pi = cmul3(qpoly.coef_re[i], qpoly.coef_im[i], b_re, b_im, fmt)
            if acc_re is None:
                acc_re, acc_im = pr, pi
            else:
                acc_re, acc_im = cadd(acc_re, acc_im, pr, pi, fmt)
    return acc_re, acc_im


def fx_mlp_outputs(qnn: QuantNNModel, win2_raw):
    """Hidden then output layer, sequential accumulation; [N, 2] raws."""
    fmt = qnn.fmt
    n = win2_raw.shape[0]
    hidden = np.empty((n, qnn.n_hidden), dtype=np.int64)
    for j in range(qnn.n_hidden):
        acc = vmul(qnn.w1[j, 0], win2_raw[:, 0], fmt)
        for i in range(1, win2_raw.shape[1]):
            acc = vadd(acc, vmul(qnn.w1[j, i], win2_raw[:, i], fmt), fmt)
        hidden[:, j] = vrelu(vadd(acc, qnn.b1[j], fmt), fmt)
    out = np.empty((n, 2), dtype=np.int64)
    for j in range(2):
        acc = vmul(qnn.w2[j, 0], hidden[:, 0], fmt)
        for i in range(1, qnn.n_hidden):
            acc = vadd(acc, vmul(qnn.w2[j, i], hidden[:, i], fmt), fmt)
        out[:, j] = vadd(acc, qnn.b2[j], fmt)
    return out


def fx_nn_canceller(qnn: QuantNNModel, x):
    """Quantized FIR + MLP canceller; returns ([N] re raws, [N] im raws)."""
    fmt = qnn.fmt
    win_re, win_im = fx_window_raw(x, qnn.memory_len, fmt)
    lin_re, lin_im = fx_linear_outputs(qnn.linear, win_re, win_im)
    win2 = np.hstack([win_re, win_im])
    out = fx_mlp_outputs(qnn, win2)
    nn_re = vshift(out[:, 0], qnn.denorm_shift, fmt)
    nn_im = vshift(out[:, 1], qnn.denorm_shift, fmt)
    return cadd(lin_re, lin_im, nn_re, nn_im, fmt)


def fx_poly_canceller(qpoly: QuantPolyModel, x):
    fmt = qpoly.fmt
    xs = as_samples(x) * 2.0**-qpoly.input_shift
    win_re, win_im = fx_window_raw(xs, qpoly.memory_len, fmt)
    return fx_poly_outputs(qpoly, win_re, win_im)


def fx_linear_canceller(qlin: QuantLinearModel, x):
    win_re, win_im = fx_window_raw(x, qlin.memory_len, qlin.fmt)
    return fx_linear_outputs(qlin, win_re, win_im)
