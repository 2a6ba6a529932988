"""Cancellation metric and fixed-point bit-width sweeps.

cancellation_db is negative when the canceller helps: -10*log10 of received
power over residual power, computed after a warm-up skip so filter start-up
transients stay out of the ratio.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .cancellers import LinearModel, PolyModel, linear_predict, poly_predict
from .errors import ConfigurationError
from .fixed_point import (
    calibration_max_abs,
    format_for_max,
    fx_linear_canceller,
    fx_nn_canceller,
    fx_poly_canceller,
    quantize_model,
    scale_plan,
)
from .network import NNModel, nn_predict
from .signals import as_samples

SWEEP_CSV_HEADER = ["q", "canceller", "frac_bits", "cancellation_db"]

# Samples from the head of the training split used to pick fraction bits.
CALIBRATION_SAMPLES = 2048


def cancellation_db(y, residual, skip: int = 0) -> float:
    """Residual-to-received power ratio in dB over samples n >= skip."""
    ys, rs = as_samples(y), as_samples(residual)
    if ys.size != rs.size:
        raise ConfigurationError("buffers must have equal length")
    if not 0 <= skip < ys.size:
        raise ConfigurationError("skip must lie in [0, len)")
    p_y = float(np.sum(np.abs(ys[skip:]) ** 2))
    p_r = float(np.sum(np.abs(rs[skip:]) ** 2))
    if p_y == 0.0:
        raise ConfigurationError("received buffer has zero power after skip")
    if p_r == 0.0:
        return -math.inf
    return -10.0 * math.log10(p_y / p_r)


def model_kind(model) -> str:
    from .fixed_point import QuantLinearModel, QuantNNModel, QuantPolyModel

    if isinstance(model, (LinearModel, QuantLinearModel)):
        return "linear"
    if isinstance(model, (PolyModel, QuantPolyModel)):
        return "poly"
    if isinstance(model, (NNModel, QuantNNModel)):
        return "nn"
    raise ConfigurationError(f"unknown model type {type(model).__name__}")


def predict(model, x):
    """Float prediction for any float canceller model."""
    if isinstance(model, LinearModel):
        return linear_predict(model, x)
    if isinstance(model, PolyModel):
        return poly_predict(model, x)
    if isinstance(model, NNModel):
        return nn_predict(model, x)
    raise ConfigurationError(f"cannot predict with type {type(model).__name__}")


def fx_predict(qmodel, x) -> np.ndarray:
    """Quantized prediction (sequential evaluation order) as complex floats."""
    from .fixed_point import QuantLinearModel, QuantNNModel, QuantPolyModel

    if isinstance(qmodel, QuantLinearModel):
        re, im = fx_linear_canceller(qmodel, x)
    elif isinstance(qmodel, QuantPolyModel):
        re, im = fx_poly_canceller(qmodel, x)
    elif isinstance(qmodel, QuantNNModel):
        re, im = fx_nn_canceller(qmodel, x)
    else:
        raise ConfigurationError(f"cannot predict with type {type(qmodel).__name__}")
    return (re + 1j * im) * qmodel.fmt.resolution


def evaluate(model, x, y, skip: int | None = None) -> float:
    """Cancellation of a float or quantized model on aligned buffers."""
    xs, ys = as_samples(x), as_samples(y)
    from .fixed_point import QuantLinearModel, QuantNNModel, QuantPolyModel

    if isinstance(model, (QuantLinearModel, QuantPolyModel, QuantNNModel)):
        yhat = fx_predict(model, xs)
    else:
        yhat = as_samples(predict(model, xs))
    if skip is None:
        skip = model.memory_len
    return cancellation_db(ys, ys - yhat, skip=skip)


@dataclass(frozen=True)
class SweepRow:
    q: int
    canceller: str
    frac_bits: int
    cancellation_db: float


def sweep_q(models: dict, x_calib, x_eval, y_eval, q_values) -> list:
    """Quantize each model at every width and evaluate it.

    The fraction split is re-calibrated per width on the calibration buffer
    (the magnitude scan runs once per model, the split follows the width);
    evaluation runs on the held-out buffers.  ``models`` maps a label (e.g.
    "poly") to a float model.  Rows come back sorted by (q, label).
    """
    plans = {label: scale_plan(m, x_calib) for label, m in models.items()}
    max_abs = {
        label: calibration_max_abs(m, x_calib, *plans[label])
        for label, m in models.items()
    }
    rows = []
    for q in q_values:
        for label in sorted(models):
            fmt = format_for_max(max_abs[label], q)
            qmodel, _ = quantize_model(models[label], fmt, *plans[label])
            db = evaluate(qmodel, x_eval, y_eval)
            rows.append(SweepRow(q, label, fmt.frac_bits, db))
    rows.sort(key=lambda r: (r.q, r.canceller))
    return rows


def write_sweep_csv(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(SWEEP_CSV_HEADER)
        for r in rows:
            w.writerow([r.q, r.canceller, r.frac_bits, repr(r.cancellation_db)])


def read_sweep_csv(path) -> list:
    from .errors import DataFormatError

    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != SWEEP_CSV_HEADER:
            raise DataFormatError(f"{path}: unexpected sweep header {header!r}")
        return [SweepRow(int(q), c, int(fb), float(db)) for q, c, fb, db in reader]
