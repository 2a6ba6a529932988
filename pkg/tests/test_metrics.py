"""Cancellation metric, model dispatch, and the width sweep."""

import math

import numpy as np
import pytest

from sicancel.cancellers import linear_predict, poly_predict
from sicancel.errors import ConfigurationError, DataFormatError
from sicancel.fixed_point import calibrate_format, quantize_model
from sicancel.metrics import (
    SweepRow,
    cancellation_db,
    evaluate,
    fx_predict,
    model_kind,
    predict,
    read_sweep_csv,
    sweep_q,
    write_sweep_csv,
)
from sicancel.network import nn_predict
from sicancel.signals import SignalBuffer


def test_zero_cancellation_is_zero_db(rng):
    y = rng.standard_normal(100) + 1j * rng.standard_normal(100)
    assert abs(cancellation_db(y, y)) < 1e-12


def test_cancellation_scale_invariant(rng):
    y = rng.standard_normal(200) + 1j * rng.standard_normal(200)
    resid = 0.01 * (rng.standard_normal(200) + 1j * rng.standard_normal(200))
    base = cancellation_db(y, resid)
    scaled = cancellation_db(7.5 * y, 7.5 * resid)
    assert abs(base - scaled) < 1e-12
    assert base < -30.0


def test_cancellation_known_ratio(rng):
    y = np.ones(50, dtype=complex)
    resid = np.full(50, 0.1, dtype=complex)
    assert abs(cancellation_db(y, resid) - (-20.0)) < 1e-12


def test_cancellation_perfect_is_minus_inf():
    y = np.ones(10, dtype=complex)
    assert cancellation_db(y, np.zeros(10, dtype=complex)) == -math.inf


def test_cancellation_validation(rng):
    y = rng.standard_normal(10) + 0j
    with pytest.raises(ConfigurationError):
        cancellation_db(y, y[:-1])
    with pytest.raises(ConfigurationError):
        cancellation_db(y, y, skip=10)
    with pytest.raises(ConfigurationError):
        cancellation_db(y, y, skip=-1)
    head_only = np.r_[np.ones(5), np.zeros(5)].astype(complex)
    with pytest.raises(ConfigurationError):
        cancellation_db(head_only, head_only, skip=5)


def test_skip_excludes_warmup(rng):
    y = np.ones(100, dtype=complex)
    resid = np.r_[np.full(10, 10.0), np.full(90, 0.01)].astype(complex)
    all_in = cancellation_db(y, resid)
    warm = cancellation_db(y, resid, skip=10)
    assert warm < -35.0
    assert all_in > 5.0  # the corrupt head dominates without the skip


def test_model_kind_dispatch(linear_model, poly_model, nn_model, x_calib):
    assert model_kind(linear_model) == "linear"
    assert model_kind(poly_model) == "poly"
    assert model_kind(nn_model) == "nn"
    for model in (linear_model, poly_model, nn_model):
        fmt, in_s, hid_s = calibrate_format(model, x_calib, 16)
        qmodel, _ = quantize_model(model, fmt, in_s, hid_s)
        assert model_kind(qmodel) == model_kind(model)
    with pytest.raises(ConfigurationError):
        model_kind(object())


def test_predict_dispatch(linear_model, poly_model, nn_model, splits):
    x = splits["x_eval"][:100]
    assert np.array_equal(predict(linear_model, x), linear_predict(linear_model, x))
    assert np.array_equal(predict(poly_model, x), poly_predict(poly_model, x))
    assert np.array_equal(predict(nn_model, x), nn_predict(nn_model, x))
    with pytest.raises(ConfigurationError):
        predict(object(), x)


def test_fx_predict_scales_raws(poly_model, x_calib, splits):
    x = splits["x_eval"][:64]
    fmt, in_s, hid_s = calibrate_format(poly_model, x_calib, 24)
    qmodel, _ = quantize_model(poly_model, fmt, in_s, hid_s)
    yhat = fx_predict(qmodel, x)
    assert yhat.dtype == np.complex128
    scaled = yhat / fmt.resolution
    assert np.allclose(scaled, np.round(scaled))  # raw grid points
    assert np.max(np.abs(yhat - poly_predict(poly_model, x))) < 1e-3


def test_evaluate_defaults_skip_to_memory(linear_model, splits):
    x, y = splits["x_eval"], splits["y_eval"]
    assert evaluate(linear_model, x, y) == evaluate(
        linear_model, x, y, skip=linear_model.memory_len
    )
    assert evaluate(linear_model, x, y, skip=0) != evaluate(linear_model, x, y)


def test_evaluate_accepts_signal_buffers(linear_model, splits):
    x = SignalBuffer(splits["x_eval"], 20e6)
    y = SignalBuffer(splits["y_eval"], 20e6)
    assert evaluate(linear_model, x, y) == evaluate(
        linear_model, splits["x_eval"], splits["y_eval"]
    )


def test_sweep_rows_ordered_and_calibrated(
    linear_model, poly_model, x_calib, splits
):
    models = {"linear": linear_model, "poly": poly_model}
    q_values = [10, 14, 12]
    rows = sweep_q(models, x_calib, splits["x_eval"], splits["y_eval"], q_values)
    assert len(rows) == 6
    assert [(r.q, r.canceller) for r in rows] == [
        (10, "linear"), (10, "poly"),
        (12, "linear"), (12, "poly"),
        (14, "linear"), (14, "poly"),
    ]
    for row in rows:
        fmt, in_s, hid_s = calibrate_format(models[row.canceller], x_calib, row.q)
        assert row.frac_bits == fmt.frac_bits
    by_label = {r.canceller: [] for r in rows}
    for r in rows:
        by_label[r.canceller].append(r.cancellation_db)
    # more bits never hurt the polynomial canceller on this range
    assert by_label["poly"][0] > by_label["poly"][-1]


def test_sweep_csv_roundtrip(tmp_path):
    rows = [
        SweepRow(8, "linear", 5, -20.1234567890123),
        SweepRow(8, "poly", 4, -31.9),
        SweepRow(12, "nn", 9, -37.25),
    ]
    path = tmp_path / "sweep.csv"
    write_sweep_csv(path, rows)
    back = read_sweep_csv(path)
    assert back == rows  # repr round-trip keeps floats exact

    lines = path.read_text().splitlines()
    tampered = tmp_path / "tampered.csv"
    tampered.write_text("\n".join(["q,model,frac,db"] + lines[1:]) + "\n")
    with pytest.raises(DataFormatError):
        read_sweep_csv(tampered)
