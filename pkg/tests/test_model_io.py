"""Model serialization round-trips and malformed document handling."""

import json

import numpy as np
import pytest

from sicancel.cancellers import LinearModel, PolyModel, num_basis
from sicancel.errors import DataFormatError
from sicancel.fixed_point import FxFormat, calibrate_format, quantize_model
from sicancel.metrics import model_kind
from sicancel.model_io import (
    coefficient_count,
    load_model,
    model_from_dict,
    model_to_dict,
    save_model,
)
from sicancel.network import NNModel


def _roundtrip(model, tmp_path, name):
    path = tmp_path / f"{name}.json"
    save_model(model, path)
    return load_model(path)


def test_linear_roundtrip(linear_model, tmp_path):
    back = _roundtrip(linear_model, tmp_path, "linear")
    assert isinstance(back, LinearModel)
    assert np.array_equal(back.taps, linear_model.taps)


def test_poly_roundtrip(poly_model, tmp_path):
    back = _roundtrip(poly_model, tmp_path, "poly")
    assert isinstance(back, PolyModel)
    assert np.array_equal(back.coeffs, poly_model.coeffs)
    assert back.memory_len == poly_model.memory_len
    assert back.max_order == poly_model.max_order


def test_nn_roundtrip(nn_model, tmp_path):
    back = _roundtrip(nn_model, tmp_path, "nn")
    assert isinstance(back, NNModel)
    for field in ("w1", "b1", "w2", "b2"):
        assert np.array_equal(getattr(back, field), getattr(nn_model, field))
    assert back.denorm_shift == nn_model.denorm_shift
    assert np.array_equal(back.linear.taps, nn_model.linear.taps)


def test_quantized_roundtrips(linear_model, poly_model, nn_model, x_calib, tmp_path):
    for model in (linear_model, poly_model, nn_model):
        fmt, in_shift, hid_shift = calibrate_format(model, x_calib, 17)
        qmodel, _ = quantize_model(model, fmt, in_shift, hid_shift)
        back = _roundtrip(qmodel, tmp_path, f"q-{model_kind(model)}")
        assert type(back) is type(qmodel)
        assert back.fmt == qmodel.fmt
        assert model_to_dict(back) == model_to_dict(qmodel)


def test_quant_poly_keeps_input_shift(poly_model, x_calib, tmp_path):
    fmt, in_shift, _ = calibrate_format(poly_model, x_calib, 23)
    assert in_shift > 0  # the default dataset needs rescaling
    qmodel, _ = quantize_model(poly_model, fmt, in_shift)
    back = _roundtrip(qmodel, tmp_path, "qpoly-shift")
    assert back.input_shift == in_shift


def test_old_quant_poly_documents_default_shift(poly_model, tmp_path):
    qmodel, _ = quantize_model(poly_model, FxFormat(23, 11))
    doc = model_to_dict(qmodel)
    doc.pop("input_shift")
    assert model_from_dict(doc).input_shift == 0


def test_coefficient_counts(linear_model, poly_model, nn_model):
    assert coefficient_count(linear_model) == 26
    assert coefficient_count(poly_model) == 2 * num_basis(13, 7)
    assert coefficient_count(nn_model) == 550
    qmodel, _ = quantize_model(linear_model, FxFormat(16, 12))
    assert coefficient_count(qmodel) == 26
    with pytest.raises(DataFormatError):
        coefficient_count(object())


def test_malformed_documents(tmp_path, linear_model):
    not_json = tmp_path / "a.json"
    not_json.write_text("{nope")
    with pytest.raises(DataFormatError):
        load_model(not_json)

    not_dict = tmp_path / "b.json"
    not_dict.write_text("[1, 2, 3]")
    with pytest.raises(DataFormatError):
        load_model(not_dict)

    doc = model_to_dict(linear_model)
    doc["kind"] = "wavelet"
    bad_kind = tmp_path / "c.json"
    bad_kind.write_text(json.dumps(doc))
    with pytest.raises(DataFormatError):
        load_model(bad_kind)

    doc = model_to_dict(linear_model)
    del doc["taps"]
    missing = tmp_path / "d.json"
    missing.write_text(json.dumps(doc))
    with pytest.raises(DataFormatError):
        load_model(missing)


def test_wrong_format_marker(tmp_path, linear_model):
    doc = model_to_dict(linear_model)
    doc["format"] = "something-else"
    path = tmp_path / "marker.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(DataFormatError):
        load_model(path)
