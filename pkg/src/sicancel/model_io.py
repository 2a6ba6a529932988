"""Model files: one JSON document per canceller, float and quantized alike.

Floats are serialized with full precision (Python round-trips them exactly),
complex arrays as [re, im] pairs, quantized coefficients as raw integers next
to their format string.
"""

from __future__ import annotations

import json

import numpy as np

from .cancellers import LinearModel, PolyModel
from .errors import DataFormatError
from .fixed_point import FxFormat, QuantLinearModel, QuantNNModel, QuantPolyModel
from .network import NNModel

FORMAT_NAME = "si-canceller-model"
FORMAT_VERSION = 1


def _cpx(arr: np.ndarray) -> list:
    return [[float(v.real), float(v.imag)] for v in np.asarray(arr)]


def _from_cpx(rows) -> np.ndarray:
    return np.array([complex(r, i) for r, i in rows], dtype=np.complex128)


def _ints(arr) -> list:
    return np.asarray(arr, dtype=np.int64).tolist()


def model_to_dict(model) -> dict:
    doc = {"format": FORMAT_NAME, "version": FORMAT_VERSION}
    if isinstance(model, LinearModel):
        doc.update(kind="linear", quantized=False, taps=_cpx(model.taps))
    elif isinstance(model, PolyModel):
        doc.update(
            kind="poly", quantized=False,
            memory_len=model.memory_len, max_order=model.max_order,
            coeffs=_cpx(model.coeffs),
        )
    elif isinstance(model, NNModel):
        doc.update(
            kind="nn", quantized=False,
            w1=model.w1.tolist(), b1=model.b1.tolist(),
            w2=model.w2.tolist(), b2=model.b2.tolist(),
            denorm_shift=model.denorm_shift,
            linear_taps=_cpx(model.linear.taps),
        )
    elif isinstance(model, QuantLinearModel):
        doc.update(
            kind="linear", quantized=True, fx_format=str(model.fmt),
            taps_re=_ints(model.taps_re), taps_im=_ints(model.taps_im),
        )
    elif isinstance(model, QuantPolyModel):
        doc.update(
            kind="poly", quantized=True, fx_format=str(model.fmt),
            memory_len=model.memory_len, max_order=model.max_order,
            input_shift=model.input_shift,
            coef_re=_ints(model.coef_re), coef_im=_ints(model.coef_im),
        )
    elif isinstance(model, QuantNNModel):
        doc.update(
            kind="nn", quantized=True, fx_format=str(model.fmt),
            w1=_ints(model.w1), b1=_ints(model.b1),
            w2=_ints(model.w2), b2=_ints(model.b2),
            denorm_shift=model.denorm_shift,
            taps_re=_ints(model.linear.taps_re), taps_im=_ints(model.linear.taps_im),
        )
    else:
        raise DataFormatError(f"cannot serialize object of type {type(model).__name__}")
    return doc


def model_from_dict(doc: dict):
    try:
        if doc.get("format") != FORMAT_NAME:
            raise DataFormatError("not a canceller model document")
        if doc.get("version") != FORMAT_VERSION:
            raise DataFormatError(f"unsupported model version {doc.get('version')!r}")
        kind = doc["kind"]
        quant = doc["quantized"]
        if kind == "linear" and not quant:
            return LinearModel(_from_cpx(doc["taps"]))
        if kind == "poly" and not quant:
            return PolyModel(_from_cpx(doc["coeffs"]), doc["memory_len"], doc["max_order"])
        if kind == "nn" and not quant:
            return NNModel(
                np.array(doc["w1"], dtype=np.float64),
                np.array(doc["b1"], dtype=np.float64),
                np.array(doc["w2"], dtype=np.float64),
                np.array(doc["b2"], dtype=np.float64),
                int(doc["denorm_shift"]),
                LinearModel(_from_cpx(doc["linear_taps"])),
            )
        fmt = FxFormat.parse(doc["fx_format"])
        if kind == "linear":
            return QuantLinearModel(
                np.array(doc["taps_re"], dtype=np.int64),
                np.array(doc["taps_im"], dtype=np.int64), fmt,
            )
        if kind == "poly":
            return QuantPolyModel(
                np.array(doc["coef_re"], dtype=np.int64),
                np.array(doc["coef_im"], dtype=np.int64),
                doc["memory_len"], doc["max_order"], fmt,
                int(doc.get("input_shift", 0)),
            )
        if kind == "nn":
            return QuantNNModel(
                np.array(doc["w1"], dtype=np.int64),
                np.array(doc["b1"], dtype=np.int64),
                np.array(doc["w2"], dtype=np.int64),
                np.array(doc["b2"], dtype=np.int64),
                int(doc["denorm_shift"]),
                QuantLinearModel(
                    np.array(doc["taps_re"], dtype=np.int64),
                    np.array(doc["taps_im"], dtype=np.int64), fmt,
                ),
                fmt,
            )
        raise DataFormatError(f"unknown model kind {kind!r}")
    except (KeyError, TypeError, ValueError) as e:
        raise DataFormatError(f"malformed model document: {e}") from e


def save_model(model, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(model_to_dict(model), f, indent=1)
        f.write("\n")


def load_model(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise DataFormatError(f"{path}: not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise DataFormatError(f"{path}: not a model document")
    return model_from_dict(doc)


def coefficient_count(model) -> int:
    """Number of real scalars a serialized model carries (complex counts 2)."""
    if isinstance(model, (LinearModel, QuantLinearModel)):
        return 2 * model.memory_len
    if isinstance(model, PolyModel):
        return 2 * model.coeffs.size
    if isinstance(model, QuantPolyModel):
        return 2 * model.coef_re.size
    if isinstance(model, (NNModel, QuantNNModel)):
        return int(
            model.w1.size + model.b1.size + model.w2.size + model.b2.size
        ) + 2 * model.memory_len
    raise DataFormatError(f"no coefficient count for type {type(model).__name__}")
