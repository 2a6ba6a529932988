"""Basis construction, least-squares fitting, prediction."""

import numpy as np
import pytest

from sicancel.cancellers import (
    LinearModel,
    PolyModel,
    basis_terms,
    build_basis,
    cancel,
    delay_matrix,
    fit_linear,
    fit_poly,
    linear_predict,
    num_basis,
    poly_from_linear,
    poly_predict,
)
from sicancel.errors import ConfigurationError, NumericError
from sicancel.signals import SignalBuffer


def test_num_basis_matches_enumeration():
    for memory_len in (1, 2, 5, 13):
        for max_order in (1, 3, 5, 7, 9):
            terms = list(basis_terms(memory_len, max_order))
            assert len(terms) == num_basis(memory_len, max_order)
            assert len(set(terms)) == len(terms)


def test_basis_term_order_is_delay_major():
    terms = list(basis_terms(2, 3))
    assert terms == [
        (0, 1, 0), (0, 1, 1), (0, 3, 0), (0, 3, 1), (0, 3, 2), (0, 3, 3),
        (1, 1, 0), (1, 1, 1), (1, 3, 0), (1, 3, 1), (1, 3, 2), (1, 3, 3),
    ]


def test_delay_matrix_zero_history():
    x = np.array([1, 2, 3, 4], dtype=complex)
    d = delay_matrix(x, 3)
    assert d.shape == (4, 3)
    assert np.array_equal(d[:, 0], x)
    assert np.array_equal(d[:, 1], [0, 1, 2, 3])
    assert np.array_equal(d[:, 2], [0, 0, 1, 2])


def test_build_basis_columns_match_definition(rng):
    x = rng.standard_normal(50) + 1j * rng.standard_normal(50)
    memory_len, max_order = 3, 5
    basis = build_basis(x, memory_len, max_order)
    delayed = delay_matrix(x, memory_len)
    for i, (l, p, q) in enumerate(basis_terms(memory_len, max_order)):
        u = delayed[:, l]
        expected = u**q * np.conj(u) ** (p - q)
        assert np.allclose(basis[:, i], expected)


def test_build_basis_rejects_short_buffers():
    with pytest.raises(ConfigurationError):
        build_basis(np.ones(2, dtype=complex), 3, 1)


def test_linear_fit_recovers_taps_noiseless(rng):
    taps = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    x = rng.standard_normal(400) + 1j * rng.standard_normal(400)
    y = np.convolve(x, taps)[:400]
    model = fit_linear(x, y, 5)
    assert np.max(np.abs(model.taps - taps)) < 1e-10
    resid = y - linear_predict(model, x)
    assert np.sqrt(np.mean(np.abs(resid) ** 2)) < 1e-12


def test_poly_fit_recovers_coeffs_noiseless(rng):
    memory_len, max_order = 3, 3
    true = PolyModel(
        rng.standard_normal(num_basis(memory_len, max_order)) * 0.3,
        memory_len, max_order,
    )
    x = rng.standard_normal(900) + 1j * rng.standard_normal(900)
    y = poly_predict(true, x)
    model = fit_poly(x, y, memory_len, max_order)
    assert np.max(np.abs(model.coeffs - true.coeffs)) < 1e-6
    resid = y - poly_predict(model, x)
    assert np.sqrt(np.mean(np.abs(resid) ** 2)) < 1e-6


def test_rank_deficient_fit_raises_without_ridge():
    # a constant-envelope input cannot separate |x|^2 powers
    n = 300
    x = np.exp(1j * np.linspace(0.0, 40.0, n))
    y = x.copy()
    with pytest.raises(NumericError):
        fit_poly(x, y, 2, 5)
    model = fit_poly(x, y, 2, 5, ridge=1e-6)
    resid = y - poly_predict(model, x)
    assert np.sqrt(np.mean(np.abs(resid) ** 2)) < 1e-3


def test_fit_argument_validation(rng):
    x = rng.standard_normal(10) + 0j
    with pytest.raises(ConfigurationError):
        fit_linear(x, x[:-1], 2)
    with pytest.raises(ConfigurationError):
        fit_linear(x[:1], x[:1], 2)
    with pytest.raises(ConfigurationError):
        fit_poly(x, x, 2, 7)  # 40 coefficients from 10 samples
    with pytest.raises(ConfigurationError):
        fit_linear(x, x, 2, ridge=-1.0)


def test_model_validation():
    with pytest.raises(ConfigurationError):
        LinearModel(np.zeros((2, 2)))
    with pytest.raises(ConfigurationError):
        PolyModel(np.zeros(4), 1, 2)  # even order
    with pytest.raises(ConfigurationError):
        PolyModel(np.zeros(5), 1, 3)  # wrong count, needs 6


def test_predict_preserves_signal_buffer(rng):
    x = SignalBuffer(rng.standard_normal(40) + 0j, 5.0)
    model = fit_linear(x.samples, x.samples, 2)
    out = linear_predict(model, x)
    assert isinstance(out, SignalBuffer)
    assert out.sample_rate_hz == 5.0
    assert isinstance(linear_predict(model, x.samples), np.ndarray)


def test_cancel_subtracts_and_validates(rng):
    y = rng.standard_normal(8) + 0j
    yhat = rng.standard_normal(8) + 0j
    assert np.array_equal(cancel(y, yhat), y - yhat)
    with pytest.raises(ConfigurationError):
        cancel(y, yhat[:-1])
    buf = cancel(SignalBuffer(y, 3.0), yhat)
    assert isinstance(buf, SignalBuffer)


def test_poly_from_linear_equivalent(rng):
    taps = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    model = LinearModel(taps)
    poly = poly_from_linear(model)
    assert poly.max_order == 1
    x = rng.standard_normal(100) + 1j * rng.standard_normal(100)
    assert np.allclose(poly_predict(poly, x), linear_predict(model, x))


def test_fits_beat_linear_on_nonlinear_chain(splits, linear_model, poly_model):
    x, y = splits["x_eval"], splits["y_eval"]
    lin_resid = y - linear_predict(linear_model, x)
    poly_resid = y - poly_predict(poly_model, x)
    lin_mse = np.mean(np.abs(lin_resid[13:]) ** 2)
    poly_mse = np.mean(np.abs(poly_resid[13:]) ** 2)
    assert poly_mse < lin_mse / 10.0
