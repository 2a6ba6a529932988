"""Transmit generation, channel model, and dataset file format."""

import numpy as np
import pytest

from sicancel.errors import ConfigurationError, DataFormatError
from sicancel.signals import (
    OfdmConfig,
    SiChainModel,
    SignalBuffer,
    apply_si_chain,
    as_samples,
    default_chain,
    generate_tx,
    iq_impair,
    make_dataset,
    pa_apply,
    read_dataset,
    write_dataset,
)


def test_tx_shape_and_unit_power():
    cfg = OfdmConfig(num_symbols=12)
    tx = generate_tx(cfg, seed=7)
    assert len(tx) == cfg.num_samples == 12 * (64 + 16) * 2
    assert tx.sample_rate_hz == cfg.sample_rate_hz
    power = np.mean(np.abs(tx.samples) ** 2)
    assert abs(power - 1.0) < 1e-12


def test_tx_deterministic_per_seed():
    cfg = OfdmConfig(num_symbols=4)
    a = generate_tx(cfg, seed=3).samples
    b = generate_tx(cfg, seed=3).samples
    c = generate_tx(cfg, seed=4).samples
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_tx_cyclic_prefix_copies_symbol_tail():
    cfg = OfdmConfig(num_symbols=5, oversample=2, cp_length=16)
    tx = generate_tx(cfg, seed=2).samples
    sym_len = cfg.samples_per_symbol
    cp = cfg.cp_length * cfg.oversample
    for s in range(cfg.num_symbols):
        block = tx[s * sym_len : (s + 1) * sym_len]
        assert np.array_equal(block[:cp], block[-cp:])


def test_tx_spectrum_only_uses_configured_bins():
    # without a cyclic prefix each symbol is one exact IFFT frame
    cfg = OfdmConfig(cp_length=0, num_symbols=1, oversample=2)
    tx = generate_tx(cfg, seed=9).samples
    spec = np.fft.fft(tx)
    n_fft = cfg.fft_size * cfg.oversample
    half = cfg.used_subcarriers // 2
    used = np.r_[1 : half + 1, n_fft - half : n_fft]
    empty = np.setdiff1d(np.arange(n_fft), used)
    assert np.max(np.abs(spec[empty])) < 1e-9 * np.max(np.abs(spec[used]))


def test_ofdm_config_validation():
    with pytest.raises(ConfigurationError):
        OfdmConfig(fft_size=48)  # not a power of two
    with pytest.raises(ConfigurationError):
        OfdmConfig(used_subcarriers=64)
    with pytest.raises(ConfigurationError):
        OfdmConfig(used_subcarriers=51)
    with pytest.raises(ConfigurationError):
        OfdmConfig(cp_length=64)
    with pytest.raises(ConfigurationError):
        OfdmConfig(num_symbols=0)


def test_signal_buffer_validation():
    with pytest.raises(ConfigurationError):
        SignalBuffer(np.zeros((2, 2), dtype=complex), 1.0)
    with pytest.raises(ConfigurationError):
        SignalBuffer(np.array([1.0, np.nan]), 1.0)
    with pytest.raises(ConfigurationError):
        SignalBuffer(np.zeros(4, dtype=complex), 0.0)


def test_as_samples_passthrough_and_cast():
    buf = SignalBuffer(np.array([1 + 2j, 3.0]), 1.0)
    assert as_samples(buf) is buf.samples
    arr = as_samples([1.0, 2.0])
    assert arr.dtype == np.complex128


def test_iq_impair_hand_value():
    x = np.array([1.0 + 2.0j])
    out = iq_impair(x, gain=0.9 + 0.1j, image=0.05 - 0.02j)
    expected = (0.9 + 0.1j) * (1 + 2j) + (0.05 - 0.02j) * (1 - 2j)
    assert abs(out[0] - expected) < 1e-15


def test_pa_apply_hand_value():
    x = np.array([0.5 - 0.5j])
    coeffs = {1: 1.0 + 0.0j, 3: 0.1j}
    mag2 = 0.5
    expected = x[0] + 0.1j * x[0] * mag2
    assert abs(pa_apply(x, coeffs)[0] - expected) < 1e-15


def test_pa_apply_rejects_even_orders():
    with pytest.raises(ConfigurationError):
        SiChainModel(taps=np.ones(1), pa_coeffs={2: 1.0})


def test_chain_is_causal_fir():
    # an impulse through a linear-only chain reproduces the taps
    taps = np.array([1.0, 0.5j, -0.25])
    chain = SiChainModel(taps=taps)
    x = SignalBuffer(np.r_[1.0, np.zeros(4)].astype(complex), 2.0)
    y = apply_si_chain(chain, x)
    assert y.sample_rate_hz == 2.0
    assert np.allclose(y.samples[:3], taps)
    assert np.allclose(y.samples[3:], 0.0)


def test_chain_noise_seeding():
    chain = default_chain()
    x = generate_tx(OfdmConfig(num_symbols=2), seed=5)
    clean = apply_si_chain(chain, x, noise_seed=None).samples
    noisy1 = apply_si_chain(chain, x, noise_seed=11).samples
    noisy2 = apply_si_chain(chain, x, noise_seed=11).samples
    noisy3 = apply_si_chain(chain, x, noise_seed=12).samples
    assert np.array_equal(noisy1, noisy2)
    assert not np.array_equal(noisy1, noisy3)
    noise_power = np.mean(np.abs(noisy1 - clean) ** 2)
    assert 0.3e-4 < noise_power < 3e-4


def test_default_chain_tap_profile():
    chain = default_chain()
    assert chain.num_taps == 8
    mags = np.abs(chain.taps)
    ratios = mags[:-1] / mags[1:]
    assert np.allclose(ratios, np.exp(2.0))
    assert abs(np.sum(mags**2) - 1.0) < 1e-12
    assert set(chain.pa_coeffs) == {1, 3, 5, 7}


def test_make_dataset_alignment_and_determinism():
    cfg = OfdmConfig(num_symbols=3)
    chain = default_chain()
    x1, y1 = make_dataset(cfg, chain, seed=2)
    x2, y2 = make_dataset(cfg, chain, seed=2)
    assert len(x1) == len(y1) == cfg.num_samples
    assert np.array_equal(x1.samples, x2.samples)
    assert np.array_equal(y1.samples, y2.samples)
    x3, _ = make_dataset(cfg, chain, seed=3)
    assert not np.array_equal(x1.samples, x3.samples)


def test_dataset_roundtrip_bit_exact(tmp_path):
    cfg = OfdmConfig(num_symbols=2)
    x, y = make_dataset(cfg, default_chain(), seed=6)
    path = tmp_path / "pair.bin"
    write_dataset(path, x, y)
    x2, y2 = read_dataset(path)
    assert np.array_equal(x.samples, x2.samples)
    assert np.array_equal(y.samples, y2.samples)
    assert x2.sample_rate_hz == cfg.sample_rate_hz


def test_dataset_rejects_length_mismatch(tmp_path):
    x = SignalBuffer(np.zeros(4, dtype=complex) + 1, 1.0)
    y = SignalBuffer(np.zeros(5, dtype=complex) + 1, 1.0)
    with pytest.raises(ConfigurationError):
        write_dataset(tmp_path / "bad.bin", x, y)


def test_dataset_corrupt_files(tmp_path):
    x, y = make_dataset(OfdmConfig(num_symbols=1), default_chain(), seed=1)
    good = tmp_path / "good.bin"
    write_dataset(good, x, y)
    blob = good.read_bytes()

    wrong_magic = tmp_path / "magic.bin"
    wrong_magic.write_bytes(b"XXXX" + blob[4:])
    with pytest.raises(DataFormatError):
        read_dataset(wrong_magic)

    truncated = tmp_path / "short.bin"
    truncated.write_bytes(blob[:-8])
    with pytest.raises(DataFormatError):
        read_dataset(truncated)

    bad_version = tmp_path / "vers.bin"
    bad_version.write_bytes(blob[:4] + b"\x63\x00\x00\x00" + blob[8:])
    with pytest.raises(DataFormatError):
        read_dataset(bad_version)

    empty = tmp_path / "empty.bin"
    empty.write_bytes(b"")
    with pytest.raises(DataFormatError):
        read_dataset(empty)
