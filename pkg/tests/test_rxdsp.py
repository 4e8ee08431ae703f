import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from imdd_vnle.adapt import AdaptConfig
from imdd_vnle.kernels import build_kernel_set
from imdd_vnle.linksim import Waveform, resample
from imdd_vnle.pam import Constellation, generate_prms
from imdd_vnle.rxdsp import (
    AliasingWarning,
    SyncError,
    align,
    dc_block,
    resample_2sps,
    run_rx,
    synchronize,
)
from imdd_vnle.volterra import TapVector, equalize_sequence

BAUD = 90e9


def ideal_capture(n_sym, seed, order=4, delay=0, gain=1.0):
    """Band-limited 2 sps capture passing exactly through the symbol levels."""
    c = Constellation(order)
    sym = generate_prms(seed, n_sym, order)
    x = resample(c.map(sym), 2 * n_sym)
    return sym, c, Waveform(gain * np.roll(x, delay) + 0.3, 2 * BAUD)


def bandlimited_noise(n, frac, seed):
    spec = np.fft.rfft(np.random.default_rng(seed).normal(size=n))
    spec[int(frac * len(spec)):] = 0
    return np.fft.irfft(spec, n)


# --- dc_block ----------------------------------------------------------------------

def test_dc_block_constant():
    np.testing.assert_array_equal(dc_block(Waveform(np.full(10, 2.5), 1.0)).samples, 0.0)


def test_dc_block_zero_mean_unchanged():
    x = np.array([1.0, -2.0, 0.5, 0.5])
    np.testing.assert_array_equal(dc_block(Waveform(x, 1.0)).samples, x)


@settings(max_examples=50)
@given(arrays(np.int64, st.integers(1, 200), elements=st.integers(-10**6, 10**6)))
def test_dc_block_mean_and_idempotence(ints):
    x = ints / 1000.0
    once = dc_block(Waveform(x, 1.0)).samples
    rms = np.sqrt(np.mean(x**2))
    assert abs(np.mean(once)) <= 1e-12 * rms
    np.testing.assert_allclose(dc_block(Waveform(once, 1.0)).samples, once, rtol=0, atol=1e-12 * rms)


def test_dc_block_empty():
    with pytest.raises(ValueError):
        dc_block(Waveform(np.array([]), 1.0))


# --- resampling -----------------------------------------------------------------------

def test_resample_ratio_one_is_identity():
    x = np.random.default_rng(0).normal(size=300)
    out = resample_2sps(Waveform(x, 2 * BAUD), BAUD)
    assert out.sample_rate == 2 * BAUD
    np.testing.assert_allclose(out.samples, x, rtol=0, atol=1e-12)


@pytest.mark.parametrize("k", [37, 200, 850])
def test_resample_preserves_tone(k):
    n = 2560  # at 256 GS/s -> 1800 samples at 180 GS/s, both with 0.1 GHz bins
    t = np.arange(n) / 256e9
    f = k * 256e9 / n
    out = resample_2sps(Waveform(np.cos(2 * np.pi * f * t), 256e9), BAUD)
    assert len(out) == 1800
    spec = np.abs(np.fft.rfft(out.samples))
    k_out = int(np.argmax(spec))
    assert k_out * out.sample_rate / len(out) == pytest.approx(f, rel=1e-9)
    ref = np.cos(2 * np.pi * f * np.arange(1800) / 180e9)
    np.testing.assert_allclose(out.samples, ref, atol=1e-9)


def test_resample_round_trip():
    x = bandlimited_noise(3000, 0.7, 1)
    up = resample(x, 4000)
    back = resample(up, 3000)
    np.testing.assert_allclose(back, x, atol=1e-9 * np.max(np.abs(x)))


def test_resample_warns_on_aliasing():
    n = 2560
    with pytest.warns(AliasingWarning):
        resample_2sps(Waveform(np.random.default_rng(2).normal(size=n), 256e9), BAUD)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        resample_2sps(Waveform(bandlimited_noise(n, 0.6, 3), 256e9), BAUD)


def test_resample_rejects_fractional_length():
    with pytest.raises(ValueError):
        resample_2sps(Waveform(np.zeros(1001), 256e9), BAUD)


# --- synchronization ----------------------------------------------------------------------

@pytest.mark.parametrize("delay", [0, 17, 1234])
@pytest.mark.parametrize("gain", [1.0, -0.4])
def test_synchronize_offset_and_polarity(delay, gain):
    sym, c, w = ideal_capture(6000, 4, delay=delay, gain=gain)
    res = synchronize(w.samples, sym, c)
    assert res.offset == delay
    assert res.polarity == (1 if gain > 0 else -1)
    assert res.psr >= 3


def test_synchronize_accepts_levels():
    sym, c, w = ideal_capture(6000, 5, delay=17)
    assert synchronize(w, c.map(sym)).offset == 17


def test_synchronize_fails_on_noise():
    sym = generate_prms(6, 6000, 4)
    x = np.random.default_rng(6).normal(size=12000)
    with pytest.raises(SyncError):
        synchronize(x, sym, Constellation(4))


def test_align_maps_outputs_to_symbols():
    kset = build_kernel_set(9, 4, 5)
    for delay in (0, 3, 17):
        sym, c, w = ideal_capture(500, 7, delay=delay)
        x, first = align(w.samples - 0.3, delay, kset)
        y = equalize_sequence(TapVector.center_spike(kset), kset, x, 0)
        n = min(len(y), len(sym) - first)
        np.testing.assert_allclose(y[:n], c.map(sym)[first:first + n], atol=1e-12)


# --- pipeline ---------------------------------------------------------------------------

@pytest.mark.parametrize("order", [4, 6, 8])
def test_ideal_chain_linear_is_error_free(order):
    sym, c, w = ideal_capture(30_000, 8, order=order, delay=41, gain=-2.0)
    rx = run_rx(w, build_kernel_set(11, 0, 0), sym, c, BAUD,
                adapt=AdaptConfig(train_len=5000, dd_len=5000))
    assert rx.report.symbol_errors == 0 and rx.report.bit_errors == 0
    assert rx.report.N1 == 11 and rx.report.mult_count == 11


def test_fixed_taps_without_adaptation():
    sym, c, w = ideal_capture(5000, 9, delay=5)
    kset = build_kernel_set(7, 2, 3)
    rx = run_rx(w, kset, sym, c, BAUD, taps=TapVector.center_spike(kset), adapt=None)
    assert rx.report.symbol_errors == 0
    with pytest.raises(ValueError):
        run_rx(w, kset, sym, c, BAUD, adapt=None)


def test_run_rx_deterministic():
    sym, c, w = ideal_capture(20_000, 10)
    noisy = w.replace(w.samples + 0.3 * np.random.default_rng(10).normal(size=len(w)))
    kset = build_kernel_set(11, 3, 3)
    cfg = AdaptConfig(train_len=5000, dd_len=5000)
    a = run_rx(noisy, kset, sym, c, BAUD, adapt=cfg)
    b = run_rx(noisy, kset, sym, c, BAUD, adapt=cfg)
    assert a.report == b.report
    np.testing.assert_array_equal(a.taps.flat, b.taps.flat)
    assert a.report.symbol_errors > 0


def test_excluded_symbols_below_one_percent():
    n = 10**6
    sym, c, w = ideal_capture(n, 11, order=6)
    kset = build_kernel_set(120, 6, 9)
    rx = run_rx(w, kset, sym, c, BAUD, taps=TapVector.center_spike(kset), adapt=None)
    assert rx.report.symbols >= 0.99 * n
    assert rx.report.symbol_errors == 0


def test_sync_failure_aborts():
    sym = generate_prms(12, 5000, 4)
    w = Waveform(np.random.default_rng(12).normal(size=10_000), 2 * BAUD)
    with pytest.raises(SyncError):
        run_rx(w, build_kernel_set(5, 0, 0), sym, Constellation(4), BAUD)
