import numpy as np
import pytest
from scipy.optimize import brentq

from imdd_vnle.adapt import AdaptConfig
from imdd_vnle.kernels import build_kernel_set
from imdd_vnle.linksim import (
    LinkConfig,
    Waveform,
    adc,
    dac,
    dac_samples,
    fiber,
    load_preset,
    load_waveform,
    load_waveform_meta,
    lowpass,
    mzm,
    photodiode,
    quantize,
    run_link,
    save_waveform,
    voa,
)
from imdd_vnle.pam import Constellation, generate_prms
from imdd_vnle.rxdsp import run_rx

RATE = 480e9
QUAD = -0.5  # power quadrature for vpi = 1


def bessel4_magnitude(f, bw):
    """|H| of the 4th-order Bessel lowpass from its reverse polynomial, -3 dB at ``bw``."""
    def mag(w):
        s = 1j * w
        return np.abs(105 / (s**4 + 10 * s**3 + 45 * s**2 + 105 * s + 105))

    w3 = brentq(lambda w: mag(w) - 1 / np.sqrt(2), 0.1, 10)
    return mag(w3 * np.asarray(f) / bw)


def tone(n, k, rate=RATE, amp=1.0, phase=0.3):
    t = np.arange(n) / rate
    f = k * rate / n
    return Waveform(amp * np.cos(2 * np.pi * f * t + phase), rate), f


def random_field(n, seed):
    rng = np.random.default_rng(seed)
    return Waveform(rng.normal(size=n) + 1j * rng.normal(size=n), RATE)


def linear_ber(config, seeds, n_sym=59_985):
    """BER after a linear FFE with fixed settings, summed over seeds."""
    c = Constellation(config.order)
    kset = build_kernel_set(31, 0, 0)
    errors = bits = 0
    for seed in seeds:
        sym = generate_prms(seed, n_sym, config.order)
        rx = run_rx(run_link(sym, config, seed), kset, sym, c, config.symbol_rate,
                    adapt=AdaptConfig(train_len=20_000, dd_len=20_000))
        errors += rx.report.bit_errors
        bits += rx.report.bits
    return errors / bits


# --- filters and DAC ----------------------------------------------------------

@pytest.mark.parametrize("k", [50, 400, 1200, 3000])
def test_lowpass_tone_follows_bessel_magnitude(k):
    w, f = tone(8192, k)
    out = lowpass(w, 45e9)
    gain = np.abs(np.fft.rfft(out.samples)[k]) / np.abs(np.fft.rfft(w.samples)[k])
    assert gain == pytest.approx(bessel4_magnitude(f, 45e9), rel=1e-9)


def test_lowpass_is_lti():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=4096), rng.normal(size=4096)
    lhs = lowpass(Waveform(2.0 * a - 3.0 * b, RATE), 32e9).samples
    rhs = 2.0 * lowpass(Waveform(a, RATE), 32e9).samples - 3.0 * lowpass(Waveform(b, RATE), 32e9).samples
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * np.max(np.abs(rhs))


@pytest.mark.parametrize("preemphasis", [False, True])
def test_dac_constant_stream_is_constant(preemphasis):
    cfg = LinkConfig(preemphasis=preemphasis)
    w = dac(np.full(450, 4), cfg)
    level = Constellation(6).levels[4]
    np.testing.assert_allclose(w.samples, level, atol=1e-12)


def test_dac_samples_per_symbol():
    cfg = LinkConfig(symbol_rate=90e9, dac_rate=120e9)
    s = dac_samples(generate_prms(0, 900, 6), cfg)
    assert len(s) == 1200  # 4/3 samples per symbol
    assert len(dac(generate_prms(0, 900, 6), cfg)) == 1200 * cfg.analog_oversampling


def test_dac_rejects_symbol_rate_above_dac_rate():
    with pytest.raises(ValueError):
        dac_samples(np.zeros(10, dtype=int), LinkConfig(symbol_rate=130e9))


def test_dac_preemphasis_flattens_tx_response():
    # preemphasis inverts the Tx lowpass within its clip, so in-band it lifts high frequencies
    sym = generate_prms(1, 4500, 6)
    plain = np.abs(np.fft.rfft(dac_samples(sym, LinkConfig(preemphasis=False))))
    pre = np.abs(np.fft.rfft(dac_samples(sym, LinkConfig(preemphasis=True))))
    n = len(plain)
    lo, hi = slice(10, n // 10), slice(int(0.6 * n), int(0.7 * n))
    assert np.sum(pre[hi]) / np.sum(plain[hi]) > 2 * np.sum(pre[lo]) / np.sum(plain[lo])


# --- MZM ------------------------------------------------------------------------

def test_mzm_peak_and_null():
    drive = Waveform(np.array([0.9, -0.5, 1.0]), RATE)
    # v = drive * vpp / 2 = drive here; bias -0.9 gives v + bias = 0 at the first sample
    e = mzm(drive, vpi=1.0, bias=-0.9, vpp=2.0).samples
    assert e[0] == 1.0
    e = mzm(Waveform(np.array([1.0]), RATE), vpi=2.0, bias=1.0, vpp=2.0).samples
    assert abs(e[0]) < 1e-15


def test_mzm_small_signal_slope_at_quadrature():
    vpi = 1.7
    h = 1e-6
    drive = Waveform(np.array([-1.0, 0.0, 1.0]), RATE)
    e = mzm(drive, vpi=vpi, bias=-vpi / 2, vpp=2 * h).samples
    slope = (np.abs(e[2]) ** 2 - np.abs(e[0]) ** 2) / (2 * h)
    assert slope == pytest.approx(np.pi / (2 * vpi), rel=1e-8)


def test_mzm_laser_power():
    e = mzm(Waveform(np.zeros(4), RATE), 1.0, 0.0, 1.0, laser_power=4.0).samples
    np.testing.assert_allclose(np.abs(e) ** 2, 4.0)


# --- fiber ------------------------------------------------------------------------

def test_fiber_zero_length_identity():
    w = random_field(4096, 1)
    np.testing.assert_array_equal(fiber(w, 0.0).samples, w.samples)


@pytest.mark.parametrize("L", [0.5, 1.0, 10.0])
def test_fiber_unitary(L):
    w = random_field(4096, 2)
    out = fiber(w, L)
    e_in, e_out = np.sum(np.abs(w.samples) ** 2), np.sum(np.abs(out.samples) ** 2)
    assert abs(e_out - e_in) <= 1e-10 * e_in


def test_fiber_cascade_and_inverse():
    w = random_field(4096, 3)
    one = fiber(w, 1.0).samples
    two = fiber(fiber(w, 0.5), 0.5).samples
    assert np.max(np.abs(one - two)) <= 1e-10 * np.max(np.abs(one))
    back = fiber(fiber(w, 1.0), -1.0).samples
    assert np.max(np.abs(back - w.samples)) <= 1e-10 * np.max(np.abs(w.samples))


def test_fiber_group_delay():
    # a narrow pulse on a tone at f0 arrives D * lambda^2 * f0 / c * L later than at DC
    n, f0 = 1 << 14, 60e9
    t = np.arange(n) / RATE
    env = np.exp(-0.5 * ((t - t[n // 2]) / 20e-12) ** 2)
    L = 5.0
    dc = np.abs(fiber(Waveform(env.astype(complex), RATE), L).samples) ** 2
    up = np.abs(fiber(Waveform(env * np.exp(2j * np.pi * f0 * t), RATE), L).samples) ** 2
    shift = (np.sum(t * up) / np.sum(up)) - (np.sum(t * dc) / np.sum(dc))
    expected = 17e-6 * (1550e-9) ** 2 * f0 / 299_792_458.0 * L * 1e3
    assert shift == pytest.approx(expected, rel=0.02)


# --- VOA and photodiode ---------------------------------------------------------------

def test_voa_sets_mean_power():
    w = random_field(1000, 4)
    out = voa(w, -3.0)
    assert 10 * np.log10(np.mean(np.abs(out.samples) ** 2)) == pytest.approx(-3.0, abs=1e-12)


def test_photodiode_unit_field():
    cfg = LinkConfig()
    i = photodiode(Waveform(np.ones(512, dtype=complex), RATE), cfg).samples
    np.testing.assert_allclose(i, 1.0, atol=1e-12)


def test_photodiode_square_law_scaling():
    cfg = LinkConfig()
    w = random_field(2048, 5)
    full = photodiode(w, cfg).samples
    half = photodiode(w.replace(0.5 * w.samples), cfg).samples
    np.testing.assert_allclose(half, 0.25 * full, rtol=0, atol=1e-14 * np.max(np.abs(full)))


def test_photodiode_noise_is_signal_independent():
    cfg = LinkConfig(thermal_noise_sigma=0.1)
    for scale in (0.1, 3.0):
        w = Waveform(np.full(200_000, scale, dtype=complex), RATE)
        i = photodiode(w, cfg, np.random.default_rng(6)).samples
        assert np.std(i) == pytest.approx(0.1, rel=0.01)


# --- ADC and quantizer ------------------------------------------------------------------

def test_quantizer_fine_resolution():
    x = np.random.default_rng(7).uniform(-1, 1, 10_000)
    assert np.max(np.abs(quantize(x, 24, -1.0, 1.0) - x)) < 1e-6 * 2.0


def test_quantizer_dc_goes_to_nearest_code():
    # 3 bits over [-1, 1]: codes at -0.875, -0.625, ..., 0.875
    np.testing.assert_array_equal(quantize(np.full(5, 0.3), 3, -1.0, 1.0), 0.375)
    np.testing.assert_array_equal(quantize(np.full(2, -0.2), 3, -1.0, 1.0), -0.125)
    np.testing.assert_array_equal(quantize(np.array([5.0, -5.0]), 3, -1.0, 1.0), [0.875, -0.875])


@pytest.mark.parametrize("bits", [4, 6, 8, 10, 12])
def test_quantizer_sine_snr(bits):
    n = 1 << 16
    x = np.sin(2 * np.pi * 0.1234567 * np.arange(n))
    q = quantize(x, bits, -1.0, 1.0)
    snr = 10 * np.log10(np.mean(x**2) / np.mean((q - x) ** 2))
    assert abs(snr - (6.02 * bits + 1.76)) < 1.0


def test_adc_rate_and_dc():
    cfg = LinkConfig()
    w = Waveform(np.full(1500, 0.7), RATE)
    out = adc(w, cfg)
    assert out.sample_rate == cfg.adc_rate
    assert len(out) == 800
    np.testing.assert_allclose(out.samples, 0.7, atol=1e-12)


# --- end to end ---------------------------------------------------------------------

def test_run_link_deterministic():
    cfg = LinkConfig()
    sym = generate_prms(3, 4500, 6)
    a, b = run_link(sym, cfg, seed=11), run_link(sym, cfg, seed=11)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, run_link(sym, cfg, seed=12).samples)


def test_run_link_stages():
    cfg = LinkConfig()
    stages = {}
    out = run_link(generate_prms(0, 900, 6), cfg, seed=None, stages=stages)
    assert list(stages) == ["drive", "mzm", "fiber", "pd", "adc"]
    assert np.max(np.abs(stages["drive"].samples)) == pytest.approx(1.0)
    assert stages["mzm"].is_complex and not stages["pd"].is_complex
    assert out is stages["adc"]


def test_noiseless_wideband_link_is_error_free():
    cfg = LinkConfig(dac_bw=200e9, driver_bw=200e9, mzm_bw=200e9, pd_bw=200e9, adc_bw=120e9,
                     mzm_bias=QUAD, vpp=0.2, order=6)
    c = Constellation(6)
    sym = generate_prms(5, 29_970, 6)
    rx = run_rx(run_link(sym, cfg, seed=None), build_kernel_set(15, 0, 0), sym, c, cfg.symbol_rate,
                adapt=AdaptConfig(train_len=10_000, dd_len=10_000))
    assert rx.report.symbol_errors == 0


def _chain(drive, cfg):
    w = mzm(drive, cfg.mzm_vpi, cfg.mzm_bias, cfg.vpp)
    w = voa(fiber(w, cfg.fiber_len), cfg.pd_input_power)
    return adc(photodiode(w, cfg), cfg).samples


def test_small_drive_chain_is_affine():
    # quantization is itself a nonlinearity, so the ADC resolution is raised for this probe
    cfg = LinkConfig(mzm_bias=QUAD, adc_bits=20)
    stages = {}
    run_link(generate_prms(8, 9000, 6), cfg, seed=None, stages=stages)
    drive = stages["drive"]
    a, a0 = 0.02, 0.002
    f = {s: _chain(drive.replace(s * drive.samples), LinkConfig(mzm_bias=QUAD, adc_bits=20, vpp=1.0))
         for s in (a, a0, -a0)}
    c0 = _chain(drive.replace(0 * drive.samples), LinkConfig(mzm_bias=QUAD, adc_bits=20, vpp=1.0))
    lin = (f[a0] - f[-a0]) / (2 * a0)
    dist = f[a] - c0 - a * lin
    assert 10 * np.log10(np.sum(dist**2) / np.sum((a * lin) ** 2)) < -40


def _im3_power(vpp):
    n = 1 << 14
    k1, k2 = 700, 820
    t = np.arange(n)
    drive = np.cos(2 * np.pi * k1 * t / n) + np.cos(2 * np.pi * k2 * t / n)
    drive /= np.max(np.abs(drive))
    cfg = LinkConfig(pd_bw=200e9)
    e = mzm(Waveform(drive, RATE), cfg.mzm_vpi, cfg.mzm_bias, vpp)
    i = photodiode(e, cfg).samples
    spec = np.abs(np.fft.rfft(i)) ** 2
    return spec[2 * k1 - k2] + spec[2 * k2 - k1]


def test_third_order_distortion_grows_with_vpp():
    p = [_im3_power(v) for v in (0.1, 0.3, 0.6, 0.9, 1.2, 1.5)]
    assert all(b > a for a, b in zip(p, p[1:]))


def test_lower_pd_power_raises_ber():
    base = load_preset("pam6_90gbd_b2b")
    ber = [linear_ber(LinkConfig(**{**base.to_dict(), "pd_input_power": p}), (1, 2)) for p in (3.0, 0.0, -3.0)]
    assert ber[0] < ber[1] < ber[2]


def test_fiber_does_not_help():
    b2b = load_preset("pam6_90gbd_b2b")
    km = load_preset("pam6_90gbd_1km", mzm_bias=b2b.mzm_bias, vpp=b2b.vpp)
    assert linear_ber(km, (1, 2, 3)) >= linear_ber(b2b, (1, 2, 3))


# --- waveform files ---------------------------------------------------------------

@pytest.mark.parametrize("complex_", [False, True])
def test_waveform_roundtrip(tmp_path, complex_):
    rng = np.random.default_rng(9)
    s = rng.normal(size=257) + (1j * rng.normal(size=257) if complex_ else 0)
    w = Waveform(s, 256e9, t0=1e-9)
    p = tmp_path / "w.bin"
    save_waveform(p, w, meta={"seed": 4})
    raw = p.read_bytes()
    assert raw[:8] == b"VNLEWAVE" and len(raw) == 16 + 8 * len(s) * (2 if complex_ else 1)
    back = load_waveform(p)
    np.testing.assert_array_equal(back.samples, w.samples)
    assert back.sample_rate == w.sample_rate and back.t0 == w.t0
    assert load_waveform_meta(p)["seed"] == 4


def test_waveform_rejects_bad_header(tmp_path):
    p = tmp_path / "w.bin"
    p.write_bytes(b"x" * 32)
    with pytest.raises(ValueError):
        load_waveform(p)


def test_waveform_and_config_validation():
    with pytest.raises(ValueError):
        Waveform(np.array([np.nan]), 1.0)
    with pytest.raises(ValueError):
        Waveform(np.zeros(3), 0.0)
    with pytest.raises(ValueError):
        LinkConfig(pd_bw=0)
    with pytest.raises(ValueError):
        LinkConfig(fiber_len=-1)
    with pytest.raises(ValueError):
        load_preset("nope")
    with pytest.raises(ValueError):
        LinkConfig.from_dict({"bogus": 1})
    assert LinkConfig.from_dict(LinkConfig().to_dict()) == LinkConfig()
