"""Synthetic IM/DD link: DAC, driver, MZM, fiber, VOA, photodiode, ADC.

All analog stages run on one oversampled grid (``dac_rate * analog_oversampling``).
Every 3-dB bandwidth is modeled as a 4th-order Bessel lowpass applied in the
frequency domain, so filtering is circular over the record.

Units: rates in Hz, bandwidths in Hz, voltages in V, optical power in mW,
photocurrent in mA (unit responsivity).
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy.constants as const
import scipy.signal

from .pam import Constellation


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: float
    t0: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.isfinite(self.samples).all():
            raise ValueError("waveform contains non-finite samples")

    def __len__(self):
        return len(self.samples)

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.samples)

    def replace(self, samples, sample_rate=None) -> Waveform:
        return Waveform(samples, self.sample_rate if sample_rate is None else sample_rate, self.t0)


@dataclass
class LinkConfig:
    """Physical parameters of the link. Defaults: 90 GBd PAM6 back-to-back."""

    symbol_rate: float = 90e9
    order: int = 6
    dac_rate: float = 120e9
    dac_bw: float = 45e9
    driver_bw: float = 50e9
    mzm_bw: float = 32e9
    mzm_vpi: float = 1.0
    mzm_bias: float = -0.45
    vpp: float = 1.2
    fiber_len: float = 0.0  # km
    dispersion: float = 17.0  # ps/nm/km
    wavelength: float = 1550.0  # nm
    pd_bw: float = 50e9
    pd_input_power: float = 0.0  # dBm
    thermal_noise_sigma: float = 0.07  # mA, per sample on the analog grid
    adc_rate: float = 256e9
    adc_bw: float = 113e9
    adc_bits: int = 8
    preemphasis: bool = True
    preemphasis_max_db: float = 12.0
    laser_power: float = 1.0  # mW, field amplitude 1 at MZM peak transmission
    analog_oversampling: int = 4

    def __post_init__(self):
        for name in ("symbol_rate", "dac_rate", "dac_bw", "driver_bw", "mzm_bw", "pd_bw",
                     "adc_rate", "adc_bw", "mzm_vpi", "laser_power"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.fiber_len < 0:
            raise ValueError("fiber_len must be non-negative")
        if self.analog_oversampling < 1 or self.adc_bits < 1:
            raise ValueError("analog_oversampling and adc_bits must be >= 1")
        Constellation(self.order)

    @property
    def analog_rate(self) -> float:
        return self.dac_rate * self.analog_oversampling

    def symbol_block(self) -> int:
        """Smallest symbol count giving integer sample counts at every rate."""
        block = 1
        for rate in (self.dac_rate, self.adc_rate, 2 * self.symbol_rate):
            block = np.lcm(block, Fraction(rate / self.symbol_rate).limit_denominator(10**6).denominator)
        return int(block)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> LinkConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown LinkConfig fields: {sorted(unknown)}")
        return cls(**data)


PRESETS = {
    "pam6_90gbd_b2b": dict(symbol_rate=90e9, order=6, fiber_len=0.0),
    "pam6_90gbd_1km": dict(symbol_rate=90e9, order=6, fiber_len=1.0),
    "pam8_75gbd_b2b": dict(symbol_rate=75e9, order=8, fiber_len=0.0),
    "pam8_75gbd_1km": dict(symbol_rate=75e9, order=8, fiber_len=1.0),
}

_PRESET_DIR = Path(__file__).parent / "presets"


def load_preset(name: str, **overrides) -> LinkConfig:
    """Preset config, with calibrated bias/vpp from the shipped preset file if present."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; known: {sorted(PRESETS)}")
    data = dict(PRESETS[name])
    path = _PRESET_DIR / f"{name}.json"
    if path.exists():
        data.update(json.loads(path.read_text())["config"])
    data.update(overrides)
    return LinkConfig(**data)


# --- filters -----------------------------------------------------------------

def bessel_response(f, bw: float, order: int = 4) -> np.ndarray:
    """Bessel lowpass with -3 dB at ``bw`` evaluated at frequencies ``f`` (Hz)."""
    b, a = scipy.signal.bessel(order, 2 * np.pi * bw, btype="low", analog=True, norm="mag")
    _, h = scipy.signal.freqs(b, a, worN=2 * np.pi * np.asarray(f, dtype=np.float64))
    return h


def apply_response(samples, h) -> np.ndarray:
    """Circularly filter with a frequency response sampled on the FFT grid."""
    out = np.fft.ifft(np.fft.fft(samples) * h)
    return out if np.iscomplexobj(samples) else out.real


def lowpass(wave: Waveform, bw: float) -> Waveform:
    f = np.fft.fftfreq(len(wave), 1.0 / wave.sample_rate)
    return wave.replace(apply_response(wave.samples, bessel_response(f, bw)))


def resample(samples, n_out: int) -> np.ndarray:
    """Band-limited (FFT) resampling of a periodic record to ``n_out`` samples."""
    n_in = len(samples)
    if n_out == n_in:
        return np.array(samples, copy=True)
    return scipy.signal.resample(samples, n_out)


def _resampled_length(n: int, rate_in: float, rate_out: float) -> int:
    exact = n * rate_out / rate_in
    n_out = int(round(exact))
    if abs(exact - n_out) > 1e-6:
        raise ValueError(
            f"{n} samples at {rate_in:g} S/s do not map to an integer count at {rate_out:g} S/s"
        )
    return n_out


# --- transmitter -------------------------------------------------------------

def tx_response(f, config: LinkConfig) -> np.ndarray:
    """Combined DAC, driver and MZM electrical lowpass."""
    return (bessel_response(f, config.dac_bw) * bessel_response(f, config.driver_bw)
            * bessel_response(f, config.mzm_bw))


def dac_samples(symbols, config: LinkConfig) -> np.ndarray:
    """Tx DSP output at the DAC rate: resampled levels, optional preemphasis.

    Scaling is fixed by the symbol levels (unit peak before preemphasis), so
    the preemphasized waveform may overshoot +-1.
    """
    if config.symbol_rate > config.dac_rate:
        raise ValueError(
            f"symbol rate {config.symbol_rate:g} exceeds DAC rate {config.dac_rate:g}"
        )
    levels = Constellation(config.order).map(symbols)
    n = _resampled_length(len(levels), config.symbol_rate, config.dac_rate)
    s = resample(levels, n)
    if config.preemphasis:
        f = np.fft.fftfreq(n, 1.0 / config.dac_rate)
        inv = 1.0 / tx_response(f, config)
        gmax = 10 ** (config.preemphasis_max_db / 20)
        mag = np.abs(inv)
        inv = np.where(mag > gmax, inv * (gmax / mag), inv)
        s = apply_response(s, inv)
    return s


def dac(symbols, config: LinkConfig) -> Waveform:
    """DAC output on the analog grid: zero-order hold of the DAC samples, then DAC lowpass.

    Amplitude is relative to unit symbol peak.
    """
    s = dac_samples(symbols, config)
    held = np.repeat(s, config.analog_oversampling)
    return lowpass(Waveform(held, config.analog_rate), config.dac_bw)


def driver(wave: Waveform, config: LinkConfig) -> Waveform:
    """Driver and MZM electrode lowpass, then scaling to unit peak (the MZM drive convention)."""
    w = lowpass(lowpass(wave, config.driver_bw), config.mzm_bw)
    peak = np.max(np.abs(w.samples))
    return w.replace(w.samples / peak) if peak > 0 else w


def mzm(drive: Waveform, vpi: float, bias: float, vpp: float, laser_power: float = 1.0) -> Waveform:
    """Push-pull MZM field: ``sqrt(P) * cos(pi/2 * (v + bias) / vpi)`` with ``v = drive * vpp / 2``."""
    v = np.real(drive.samples) * (vpp / 2.0)
    field = np.sqrt(laser_power) * np.cos(0.5 * np.pi * (v + bias) / vpi)
    return drive.replace(field.astype(np.complex128))


# --- channel -----------------------------------------------------------------

def fiber(wave: Waveform, length_km: float, dispersion: float = 17.0,
          wavelength_nm: float = 1550.0) -> Waveform:
    """Chromatic dispersion all-pass ``exp(-j pi D lambda^2 f^2 L / c)``."""
    if length_km == 0:
        return wave.replace(np.array(wave.samples, dtype=np.complex128, copy=True))
    f = np.fft.fftfreq(len(wave), 1.0 / wave.sample_rate)
    D = dispersion * 1e-6  # s/m^2
    lam = wavelength_nm * 1e-9
    L = length_km * 1e3
    h = np.exp(-1j * np.pi * D * lam**2 * f**2 * L / const.c)
    return wave.replace(np.fft.ifft(np.fft.fft(wave.samples) * h))


def voa(wave: Waveform, power_dbm: float) -> Waveform:
    """Attenuate/amplify the field so the mean optical power equals ``power_dbm``."""
    p = np.mean(np.abs(wave.samples) ** 2)
    delta_db = power_dbm - 10 * np.log10(p)
    return wave.replace(wave.samples * 10 ** (delta_db / 20))


def photodiode(wave: Waveform, config: LinkConfig, rng: np.random.Generator | None = None) -> Waveform:
    """Square-law detection, PD lowpass, then signal-independent thermal noise."""
    i = np.abs(wave.samples) ** 2
    out = lowpass(wave.replace(i), config.pd_bw)
    if rng is not None and config.thermal_noise_sigma > 0:
        out = out.replace(out.samples + rng.normal(0.0, config.thermal_noise_sigma, len(out)))
    return out


# --- receiver front end ------------------------------------------------------

def quantize(samples, bits: int, lo: float, hi: float) -> np.ndarray:
    """Mid-rise uniform quantizer with ``2**bits`` codes spanning ``[lo, hi]``."""
    if not hi > lo:
        return np.array(samples, dtype=np.float64, copy=True)
    n_codes = 2 ** bits
    step = (hi - lo) / n_codes
    code = np.clip(np.floor((np.asarray(samples) - lo) / step), 0, n_codes - 1)
    return lo + (code + 0.5) * step


def adc(wave: Waveform, config: LinkConfig) -> Waveform:
    """Scope model: ADC lowpass, resample to the ADC rate, quantize over mean +- 3 sigma."""
    filtered = lowpass(wave, config.adc_bw)
    n = _resampled_length(len(filtered), filtered.sample_rate, config.adc_rate)
    s = resample(filtered.samples, n)
    mu, sigma = float(np.mean(s)), float(np.std(s))
    return Waveform(quantize(s, config.adc_bits, mu - 3 * sigma, mu + 3 * sigma), config.adc_rate)


def run_link(symbols, config: LinkConfig, seed: int | None = 0,
             stages: dict | None = None) -> Waveform:
    """Transmit symbol indices over the link and return the scope capture.

    ``seed=None`` disables the thermal noise. If ``stages`` is a dict it is
    filled with every intermediate waveform.
    """
    symbols = np.asarray(symbols)
    rng = None if seed is None else np.random.default_rng(seed)
    w = dac(symbols, config)
    w = driver(w, config)
    if stages is not None:
        stages["drive"] = w
    w = mzm(w, config.mzm_vpi, config.mzm_bias, config.vpp, config.laser_power)
    if stages is not None:
        stages["mzm"] = w
    w = fiber(w, config.fiber_len, config.dispersion, config.wavelength)
    if stages is not None:
        stages["fiber"] = w
    w = voa(w, config.pd_input_power)
    w = photodiode(w, config, rng)
    if stages is not None:
        stages["pd"] = w
    w = adc(w, config)
    if stages is not None:
        stages["adc"] = w
    return w


# --- waveform files ----------------------------------------------------------

_WAVE_MAGIC = b"VNLEWAVE"
_WAVE_VERSION = 1


def save_waveform(path, wave: Waveform, meta: dict | None = None) -> None:
    """16-byte header (magic, version, flags), float64 LE payload, JSON sidecar.

    Entries of ``meta`` are stored in the sidecar next to the sample rate.
    """
    path = Path(path)
    is_complex = wave.is_complex
    data = wave.samples.astype(np.complex128 if is_complex else np.float64)
    payload = data.view(np.float64).astype("<f8").tobytes()
    header = _WAVE_MAGIC + struct.pack("<II", _WAVE_VERSION, int(is_complex))
    path.write_bytes(header + payload)
    sidecar = {"sample_rate": wave.sample_rate, "t0": wave.t0, "complex": is_complex,
               "n_samples": len(wave), **(meta or {})}
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def load_waveform(path) -> Waveform:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:8] != _WAVE_MAGIC:
        raise ValueError(f"{path} is not a waveform file")
    version, is_complex = struct.unpack("<II", raw[8:16])
    if version != _WAVE_VERSION:
        raise ValueError(f"unsupported waveform version {version}")
    data = np.frombuffer(raw[16:], dtype="<f8").astype(np.float64)
    if is_complex:
        data = data.view(np.complex128)
    meta = load_waveform_meta(path)
    return Waveform(data, float(meta["sample_rate"]), float(meta.get("t0", 0.0)))


def load_waveform_meta(path) -> dict:
    return json.loads(Path(str(path) + ".json").read_text())
