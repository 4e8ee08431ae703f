"""Receiver DSP: DC block, resample to 2 sps, synchronize, equalize, demap."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .adapt import AdaptConfig, dd_refine, train
from .kernels import KernelSet, complexity
from .linksim import Waveform, resample
from .pam import BerReport, Constellation, count_errors
from .volterra import TapVector, equalize_sequence, n_outputs

SYNC_LEN = 4096
MIN_PSR = 3.0
ALIAS_THRESHOLD = 0.05


class SyncError(RuntimeError):
    pass


class AliasingWarning(UserWarning):
    pass


def dc_block(wave: Waveform) -> Waveform:
    if len(wave) == 0:
        raise ValueError("empty waveform")
    return wave.replace(wave.samples - np.mean(wave.samples))


def resample_2sps(wave: Waveform, symbol_rate: float) -> Waveform:
    """FFT resampling of a periodic capture to ``2 * symbol_rate``.

    Emits :class:`AliasingWarning` when more than 5 % of the AC power lies
    above the new Nyquist frequency and is discarded.
    """
    target = 2.0 * symbol_rate
    exact = len(wave) * target / wave.sample_rate
    n_out = int(round(exact))
    if abs(exact - n_out) > 1e-6:
        raise ValueError(f"{len(wave)} samples do not resample to an integer count at {target:g} S/s")
    if target < wave.sample_rate:
        spec = np.abs(np.fft.fft(wave.samples - np.mean(wave.samples))) ** 2
        f = np.abs(np.fft.fftfreq(len(wave), 1.0 / wave.sample_rate))
        total = spec.sum()
        lost = spec[f > target / 2].sum() / total if total > 0 else 0.0
        if lost > ALIAS_THRESHOLD:
            warnings.warn(
                f"{100 * lost:.1f}% of signal power lies above the {target / 2:g} Hz Nyquist limit",
                AliasingWarning, stacklevel=2,
            )
    return Waveform(resample(wave.samples, n_out), target, wave.t0)


@dataclass(frozen=True)
class SyncResult:
    offset: int
    polarity: int
    psr: float


def synchronize(x, known_symbols, constellation: Constellation | None = None,
                sync_len: int = SYNC_LEN) -> SyncResult:
    """Locate the known symbol prefix in a 2 sps capture.

    The training symbols are mapped to +-1 by sign, upsampled to 2 sps and
    cross-correlated circularly with the capture. ``offset`` is the sample
    index of symbol 0. Raises :class:`SyncError` when the correlation peak is
    less than 3x the largest sidelobe.
    """
    x = np.asarray(x.samples if isinstance(x, Waveform) else x, dtype=np.float64)
    known = np.asarray(known_symbols)
    if constellation is not None:
        known = constellation.map(known)
    ref = np.sign(known[: min(sync_len, len(known), len(x) // 2)])
    tpl = np.zeros(len(x))
    tpl[0 : 2 * len(ref) : 2] = ref
    corr = np.fft.ifft(np.fft.fft(x - np.mean(x)) * np.conj(np.fft.fft(tpl))).real
    mag = np.abs(corr)
    peak = int(np.argmax(mag))
    guard = np.ones(len(mag), dtype=bool)
    guard[[(peak + k) % len(mag) for k in range(-4, 5)]] = False
    side = mag[guard].max() if guard.any() else 0.0
    psr = float(mag[peak] / side) if side > 0 else float("inf")
    if psr < MIN_PSR:
        raise SyncError(f"correlation peak-to-sidelobe ratio {psr:.2f} below {MIN_PSR}")
    return SyncResult(peak, 1 if corr[peak] >= 0 else -1, psr)


def align(x, offset: int, kset: KernelSet) -> tuple[np.ndarray, int]:
    """Trim a 2 sps capture so equalizer output ``n`` decides symbol ``n + first``.

    Returns the trimmed samples and ``first``.
    """
    lead = kset.memory - 1 - kset.center
    first = max(0, -(-(lead - offset) // 2))
    start = offset + 2 * first - lead
    return np.asarray(x)[start:], first


@dataclass
class RxResult:
    report: BerReport
    taps: TapVector
    phase: int
    sync: SyncResult
    trace: np.ndarray


def run_rx(wave: Waveform, kset: KernelSet, symbols, constellation: Constellation,
           symbol_rate: float, taps: TapVector | None = None,
           adapt: AdaptConfig | None = AdaptConfig(), exclude: int | None = None) -> RxResult:
    """DC block, resample, synchronize, adapt (optional), equalize, decide, count.

    With ``adapt=None`` the given ``taps`` are applied as they are. Otherwise
    both T/2 phases are trained from ``taps`` (center spike by default) and the
    phase with the lower final training MSE is refined with DD-LMS. The first
    ``exclude`` symbols (default ``2 * memory``) are not counted.
    """
    symbols = np.asarray(symbols)
    w = dc_block(wave)
    w = resample_2sps(w, symbol_rate)
    ref = constellation.map(symbols)
    sync = synchronize(w.samples, ref)
    x = w.samples * sync.polarity
    x = x * (constellation.rms / np.sqrt(np.mean(x**2)))
    x, first = align(x, sync.offset, kset)
    # phase 1 yields at most as many outputs as phase 0, so its count bounds both
    n_out = min(n_outputs(len(x), kset, 1), len(symbols) - first)
    if n_out < 1:
        raise ValueError("capture too short for the equalizer memory")
    known = ref[first:first + n_out]
    init = taps if taps is not None else TapVector.center_spike(kset)

    if adapt is None:
        if taps is None:
            raise ValueError("taps are required when adaptation is disabled")
        best_phase, best_taps, trace = 0, taps, np.array([])
    else:
        best = None
        for phase in (0, 1):
            t, tr = train(init, kset, x, known, adapt, phase, constellation)
            if best is None or tr[-1] < best[2][-1]:
                best = (phase, t, tr)
        best_phase, best_taps, trace = best
        n_train = min(adapt.train_len, n_out)
        best_taps = dd_refine(best_taps, kset, x, constellation, adapt, best_phase, start=n_train)

    y = equalize_sequence(best_taps, kset, x, best_phase)[:n_out]
    decisions = constellation.decide_index(y)
    skip = 2 * kset.memory if exclude is None else exclude
    skip = min(skip, n_out)
    if constellation.order == 6 and (first + skip) % 2:
        skip += 1  # keep PAM6 symbol pairs aligned with the transmitted bit blocks
    report = count_errors(symbols[first + skip:first + n_out], decisions[skip:n_out], constellation.order)
    c = complexity(kset)
    report = replace(report, N1=c.N1, N2=c.N2, N3=c.N3, mult_count=c.mult_count)
    return RxResult(report, best_taps, best_phase, sync, trace)
