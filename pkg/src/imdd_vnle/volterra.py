"""Volterra equalizer evaluation restricted to an arbitrary kernel set.

The equalizer input is T/2-spaced and the output symbol-spaced. Every order's
lag window is centered on the same sample (the linear center tap), so short
nonlinear memories sit around the symbol being decided rather than at the
newest edge of the window.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _core
from .kernels import KernelSet


@dataclass
class TapVector:
    """Equalizer coefficients aligned index-for-index with a :class:`KernelSet`."""

    w_dc: float
    w1: np.ndarray
    w2: np.ndarray
    w3: np.ndarray

    def __post_init__(self):
        self.w_dc = float(self.w_dc)
        self.w1 = np.asarray(self.w1, dtype=np.float64).reshape(-1)
        self.w2 = np.asarray(self.w2, dtype=np.float64).reshape(-1)
        self.w3 = np.asarray(self.w3, dtype=np.float64).reshape(-1)
        if not np.isfinite(self.flat).all():
            raise ValueError("tap values must be finite")

    @property
    def flat(self) -> np.ndarray:
        """``[w_dc, w1..., w2..., w3...]``, the same layout as a regressor."""
        return np.concatenate(([self.w_dc], self.w1, self.w2, self.w3))

    @classmethod
    def from_flat(cls, w, kset: KernelSet) -> TapVector:
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (kset.n_features,):
            raise ValueError(f"expected {kset.n_features} taps, got {w.shape}")
        a, b = 1 + kset.N1, 1 + kset.N1 + kset.N2
        return cls(w[0], w[1:a], w[a:b], w[b:])

    @classmethod
    def zeros(cls, kset: KernelSet) -> TapVector:
        return cls(0.0, np.zeros(kset.N1), np.zeros(kset.N2), np.zeros(kset.N3))

    @classmethod
    def center_spike(cls, kset: KernelSet) -> TapVector:
        """Unit linear tap at lag ``M1 // 2``, everything else zero."""
        taps = cls.zeros(kset)
        taps.w1[kset.linear.index(kset.M1 // 2)] = 1.0
        return taps

    def check(self, kset: KernelSet) -> None:
        if (len(self.w1), len(self.w2), len(self.w3)) != (kset.N1, kset.N2, kset.N3):
            raise ValueError(
                f"tap lengths {(len(self.w1), len(self.w2), len(self.w3))} do not match "
                f"kernel set {(kset.N1, kset.N2, kset.N3)}"
            )

    def copy(self) -> TapVector:
        return TapVector(self.w_dc, self.w1.copy(), self.w2.copy(), self.w3.copy())


def regressor(x, kset: KernelSet, k: int) -> np.ndarray:
    """Feature vector for output time ``k`` (``x[k]`` is the newest sample used).

    Layout: DC constant, linear, second-order and third-order products in
    kernel-set order. Raises ``ValueError`` when ``x`` does not reach back far
    enough for the full memory.
    """
    x = np.asarray(x, dtype=np.float64)
    if k - (kset.memory - 1) < 0 or k >= len(x):
        raise ValueError(
            f"window for k={k} needs samples {k - kset.memory + 1}..{k}, have 0..{len(x) - 1}"
        )
    out = np.empty(kset.n_features)
    _core.fill_features(x, k, *kset.lag_arrays(), out)
    return out


def evaluate(taps: TapVector | np.ndarray, reg: np.ndarray) -> float:
    """Inner product of taps (DC included) and features."""
    w = taps.flat if isinstance(taps, TapVector) else np.asarray(taps, dtype=np.float64)
    if w.shape != reg.shape:
        raise ValueError(f"tap vector length {w.shape} != regressor length {reg.shape}")
    return float(w @ reg)


def n_outputs(n_samples: int, kset: KernelSet, phase: int = 0) -> int:
    return max((n_samples - kset.memory - phase) // 2 + 1, 0)


def output_time(n, kset: KernelSet, phase: int = 0):
    """Newest input sample index used by output symbol ``n``."""
    return 2 * np.asarray(n) + phase + kset.memory - 1


def equalize_sequence(taps: TapVector, kset: KernelSet, x, phase: int = 0) -> np.ndarray:
    """Apply the equalizer to a 2 samples/symbol sequence, one output per symbol.

    Outputs start once the full memory is available, so the output length is
    ``(len(x) - memory - phase) // 2 + 1``. Output ``n`` is centered on input
    sample ``2 n + phase + memory - 1 - kset.center``.
    """
    if phase not in (0, 1):
        raise ValueError(f"phase must be 0 or 1, got {phase!r}")
    taps.check(kset)
    x = np.ascontiguousarray(x, dtype=np.float64)
    n_out = n_outputs(len(x), kset, phase)
    if n_out < 1:
        raise ValueError(f"input of {len(x)} samples is shorter than memory {kset.memory}")
    return _core.equalize(x, taps.flat, *kset.lag_arrays(), int(output_time(0, kset, phase)), 2, n_out)


_TAP_MAGIC = "VNLETAPS 1"


def save_taps(path, taps: TapVector, kset: KernelSet) -> None:
    """Text header (scheme and memories) followed by little-endian float64 taps."""
    header = (
        f"{_TAP_MAGIC}\nscheme={kset.scheme}\nM1={kset.M1}\nM2={kset.M2}\nM3={kset.M3}\n"
        f"d={'' if kset.d is None else kset.d}\nsecond_scheme={kset.second_scheme}\n"
        f"d2={'' if kset.d2 is None else kset.d2}\nn={kset.n_features}\n\n"
    )
    w = taps.flat
    Path(path).write_bytes(header.encode("ascii") + struct.pack(f"<{len(w)}d", *w))


def load_taps(path) -> tuple[TapVector, KernelSet]:
    from .kernels import build_kernel_set

    raw = Path(path).read_bytes()
    head, sep, body = raw.partition(b"\n\n")
    if not sep:
        raise ValueError("tap file has no header terminator")
    lines = head.decode("ascii").splitlines()
    if lines[0] != _TAP_MAGIC:
        raise ValueError(f"not a tap file (magic {lines[0]!r})")
    meta = dict(ln.split("=", 1) for ln in lines[1:])
    opt = lambda v: int(v) if v else None  # noqa: E731
    kset = build_kernel_set(
        int(meta["M1"]), int(meta["M2"]), int(meta["M3"]), meta["scheme"], opt(meta["d"]),
        meta["second_scheme"], opt(meta["d2"]),
    )
    n = int(meta["n"])
    if len(body) != 8 * n or n != kset.n_features:
        raise ValueError("tap payload size does not match header")
    return TapVector.from_flat(np.frombuffer(body, dtype="<f8").copy(), kset), kset
