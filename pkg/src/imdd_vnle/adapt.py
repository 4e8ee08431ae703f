"""LMS tap adaptation: training-symbol LMS, then decision-directed LMS."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _core
from .kernels import KernelSet
from .pam import Constellation
from .volterra import TapVector, n_outputs, output_time

NLMS_EPS = 1e-8
BLOCK = 500


class DivergenceError(RuntimeError):
    """LMS produced a non-finite or runaway error."""


class MisalignmentError(RuntimeError):
    """Training did not converge, most likely because of a synchronization failure."""


@dataclass(frozen=True)
class AdaptConfig:
    mu_train: float = 0.2
    mu_dd: float = 1e-4
    train_len: int = 40_000
    dd_len: int = 100_000
    train_passes: int = 4
    normalized: bool = True
    block: int = BLOCK
    err_limit: float = 1e3  # times the constellation peak
    misalign_ratio: float = 0.5

    def __post_init__(self):
        if self.mu_train < 0 or self.mu_dd < 0:
            raise ValueError("step sizes must be non-negative")
        if self.train_len < 0 or self.dd_len < 0:
            raise ValueError("adaptation lengths must be non-negative")
        if self.train_passes < 1:
            raise ValueError("train_passes must be at least 1")


def lms_step(taps: TapVector, reg, reference: float, mu: float, normalized: bool = False,
             eps: float = NLMS_EPS) -> tuple[TapVector, float]:
    """One LMS update. Returns the new taps and the a-priori error."""
    reg = np.asarray(reg, dtype=np.float64)
    w = taps.flat
    if w.shape != reg.shape:
        raise ValueError(f"tap vector length {w.shape} != regressor length {reg.shape}")
    with np.errstate(all="ignore"):
        e = float(reference - w @ reg)
    if not np.isfinite(e) or not np.isfinite(reg).all():
        raise DivergenceError(f"non-finite LMS error (e={e})")
    step = mu / (eps + reg @ reg) if normalized else mu
    with np.errstate(all="ignore"):
        w_new = w + step * e * reg
    if not np.isfinite(w_new).all():
        raise DivergenceError("non-finite tap after LMS update")
    a, b = 1 + len(taps.w1), 1 + len(taps.w1) + len(taps.w2)
    return TapVector(w_new[0], w_new[1:a], w_new[a:b], w_new[b:]), e


def _run(taps, kset, x, phase, start, n_steps, refs, levels, mu, config):
    taps.check(kset)
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = taps.flat.copy()
    errors = np.zeros(n_steps)
    if n_steps == 0:
        return taps.copy(), errors
    status, idx = _core.lms_run(
        x, w, *kset.lag_arrays(), int(output_time(start, kset, phase)), 2, n_steps,
        refs, levels, float(mu), bool(config.normalized), NLMS_EPS,
        float(config.err_limit * np.max(np.abs(levels))), errors,
    )
    if status == _core.NONFINITE:
        raise DivergenceError(f"LMS error became non-finite at step {idx}")
    if status == _core.ERROR_LIMIT:
        raise DivergenceError(
            f"LMS error {errors[idx]:.3g} exceeded {config.err_limit:g}x the constellation peak "
            f"at step {idx}; reduce the step size"
        )
    return TapVector.from_flat(w, kset), errors


def block_mse(errors, block: int = BLOCK) -> np.ndarray:
    n = len(errors) // block
    if n == 0:
        return np.array([np.mean(np.square(errors))]) if len(errors) else np.array([])
    return np.mean(np.square(errors[: n * block]).reshape(n, block), axis=1)


def train(taps: TapVector, kset: KernelSet, x, known, config: AdaptConfig = AdaptConfig(),
          phase: int = 0, constellation: Constellation | None = None) -> tuple[TapVector, np.ndarray]:
    """Supervised LMS on the first ``train_len`` outputs.

    The training record is swept ``config.train_passes`` times; the returned
    trace covers the last sweep only. ``known[n]`` is the reference amplitude for equalizer output ``n`` (see
    :func:`volterra.equalize_sequence` for the output/sample alignment).
    Returns the trained taps and the per-block MSE trace.
    """
    known = np.asarray(known, dtype=np.float64)
    n_steps = min(config.train_len, len(known), n_outputs(len(x), kset, phase))
    levels = constellation.levels if constellation is not None else np.array([np.max(np.abs(known))])
    for _ in range(config.train_passes):
        taps, errors = _run(taps, kset, x, phase, 0, n_steps, known[:n_steps], levels,
                            config.mu_train, config)
    trace = block_mse(errors, config.block)
    if n_steps >= 2 * config.block:
        power = np.mean(known[:n_steps] ** 2)
        if trace[-1] > config.misalign_ratio * power:
            raise MisalignmentError(
                f"training MSE {trace[-1]:.3g} stayed above {config.misalign_ratio:g}x the "
                f"reference power {power:.3g}; probable synchronization failure"
            )
    return taps, trace


def dd_refine(taps: TapVector, kset: KernelSet, x, constellation: Constellation,
              config: AdaptConfig = AdaptConfig(), phase: int = 0, start: int = 0,
              return_trace: bool = False):
    """Decision-directed LMS over ``dd_len`` outputs starting at output ``start``."""
    n_steps = max(min(config.dd_len, n_outputs(len(x), kset, phase) - start), 0)
    taps, errors = _run(taps, kset, x, phase, start, n_steps, np.empty(0), constellation.levels,
                        config.mu_dd, config)
    if return_trace:
        return taps, block_mse(errors, config.block)
    return taps


def write_learning_curve(path, trace) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["block_index", "mse"])
        for i, v in enumerate(trace):
            writer.writerow([i, repr(float(v))])
