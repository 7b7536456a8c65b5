"""
Channel-parameter estimation and shot-noise-unit calibration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


class DegenerateInputError(ValueError):
    """Transmitted symbols carry no variance."""


class NoOffSegmentError(ValueError):
    """Calibration trace contains no signal-off segment."""


@dataclass(frozen=True)
class ChannelEstimate:
    T_hat: float
    xi_hat: float
    gain: complex
    tx_variance: float
    m: int


def estimate_channel(
    tx_symbols,
    rx_symbols,
    snu_reference: float = 1.0,
    *,
    eta: float = 1.0,
    v_el: float = 0.0,
    noise_floor: float | None = None,
) -> ChannelEstimate:
    """Estimate transmittance and channel-referred excess noise.

    ``rx_symbols`` are divided by ``sqrt(snu_reference)`` first. The
    detection noise floor defaults to ``2 + v_el`` SNU (heterodyne vacuum
    plus electronic noise); pass 0 for noiseless detection.
    """
    s = np.asarray(tx_symbols, dtype=complex).ravel()
    y = np.asarray(rx_symbols, dtype=complex).ravel() / math.sqrt(snu_reference)
    if s.size != y.size:
        raise ValueError(f"paired sequences differ in length: {s.size} vs {y.size}")
    if s.size < 2:
        raise ValueError("need at least two symbol pairs")
    power = float(np.mean(np.abs(s) ** 2))
    if power == 0:
        raise DegenerateInputError("transmitted symbols have zero variance")
    gain = complex(np.mean(np.conj(s) * y) / power)
    t = gain.real
    T_hat = t * t / eta
    floor = 2.0 + v_el if noise_floor is None else noise_floor
    resid = float(np.mean(np.abs(y - t * s) ** 2))
    xi_hat = (resid - floor) / (eta * T_hat) if T_hat > 0 else math.inf
    return ChannelEstimate(T_hat, xi_hat, gain, power, int(s.size))


def gaussian_channel(
    m: int,
    V_A: float,
    T: float,
    xi: float,
    *,
    eta: float = 1.0,
    v_el: float = 0.0,
    rng: np.random.Generator | int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Symbol-level linear Gaussian channel with heterodyne detection."""
    rng = np.random.default_rng(rng)

    def cn(var: float) -> np.ndarray:
        s = math.sqrt(var / 2)
        return rng.normal(scale=s, size=m) + 1j * rng.normal(scale=s, size=m)

    s = cn(V_A)
    y = math.sqrt(eta * T) * s + cn(eta * T * xi + 2.0 + v_el)
    return s, y


@dataclass(frozen=True)
class SnuTrace:
    """Real balanced-detector record of alternating on/off segments.

    ``on`` flags each segment; ``gain`` is the true detector gain per segment.
    """

    samples: np.ndarray
    segment_length: int
    on: np.ndarray
    gain: np.ndarray
    v_el: float

    @property
    def segments(self) -> np.ndarray:
        return self.samples.reshape(-1, self.segment_length)


def snu_trace(
    n_pairs: int,
    segment_length: int,
    *,
    v_el: float = 0.0,
    signal_power: float = 0.0,
    extinction_db: float = math.inf,
    gain_drift: float = 0.0,
    rng: np.random.Generator | int | None = None,
) -> SnuTrace:
    """Simulate an on/off switched record starting with a signal-on segment.

    Off segments hold vacuum plus electronic noise (``1 + v_el`` per
    quadrature) and signal leakage at the switch extinction ratio. The
    detector gain ramps linearly by ``+-gain_drift`` across the record.
    Vacuum and signal draws come from separate streams, so traces differing
    only in extinction ratio share their noise.
    """
    n_seg = 2 * n_pairs
    noise_rng, sig_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(
        np.random.default_rng(rng).integers(2**63)).spawn(2))
    on = np.tile([True, False], n_pairs)
    gain = 1.0 + gain_drift * np.linspace(-1.0, 1.0, n_seg)
    vac = noise_rng.normal(scale=math.sqrt(1.0 + v_el), size=(n_seg, segment_length))
    sig = sig_rng.normal(scale=math.sqrt(signal_power), size=(n_seg, segment_length))
    leak = 10 ** (-extinction_db / 20) if math.isfinite(extinction_db) else 0.0
    field = vac + sig * np.where(on, 1.0, leak)[:, None]
    samples = field * np.sqrt(gain)[:, None]
    return SnuTrace(samples.reshape(-1), segment_length, on, gain, v_el)


@dataclass(frozen=True)
class SnuReference:
    """Shot-noise unit in raw variance units (electronic noise folded in).

    ``per_pair`` holds one estimate per on/off pair; in one-time mode every
    entry equals the initial calibration.
    """

    value: float
    per_pair: np.ndarray
    mode: str


def calibrate_snu(
    trace: SnuTrace,
    mode: str = "one-time",
    dsp: Callable[[np.ndarray], np.ndarray] | None = None,
) -> SnuReference:
    """Shot-noise unit from the signal-off segments of ``trace``.

    ``dsp`` is applied to every segment before its variance is taken, so
    calibration sees the same filtering as the signal.
    """
    if mode not in ("one-time", "real-time"):
        raise ValueError(f"mode must be 'one-time' or 'real-time', got {mode!r}")
    off = np.flatnonzero(~np.asarray(trace.on))
    if off.size == 0:
        raise NoOffSegmentError("trace has no signal-off segment")
    segs = trace.segments
    proc = (lambda x: x) if dsp is None else dsp
    est = np.array([float(np.var(proc(segs[i]))) for i in off])
    if mode == "one-time":
        return SnuReference(float(est[0]), np.full(est.size, est[0]), mode)
    return SnuReference(float(np.mean(est)), est, mode)
