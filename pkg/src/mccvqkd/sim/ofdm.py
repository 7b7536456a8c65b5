"""
OFDM multi-carrier transmitter and receiver DSP.

Signals are complex baseband records at ``sps`` samples per aggregate
symbol. All filtering is done in the frequency domain over the whole record,
so the record is treated as periodic: channel memory wraps around instead of
spilling past the ends.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.signal import hilbert


class SyncError(RuntimeError):
    """Training-sequence correlation peak below the detection threshold."""


@dataclass(frozen=True)
class TxPlan:
    """Transmitter configuration.

    Rates in GHz (GSym/s, GSa/s). ``V_A`` is per subcarrier in SNU; a scalar
    applies to all of them. Each block holds ``frames_per_block`` OFDM frames,
    the first ``ts_fraction`` of which carry training symbols on every
    subcarrier.
    """

    N: int = 5
    f_sym: float = 10.0
    ts_fraction: float = 0.2
    rrc_rolloff: float = 0.3
    dac_rate: float = 30.0
    f_shift: float = 8.5
    V_A: float | Sequence[float] = 3.8
    sps: int = 4
    frames_per_block: int = 200
    pilot_db: float = 20.0
    ts_seed: int = 0x5EED

    def __post_init__(self) -> None:
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if not 0 < self.ts_fraction < 1:
            raise ValueError(f"ts_fraction must lie in (0, 1), got {self.ts_fraction}")
        if not 0 <= self.rrc_rolloff <= 1:
            raise ValueError(f"rrc_rolloff must lie in [0, 1], got {self.rrc_rolloff}")
        if self.sps < 2:
            raise ValueError("sps must be >= 2")
        ts = self.frames_per_block * self.ts_fraction
        if abs(ts - round(ts)) > 1e-9 or not 0 < round(ts) < self.frames_per_block:
            raise ValueError(
                f"frames_per_block ({self.frames_per_block}) times ts_fraction must be an integer in (0, frames)"
            )
        va = np.atleast_1d(np.asarray(self.V_A, dtype=float))
        if va.size not in (1, self.N) or np.any(va < 0):
            raise ValueError(f"V_A must be a non-negative scalar or have N = {self.N} entries")

    @property
    def f_sub(self) -> float:
        return self.f_sym / self.N

    @property
    def sample_rate(self) -> float:
        return self.f_sym * self.sps

    @property
    def V_A_per_subcarrier(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.V_A, dtype=float), (self.N,)).copy()

    @property
    def ts_frames(self) -> int:
        return int(round(self.frames_per_block * self.ts_fraction))

    @property
    def key_frames(self) -> int:
        return self.frames_per_block - self.ts_frames

    @property
    def block_symbols(self) -> int:
        return self.frames_per_block * self.N

    @property
    def block_samples(self) -> int:
        return self.block_symbols * self.sps

    def training_symbols(self) -> np.ndarray:
        """Constant-amplitude QPSK training frames, shape ``(ts_frames, N)``.

        ``|t|^2`` equals the subcarrier's modulation variance. Identical in
        every block so blocks can be superimposed.
        """
        rng = np.random.default_rng(self.ts_seed)
        bits = rng.integers(0, 2, size=(2, self.ts_frames, self.N))
        qpsk = ((2 * bits[0] - 1) + 1j * (2 * bits[1] - 1)) / np.sqrt(2.0)
        return qpsk * np.sqrt(self.V_A_per_subcarrier)


@dataclass(frozen=True)
class IQFrame:
    """Sampled complex record.

    ``symbols`` keeps the serial OFDM symbol stream before pulse shaping
    (transmitter side only); ``ts_mask`` flags its training symbols.
    ``center`` is the carrier offset of the content in GHz.
    """

    samples: np.ndarray
    sample_rate: float
    block_length: int
    ts_mask: np.ndarray
    sps: int
    n_blocks: int
    kind: str = "signal"
    center: float = 0.0
    symbols: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.samples.shape != (self.n_blocks * self.block_length * self.sps,):
            raise ValueError(
                f"sample count {self.samples.shape} inconsistent with "
                f"{self.n_blocks} blocks x {self.block_length} symbols x {self.sps}"
            )
        if self.kind not in ("signal", "pilot"):
            raise ValueError(f"kind must be 'signal' or 'pilot', got {self.kind!r}")

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def time(self) -> np.ndarray:
        """Sample instants in ns."""
        return np.arange(self.samples.size) / self.sample_rate

    def with_samples(self, samples: np.ndarray, **changes) -> "IQFrame":
        return replace(self, samples=np.asarray(samples, dtype=complex), **changes)


def raised_cosine_response(freqs: np.ndarray, f_sym: float, rolloff: float) -> np.ndarray:
    """Raised-cosine spectrum with unit passband; folded copies sum to one."""
    a = np.abs(np.asarray(freqs, dtype=float)) / f_sym
    if rolloff == 0:
        return np.where(a < 0.5, 1.0, np.where(np.isclose(a, 0.5), 0.5, 0.0))
    lo, hi = (1 - rolloff) / 2, (1 + rolloff) / 2
    out = np.zeros_like(a)
    out[a <= lo] = 1.0
    mid = (a > lo) & (a <= hi)
    out[mid] = 0.5 * (1 + np.cos(np.pi / rolloff * (a[mid] - lo)))
    return out


def rrc_response(n: int, sample_rate: float, f_sym: float, rolloff: float, sps: int) -> np.ndarray:
    """DFT-domain root-raised-cosine filter for an ``n``-sample record.

    Scaled so transmit and matched filter in cascade reproduce the symbol
    at the symbol centre with unit gain.
    """
    f = np.fft.fftfreq(n, 1.0 / sample_rate)
    return np.sqrt(sps * raised_cosine_response(f, f_sym, rolloff))


def rrc_taps(rolloff: float, sps: int, span: int) -> np.ndarray:
    """Unit-energy time-domain RRC taps over ``2 * span + 1`` symbols."""
    t = np.arange(-span * sps, span * sps + 1) / sps
    h = np.empty_like(t)
    a = rolloff
    for i, ti in enumerate(t):
        if abs(ti) < 1e-12:
            h[i] = 1 - a + 4 * a / np.pi
        elif a > 0 and abs(abs(4 * a * ti) - 1) < 1e-9:
            h[i] = a / np.sqrt(2) * (
                (1 + 2 / np.pi) * np.sin(np.pi / (4 * a)) + (1 - 2 / np.pi) * np.cos(np.pi / (4 * a))
            )
        else:
            h[i] = (np.sin(np.pi * ti * (1 - a)) + 4 * a * ti * np.cos(np.pi * ti * (1 + a))) / (
                np.pi * ti * (1 - (4 * a * ti) ** 2)
            )
    return h / np.sqrt(np.sum(h**2))


def _filter(x: np.ndarray, response: np.ndarray) -> np.ndarray:
    return np.fft.ifft(np.fft.fft(x) * response)


def _shift(x: np.ndarray, freq: float, sample_rate: float) -> np.ndarray:
    n = np.arange(x.size)
    return x * np.exp(2j * np.pi * freq * n / sample_rate)


def _as_subcarrier_streams(key_symbols, N: int) -> np.ndarray:
    arr = np.asarray(key_symbols, dtype=complex)
    if arr.ndim == 1:
        if arr.size % N:
            raise ValueError(f"symbol count {arr.size} is not divisible by N = {N}")
        # Serial-to-parallel: consecutive symbols fill one frame across subcarriers.
        return arr.reshape(-1, N).T
    if arr.ndim != 2 or arr.shape[0] != N:
        raise ValueError(f"expected {N} subcarrier streams, got shape {arr.shape}")
    return arr


def mc_generate(key_symbols, plan: TxPlan) -> IQFrame:
    """Map per-subcarrier symbols into a shaped, frequency-shifted OFDM record.

    ``key_symbols`` has shape ``(N, n)`` or is a flat serial stream whose
    length is divisible by ``N``; ``n`` must fill whole blocks.
    """
    streams = _as_subcarrier_streams(key_symbols, plan.N)
    n = streams.shape[1]
    if n == 0 or n % plan.key_frames:
        raise ValueError(
            f"{n} symbols per subcarrier do not fill whole blocks of {plan.key_frames} key frames"
        )
    B = n // plan.key_frames
    F, N = plan.frames_per_block, plan.N
    grid = np.empty((B, F, N), dtype=complex)
    grid[:, : plan.ts_frames, :] = plan.training_symbols()
    grid[:, plan.ts_frames :, :] = streams.reshape(N, B, plan.key_frames).transpose(1, 2, 0)
    serial = np.fft.ifft(grid, axis=-1, norm="ortho").reshape(-1)

    up = np.zeros(serial.size * plan.sps, dtype=complex)
    up[:: plan.sps] = serial
    H = rrc_response(up.size, plan.sample_rate, plan.f_sym, plan.rrc_rolloff, plan.sps)
    shaped = _shift(_filter(up, H), -plan.f_shift, plan.sample_rate)

    ts_mask = np.zeros((B, F, N), dtype=bool)
    ts_mask[:, : plan.ts_frames, :] = True
    return IQFrame(
        samples=shaped,
        sample_rate=plan.sample_rate,
        block_length=plan.block_symbols,
        ts_mask=ts_mask.reshape(-1),
        sps=plan.sps,
        n_blocks=B,
        kind="signal",
        center=-plan.f_shift,
        symbols=serial,
    )


def pilot_tone(plan: TxPlan, like: IQFrame) -> IQFrame:
    """Unmodulated carrier ``pilot_db`` above the per-subcarrier signal power."""
    per_sub = float(np.mean(plan.V_A_per_subcarrier)) / (plan.N * plan.sps)
    amp = np.sqrt(10 ** (plan.pilot_db / 10) * max(per_sub, 1e-12))
    return replace(
        like,
        samples=np.full(like.samples.size, amp, dtype=complex),
        kind="pilot",
        center=0.0,
        symbols=None,
    )


@dataclass(frozen=True)
class DemodResult:
    """Recovered subcarrier streams and receiver diagnostics.

    ``streams`` has shape ``(N, blocks, frames_per_block)``; the first
    ``ts_frames`` frames of each block are training symbols.
    """

    streams: np.ndarray
    ts_frames: int
    sync_lag: int
    sync_score: float
    delta_f_est: float
    slow_phase: np.ndarray  # (N, groups) applied phase corrections, rad

    @property
    def key_symbols(self) -> np.ndarray:
        N = self.streams.shape[0]
        return self.streams[:, :, self.ts_frames :].reshape(N, -1)

    @property
    def training(self) -> np.ndarray:
        return self.streams[:, :, : self.ts_frames]

    @property
    def ts_mask(self) -> np.ndarray:
        mask = np.zeros(self.streams.shape, dtype=bool)
        mask[:, :, : self.ts_frames] = True
        return mask


def _bandpass(x: np.ndarray, sample_rate: float, center: float, half_width: float) -> np.ndarray:
    f = np.fft.fftfreq(x.size, 1.0 / sample_rate)
    return _filter(x, (np.abs(f - center) <= half_width).astype(float))


def estimate_beat(pilot: np.ndarray, sample_rate: float) -> float:
    """Coarse pilot frequency (GHz) from the spectral peak."""
    spec = np.abs(np.fft.fft(pilot))
    f = np.fft.fftfreq(pilot.size, 1.0 / sample_rate)
    return float(f[int(np.argmax(spec))])


def _fine_frequency(phasor: np.ndarray, sample_rate: float) -> float:
    phase = np.unwrap(np.angle(phasor))
    n = np.arange(phase.size)
    slope = np.polyfit(n, phase, 1)[0]
    return float(slope * sample_rate / (2 * np.pi))


def synchronize(z: np.ndarray, plan: TxPlan, n_blocks: int, threshold: float = 0.5) -> tuple[int, float]:
    """Sample lag of the block start via correlation against the training template.

    Blocks are superimposed first, so the training symbols add coherently.
    The score is the normalized correlation coefficient at the peak (1 for
    a noiseless, undistorted record).
    """
    P = plan.block_samples
    avg = z.reshape(n_blocks, P).mean(axis=0)
    ts_serial = np.fft.ifft(plan.training_symbols(), axis=-1, norm="ortho").reshape(-1)
    idx = np.arange(ts_serial.size) * plan.sps
    template = np.zeros(P, dtype=complex)
    template[idx] = ts_serial
    corr = np.fft.ifft(np.fft.fft(avg) * np.conj(np.fft.fft(template)))
    lag = int(np.argmax(np.abs(corr)))
    seg = avg[(idx + lag) % P]
    denom = np.linalg.norm(ts_serial) * np.linalg.norm(seg)
    score = float(np.abs(corr[lag]) / denom) if denom > 0 else 0.0
    if score < threshold:
        raise SyncError(f"training correlation {score:.3f} below threshold {threshold}")
    return lag, score


def _block_lms_phase(y: np.ndarray, t: np.ndarray, step: float, passes: int) -> np.ndarray:
    """Single-tap block LMS on training pairs; returns the phase of the tap.

    ``y`` and ``t`` have shape ``(..., n)``; the tap is adapted with the
    block-averaged gradient normalized by the received power.
    """
    power = np.mean(np.abs(y) ** 2, axis=-1)
    power = np.where(power > 0, power, 1.0)
    w = np.ones(y.shape[:-1], dtype=complex)
    for _ in range(passes):
        err = t - w[..., None] * y
        w = w + step * np.mean(np.conj(y) * err, axis=-1) / power
    return np.angle(w)


def mc_demodulate(
    y_sig: IQFrame,
    y_pilot: IQFrame,
    plan: TxPlan,
    M: int = 16,
    *,
    fast_pnc: bool = True,
    slow_pnc: bool = True,
    sync_threshold: float = 0.5,
    pilot_bandwidth: float = 0.05,
    lms_step: float = 0.5,
    lms_passes: int = 32,
) -> DemodResult:
    """Recover the ``N`` subcarrier symbol streams from detected records.

    Fast phase drift is removed with the pilot's instantaneous phase, slow
    drift per subcarrier with a single-tap block LMS trained on the
    training symbols superimposed over groups of ``M`` blocks.
    """
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    fs = y_sig.sample_rate
    B = y_sig.n_blocks
    delta_f = estimate_beat(y_pilot.samples, fs)
    if_center = delta_f - plan.f_shift
    half_bw = (1 + plan.rrc_rolloff) * plan.f_sym / 2 + 0.25
    sig = _bandpass(y_sig.samples, fs, if_center, half_bw)
    pil = _bandpass(y_pilot.samples, fs, delta_f, pilot_bandwidth / 2)
    pil = hilbert(np.real(pil))

    if fast_pnc:
        mag = np.abs(pil)
        phasor = pil / np.where(mag > 0, mag, 1.0)
        base = _shift(sig * np.conj(phasor), plan.f_shift, fs)
    else:
        base = _shift(sig, -(_fine_frequency(pil, fs) - plan.f_shift), fs)

    H = rrc_response(base.size, fs, plan.f_sym, plan.rrc_rolloff, plan.sps)
    mf = _filter(base, H)
    lag, score = synchronize(mf, plan, B, sync_threshold)
    serial = np.roll(mf, -lag)[:: plan.sps]
    frames = serial.reshape(B, plan.frames_per_block, plan.N)
    streams = np.fft.fft(frames, axis=-1, norm="ortho").transpose(2, 0, 1)

    groups = -(-B // M)
    slow = np.zeros((plan.N, groups))
    if slow_pnc:
        ts = plan.training_symbols().T  # (N, ts_frames)
        for g in range(groups):
            sl = slice(g * M, min((g + 1) * M, B))
            stacked = streams[:, sl, : plan.ts_frames].mean(axis=1)
            slow[:, g] = _block_lms_phase(stacked, ts, lms_step, lms_passes)
            streams[:, sl, :] *= np.exp(1j * slow[:, g])[:, None, None]
    return DemodResult(
        streams=streams,
        ts_frames=plan.ts_frames,
        sync_lag=lag,
        sync_score=score,
        delta_f_est=delta_f,
        slow_phase=slow,
    )
