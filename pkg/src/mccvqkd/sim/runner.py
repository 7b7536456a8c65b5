"""
End-to-end Monte-Carlo runs: generate, propagate, detect, demodulate and
estimate each subcarrier's channel.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from ..keyrate import DetectorModel
from ..noise import FiberModel
from .channel import ImpairmentState, apply_channel, heterodyne_detect
from .estimate import ChannelEstimate, estimate_channel
from .ofdm import DemodResult, TxPlan, mc_demodulate, mc_generate, pilot_tone


@dataclass(frozen=True)
class SimulationConfig:
    plan: TxPlan = field(default_factory=TxPlan)
    fiber: FiberModel = field(default_factory=lambda: FiberModel(0.0, loss_db=0.0))
    detector: DetectorModel = field(default_factory=DetectorModel)
    impairments: ImpairmentState = field(default_factory=ImpairmentState)
    n_blocks: int = 16
    M: int = 16
    fast_pnc: bool = True
    slow_pnc: bool = True
    detector_noise: bool = True
    pilot_bandwidth: float = 0.05

    def __post_init__(self) -> None:
        if self.n_blocks < 1 or self.M < 1:
            raise ValueError("n_blocks and M must be >= 1")


@dataclass(frozen=True)
class SimulationResult:
    tx_symbols: np.ndarray  # (N, n) key symbols
    demod: DemodResult
    estimates: list[ChannelEstimate]

    @property
    def xi_hat(self) -> np.ndarray:
        return np.array([e.xi_hat for e in self.estimates])

    @property
    def T_hat(self) -> np.ndarray:
        return np.array([e.T_hat for e in self.estimates])


def draw_symbols(plan: TxPlan, n_blocks: int, rng: np.random.Generator) -> np.ndarray:
    """Complex Gaussian key symbols, variance ``V_A[k] / 2`` per quadrature."""
    n = n_blocks * plan.key_frames
    scale = np.sqrt(plan.V_A_per_subcarrier / 2)[:, None]
    return scale * (rng.normal(size=(plan.N, n)) + 1j * rng.normal(size=(plan.N, n)))


def simulate(config: SimulationConfig, seed: int | None = None) -> SimulationResult:
    """One seeded end-to-end run.

    ``seed`` drives the key symbols, the impairment trajectory and the
    detector noise; identical seeds give bit-identical results.
    """
    seed = config.impairments.rng_seed if seed is None else seed
    sym_ss, imp_ss, det_ss = np.random.SeedSequence(seed).spawn(3)
    plan = config.plan
    tx = draw_symbols(plan, config.n_blocks, np.random.default_rng(sym_ss))
    imp = replace(config.impairments, rng_seed=int(imp_ss.generate_state(1, np.uint64)[0]))

    frame = mc_generate(tx, plan)
    pilot = pilot_tone(plan, frame)
    rx = apply_channel(frame, config.fiber, imp)
    rx_pilot = apply_channel(pilot, config.fiber, imp)
    y_sig, y_pilot = heterodyne_detect(
        rx, rx_pilot, config.detector,
        lo_offset=imp.delta_f_AB, rng=np.random.default_rng(det_ss), add_noise=config.detector_noise,
    )
    demod = mc_demodulate(
        y_sig, y_pilot, plan, config.M,
        fast_pnc=config.fast_pnc, slow_pnc=config.slow_pnc, pilot_bandwidth=config.pilot_bandwidth,
    )
    floor = (2.0 + config.detector.v_el) if config.detector_noise else 0.0
    rx_key = demod.key_symbols
    estimates = [
        estimate_channel(tx[k], rx_key[k], eta=config.detector.eta, v_el=config.detector.v_el, noise_floor=floor)
        for k in range(plan.N)
    ]
    return SimulationResult(tx, demod, estimates)


def run_trials(
    config: SimulationConfig,
    seeds: Iterable[int],
    workers: int | None = None,
) -> list[SimulationResult]:
    """Independent runs, optionally on a thread pool; results follow ``seeds`` order."""
    seeds = list(seeds)
    if workers is None or workers <= 1:
        return [simulate(config, s) for s in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda s: simulate(config, s), seeds))


CSV_COLUMNS = ("block", "subcarrier", "I", "Q", "is_ts")


def dump_symbols_csv(path, demod: DemodResult) -> None:
    """Write every received symbol as ``block, subcarrier, I, Q, is_ts``."""
    N, B, F = demod.streams.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for b in range(B):
            for k in range(N):
                for f in range(F):
                    z = demod.streams[k, b, f]
                    w.writerow([b, k, repr(float(z.real)), repr(float(z.imag)), int(f < demod.ts_frames)])

