"""
Grid-search optimization of the subcarrier count and of per-subcarrier
modulation variance, plus the multi-carrier over single-carrier gain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from . import reference
from .keyrate import (
    BlockTooSmallError,
    DetectorModel,
    SecurityParams,
    composable_skr,
    holevo_bound_array,
    key_rate_report,
    mutual_information_array,
)
from .noise import FiberModel, NoiseModel
from .postproc import DEFAULT_CODE_TABLE, CodeTable, LogisticFER, code_rate_for_distance

#: Detector efficiency calibrated on the 25 km aggregate asymptotic rate
#: with electronic noise folded into the shot-noise unit
#: (see :func:`calibrate_efficiency`).
CALIBRATED_ETA = 0.5355266574597723
CALIBRATION_DISTANCE_KM = 25.0

DEFAULT_BETA = 0.93

#: Fraction of single-carrier dispersion noise left after partial compensation.
SC_DISPERSION_RESIDUAL = 0.5


class InfeasibleError(ValueError):
    """No grid point admits a code with beta in (0, 1]."""


@dataclass(frozen=True)
class OptimizationScenario:
    """Optimization domain for one link.

    ``xi`` optionally pins the per-subcarrier excess noise (cycled over
    subcarriers); otherwise the noise model supplies it. With
    ``xi_is_worst_case`` the pinned values are used directly as worst-case
    estimates instead of being passed through the finite-size estimators.
    """

    distance_km: float
    fiber: FiberModel
    detector: DetectorModel = DetectorModel(eta=CALIBRATED_ETA)
    security: SecurityParams = SecurityParams()
    N_range: tuple[int, int] = (1, 10)
    V_A_range: tuple[float, float, float] = (0.1, 10.0, 0.01)
    noise: NoiseModel = field(default_factory=NoiseModel)
    f_sym: float = 10.0  # GHz
    ts_fraction: float = 0.2
    V_A: float = 3.8
    beta: float = DEFAULT_BETA
    objective: str = "asymptotic"
    xi: tuple[float, ...] | None = None
    xi_is_worst_case: bool = True
    N_mc: int = 5
    sc_residual: float = SC_DISPERSION_RESIDUAL

    def __post_init__(self) -> None:
        lo, hi = self.N_range
        if not 1 <= lo <= hi:
            raise ValueError(f"N_range must be a non-empty interval of positive integers, got {self.N_range}")
        v0, v1, step = self.V_A_range
        if step <= 0:
            raise ValueError("V_A grid step must be positive")
        if not 0 < v0 <= v1:
            raise ValueError(f"V_A_range must be a non-empty positive interval, got {self.V_A_range}")
        if not 0 < self.ts_fraction < 1:
            raise ValueError("ts_fraction must lie in (0, 1)")
        if self.objective not in ("asymptotic", "composable"):
            raise ValueError(f"objective must be 'asymptotic' or 'composable', got {self.objective!r}")
        if self.xi is not None and len(self.xi) == 0:
            raise ValueError("xi override must be non-empty")

    @property
    def transmittance(self) -> float:
        return self.fiber.transmittance

    @property
    def V_A_grid(self) -> np.ndarray:
        v0, v1, step = self.V_A_range
        count = int(math.floor((v1 - v0) / step + 1e-9)) + 1
        return v0 + step * np.arange(count)

    def key_symbol_rate(self, N: int) -> float:
        """Key-bearing symbols per second on one of ``N`` subcarriers."""
        return self.f_sym * 1e9 / N * (1.0 - self.ts_fraction)

    def excess_noise(self, k: int, N: int, V_A, dispersion_residual: float = 1.0) -> np.ndarray:
        """Excess noise of subcarrier ``k`` of ``N`` at each modulation variance."""
        V_A = np.asarray(V_A, dtype=float)
        if self.xi is not None:
            return np.full(V_A.shape, float(self.xi[k % len(self.xi)]))
        rest = self.noise.budget(k, N, self.f_sym, self.fiber, 0.0, dispersion_residual).total
        rest -= self.noise.intermodulation(N, 0.0)
        im = [self.noise.intermodulation(N, float(v)) for v in V_A.ravel()]
        return rest + np.reshape(im, V_A.shape)


def scenario_for_distance(distance_km: float, **overrides) -> OptimizationScenario:
    """Default scenario at one of the reference distances (or by attenuation)."""
    loss = reference.LOSS_DB.get(float(distance_km))
    fiber = FiberModel(distance_km, loss_db=loss)
    return OptimizationScenario(distance_km=distance_km, fiber=fiber, **overrides)


def _rates(scenario: OptimizationScenario, V_A, xi, beta) -> np.ndarray:
    """Per-symbol secret key rate under the scenario's objective (no FER)."""
    det = scenario.detector
    T = scenario.transmittance
    V_A = np.atleast_1d(np.asarray(V_A, dtype=float))
    xi = np.broadcast_to(np.asarray(xi, dtype=float), V_A.shape)
    beta = np.broadcast_to(np.asarray(beta, dtype=float), V_A.shape)
    if scenario.objective == "asymptotic" or scenario.xi_is_worst_case and scenario.xi is not None:
        r_inf = beta * mutual_information_array(V_A, T, xi, det.eta, det.v_el) - holevo_bound_array(
            V_A, T, xi, det.eta, det.v_el
        )
        if scenario.objective == "asymptotic":
            return r_inf
        return np.array([composable_skr(r, scenario.security).R_LB for r in r_inf])
    out = np.empty(V_A.shape)
    for i, (v, x, b) in enumerate(zip(V_A, xi, beta)):
        try:
            rep = key_rate_report(float(b), det.point(float(v), T, float(x)), scenario.security, 1.0)
            out[i] = rep.R_LB
        except BlockTooSmallError:
            out[i] = -math.inf
    return out


def total_skr(
    scenario: OptimizationScenario,
    N: int,
    *,
    dispersion_residual: float = 1.0,
    optimize_V_A: bool = False,
) -> float:
    """Aggregate key rate (bits/s) over ``N`` subcarriers at fixed beta.

    With ``optimize_V_A`` each subcarrier uses its best grid V_A, otherwise
    the scenario's V_A.
    """
    total = 0.0
    grid = scenario.V_A_grid if optimize_V_A else np.array([scenario.V_A])
    for k in range(N):
        xi = scenario.excess_noise(k, N, grid, dispersion_residual)
        r = float(np.max(_rates(scenario, grid, xi, scenario.beta)))
        total += max(r, 0.0) * scenario.key_symbol_rate(N)
    return total


def optimal_subcarriers(scenario: OptimizationScenario) -> tuple[int, dict[int, float]]:
    """Subcarrier count maximizing the aggregate key rate; ties go to smaller N."""
    lo, hi = scenario.N_range
    curve = {N: total_skr(scenario, N) for N in range(lo, hi + 1)}
    top = max(curve.values())
    # Rates that differ only by summation rounding count as ties.
    best = min(N for N, r in curve.items() if r >= top - 1e-12 * abs(top))
    return best, curve


@dataclass(frozen=True)
class ModulationOptimum:
    V_A: float
    beta: float
    fer: float
    code_rate: float
    rate: float
    has_key: bool
    curve: np.ndarray = field(repr=False, compare=False)  # columns: V_A, rate, beta, FER


def _select_code(snr: np.ndarray, nominal: float, table: CodeTable) -> tuple[np.ndarray, np.ndarray]:
    """Nominal rate where feasible, else the next lower tabulated rate with beta <= 1."""
    candidates = [nominal] + sorted({r for r in table.rates if r < nominal}, reverse=True)
    cap = 0.5 * np.log2(1.0 + snr)
    cr = np.full(snr.shape, np.nan)
    beta = np.full(snr.shape, np.nan)
    for r in candidates:
        with np.errstate(divide="ignore"):
            b = np.where(cap > 0, r / np.where(cap > 0, cap, 1.0), np.inf)
        pick = np.isnan(cr) & (b > 0) & (b <= 1.0)
        cr[pick] = r
        beta[pick] = b[pick]
    return cr, beta


def optimize_modulation_variance(
    k: int,
    scenario: OptimizationScenario,
    fer_model=None,
    code_table: CodeTable = DEFAULT_CODE_TABLE,
    *,
    N: int | None = None,
    beta: float | None = None,
) -> ModulationOptimum:
    """Best grid V_A for subcarrier ``k``.

    The objective is ``(1 - FER(beta)) * R`` where ``R`` is the asymptotic
    or composable rate per the scenario. ``beta`` fixes the efficiency and
    bypasses code selection.
    """
    fer_model = LogisticFER() if fer_model is None else fer_model
    N = scenario.N_mc if N is None else N
    grid = scenario.V_A_grid
    xi = np.asarray(scenario.excess_noise(k, N, grid), dtype=float)
    det = scenario.detector
    te = det.eta * scenario.transmittance
    snr = te * grid / (2.0 + det.v_el + te * xi)
    if beta is None:
        if not code_table.entries:
            raise ValueError("code table is empty")
        nominal = code_rate_for_distance(scenario.distance_km, code_table)
        cr, betas = _select_code(snr, nominal, code_table)
    else:
        if not 0 < beta <= 1:
            raise InfeasibleError(f"beta must lie in (0, 1], got {beta}")
        cr = np.full(grid.shape, np.nan)
        betas = np.full(grid.shape, float(beta))
    ok = ~np.isnan(betas)
    if not ok.any():
        raise InfeasibleError(
            f"no V_A in [{grid[0]:g}, {grid[-1]:g}] admits a code with beta <= 1 at {scenario.distance_km} km"
        )
    rate = np.full(grid.shape, -math.inf)
    fer = np.full(grid.shape, np.nan)
    fer[ok] = fer_model(betas[ok])
    rate[ok] = (1.0 - fer[ok]) * _rates(scenario, grid[ok], xi[ok], betas[ok])
    i = int(np.argmax(rate))
    curve = np.column_stack([grid, rate, betas, fer])
    return ModulationOptimum(
        V_A=float(grid[i]),
        beta=float(betas[i]),
        fer=float(fer[i]),
        code_rate=float(cr[i]),
        rate=float(rate[i]),
        has_key=bool(rate[i] > 0),
        curve=curve,
    )


def aggregate_rate(
    scenario: OptimizationScenario,
    fer_model=None,
    code_table: CodeTable = DEFAULT_CODE_TABLE,
    N: int | None = None,
) -> tuple[float, list[ModulationOptimum]]:
    """Sum over subcarriers of the optimized rate, in bits/s."""
    N = scenario.N_mc if N is None else N
    opts = [optimize_modulation_variance(k, scenario, fer_model, code_table, N=N) for k in range(N)]
    total = sum(max(o.rate, 0.0) for o in opts) * scenario.key_symbol_rate(N)
    return total, opts


def calibrate_efficiency(
    target_bps: float = reference.R_INF_MBPS[CALIBRATION_DISTANCE_KM] * 1e6,
    distance_km: float = CALIBRATION_DISTANCE_KM,
    v_el: float = 0.0,
    bracket: tuple[float, float] = (0.2, 1.0),
) -> float:
    """Detector efficiency at which the aggregate asymptotic rate hits ``target_bps``.

    Uses the reference worst-case excess noises at ``distance_km``, the
    tabulated code rate and the logistic FER model.
    """
    xi = reference.WORST_CASE_XI[float(distance_km)]
    fer = LogisticFER()

    def excess(eta: float) -> float:
        sc = scenario_for_distance(distance_km, detector=DetectorModel(eta=eta, v_el=v_el), xi=xi)
        return aggregate_rate(sc, fer)[0] - target_bps

    return brentq(excess, *bracket, xtol=1e-12)


def skr_gain(scenario: OptimizationScenario, N_mc: int | None = None) -> float:
    """Multi-carrier over single-carrier aggregate key rate at equal total symbol rate.

    Both arms optimize V_A on the grid at the scenario's fixed beta. The
    single-carrier arm keeps ``scenario.sc_residual`` of its dispersion
    noise. Returns ``math.inf`` when the single-carrier arm has no key.
    """
    N_mc = scenario.N_mc if N_mc is None else N_mc
    sc = total_skr(scenario, 1, dispersion_residual=scenario.sc_residual, optimize_V_A=True)
    mc = total_skr(scenario, N_mc, optimize_V_A=True)
    if sc <= 0:
        return math.inf
    return mc / sc


def calibrate_tradeoff(
    scenario: OptimizationScenario,
    c_ici: float | None = None,
    c_id_grid: Sequence[float] | None = None,
    target_N: int = reference.OPTIMAL_SUBCARRIERS_50KM,
) -> tuple[float, float]:
    """Interval of intermodulation constants ``c_id`` for which N* equals ``target_N``.

    ``c_ici`` is held fixed. Returns ``(lo, hi)`` over the scanned grid, or
    raises ``ValueError`` when no grid point hits the target.
    """
    c_ici = scenario.noise.c_ici if c_ici is None else c_ici
    grid = np.logspace(-8, -4, 161) if c_id_grid is None else np.asarray(c_id_grid)
    hits = [
        c for c in grid
        if optimal_subcarriers(replace(scenario, noise=replace(scenario.noise, c_id=float(c), c_ici=c_ici)))[0]
        == target_N
    ]
    if not hits:
        raise ValueError(f"no c_id in the grid yields N* = {target_N} at c_ici = {c_ici}")
    return float(min(hits)), float(max(hits))
