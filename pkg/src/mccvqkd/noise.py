"""
Per-subcarrier excess-noise budget for OFDM multi-carrier CV-QKD.

The budget is the sum of five channel-referred components (SNU): laser
intensity noise, DAC quantization, photon leakage, modulation noise (finite
extinction ratio, IQ imbalance, intermodulation distortion) and phase noise
(common phase error plus inter-carrier interference).

Chromatic-dispersion noise follows ``kappa * f_sym**4 * L**2``; ``kappa`` is
pinned by the 10 GHz / 50 km anchor of 0.0294 SNU.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

DISPERSION_ANCHOR_SNU = 0.0294
DISPERSION_ANCHOR_F_GHZ = 10.0
DISPERSION_ANCHOR_L_KM = 50.0

#: SNU / (GHz^4 km^2)
KAPPA_DISP = DISPERSION_ANCHOR_SNU / (DISPERSION_ANCHOR_F_GHZ**4 * DISPERSION_ANCHOR_L_KM**2)

# Trade-off constants calibrated so the 50 km subcarrier sweep peaks at N = 5
# (see ``optimizer.calibrate_tradeoff``).
DEFAULT_C_ID = 1.0e-6
DEFAULT_C_ICI = 60.0


@dataclass(frozen=True)
class FiberModel:
    """Standard single-mode fibre span.

    ``loss_db`` overrides ``attenuation_db_per_km * length_km`` when given,
    since measured span losses rarely follow the nominal attenuation.
    """

    length_km: float
    loss_db: float | None = None
    attenuation_db_per_km: float = 0.19
    dispersion_coefficient: float = 17.0  # ps/(nm km)
    kappa_disp: float = KAPPA_DISP

    def __post_init__(self) -> None:
        if self.length_km < 0:
            raise ValueError(f"length_km must be >= 0, got {self.length_km}")
        if self.total_loss_db < 0:
            raise ValueError(f"loss_db must be >= 0, got {self.total_loss_db}")

    @property
    def total_loss_db(self) -> float:
        if self.loss_db is not None:
            return self.loss_db
        return self.attenuation_db_per_km * self.length_km

    @property
    def transmittance(self) -> float:
        return 10.0 ** (-self.total_loss_db / 10.0)


def dispersion_noise(f_sym: float, length_km: float, fiber: FiberModel | None = None) -> float:
    """Chromatic-dispersion excess noise (SNU) at symbol rate ``f_sym`` (GHz)."""
    if f_sym < 0 or length_km < 0:
        raise ValueError("f_sym and length_km must be non-negative")
    kappa = KAPPA_DISP if fiber is None else fiber.kappa_disp
    return kappa * f_sym**4 * length_km**2


def ici_noise(N: int, combined_linewidth: float, f_sub: float, c_ici: float = DEFAULT_C_ICI) -> float:
    """Inter-carrier interference from residual laser phase noise.

    ``combined_linewidth`` in Hz, ``f_sub`` in GHz.
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    return c_ici * (N - 1) * combined_linewidth / (f_sub * 1e9)


def id_noise(N: int, V_A: float, c_id: float = DEFAULT_C_ID) -> float:
    """Intermodulation-distortion noise of the multi-carrier modulator."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    return c_id * (N - 1) ** 2 * V_A


@dataclass(frozen=True)
class NoiseBudget:
    k: int
    eps_rin: float
    eps_dac: float
    eps_le: float
    eps_mod: float
    eps_phase: float

    def __post_init__(self) -> None:
        for name in ("eps_rin", "eps_dac", "eps_le", "eps_mod", "eps_phase"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def total(self) -> float:
        return self.eps_rin + self.eps_dac + self.eps_le + self.eps_mod + self.eps_phase


Constant = float | Sequence[float]


def _at(value: Constant, k: int) -> float:
    if isinstance(value, (int, float)):
        return float(value)
    return float(value[k % len(value)])


@dataclass(frozen=True)
class NoiseModel:
    """Configured noise constants plus the N-dependent penalty models.

    Each base constant is either a scalar or a per-subcarrier sequence.
    ``id_model(N, V_A)`` and ``ici_model(N, combined_linewidth, f_sub)``
    may be replaced to plug in other functional forms.
    """

    eps_rin: Constant = 0.004
    eps_dac: Constant = 0.003
    eps_le: Constant = 0.004
    eps_er: Constant = 0.002
    eps_iq: Constant = 0.002
    eps_pnc_residual: Constant = 0.005
    c_id: float = DEFAULT_C_ID
    c_ici: float = DEFAULT_C_ICI
    laser_linewidths_hz: tuple[float, float] = (100.0, 100.0)
    dispersion_enabled: bool = True
    id_model: Callable[[int, float], float] | None = field(default=None, compare=False)
    ici_model: Callable[[int, float, float], float] | None = field(default=None, compare=False)

    @property
    def combined_linewidth(self) -> float:
        return float(sum(self.laser_linewidths_hz))

    def intermodulation(self, N: int, V_A: float) -> float:
        if self.id_model is not None:
            return self.id_model(N, V_A)
        return id_noise(N, V_A, self.c_id)

    def intercarrier(self, N: int, f_sub: float) -> float:
        if self.ici_model is not None:
            return self.ici_model(N, self.combined_linewidth, f_sub)
        return ici_noise(N, self.combined_linewidth, f_sub, self.c_ici)

    def only_dispersion(self) -> "NoiseModel":
        return replace(
            self, eps_rin=0.0, eps_dac=0.0, eps_le=0.0, eps_er=0.0, eps_iq=0.0,
            eps_pnc_residual=0.0, c_id=0.0, c_ici=0.0, id_model=None, ici_model=None,
            dispersion_enabled=True,
        )

    def zero(self) -> "NoiseModel":
        return replace(self.only_dispersion(), dispersion_enabled=False)

    def budget(
        self,
        k: int,
        N: int,
        f_sym: float,
        fiber: FiberModel,
        V_A: float,
        dispersion_residual: float = 1.0,
    ) -> NoiseBudget:
        """Noise budget of subcarrier ``k`` out of ``N`` at aggregate rate ``f_sym`` (GHz)."""
        if not 0 <= k < N:
            raise ValueError(f"subcarrier index {k} out of range for N = {N}")
        f_sub = f_sym / N
        cpe = _at(self.eps_pnc_residual, k)
        if self.dispersion_enabled:
            cpe += dispersion_residual * dispersion_noise(f_sub, fiber.length_km, fiber)
        return NoiseBudget(
            k=k,
            eps_rin=_at(self.eps_rin, k),
            eps_dac=_at(self.eps_dac, k),
            eps_le=_at(self.eps_le, k),
            eps_mod=_at(self.eps_er, k) + _at(self.eps_iq, k) + self.intermodulation(N, V_A),
            eps_phase=cpe + self.intercarrier(N, f_sub),
        )


def total_excess(
    k: int,
    N: int,
    f_sym: float,
    fiber: FiberModel,
    V_A: float,
    model: NoiseModel | None = None,
    dispersion_residual: float = 1.0,
) -> float:
    """Total channel-referred excess noise of subcarrier ``k`` (SNU)."""
    model = NoiseModel() if model is None else model
    return model.budget(k, N, f_sym, fiber, V_A, dispersion_residual).total
