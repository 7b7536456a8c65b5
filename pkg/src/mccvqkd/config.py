"""
Scenario files: one JSON document describing a link end to end.

Sections: ``tx``, ``fiber``, ``detector``, ``security``, ``postproc``,
``noise``, ``channel``, ``optimization`` and ``simulation``. Every section
and field is optional; omitted values take the calibrated defaults.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from . import reference
from .keyrate import DetectorModel, DomainError, SecurityParams
from .noise import FiberModel, NoiseModel
from .optimizer import CALIBRATED_ETA, DEFAULT_BETA, SC_DISPERSION_RESIDUAL, OptimizationScenario
from .postproc import FER_ANCHORS, ConstantFER, LogisticFER
from .sim.channel import DEFAULT_DISPERSION_RESIDUAL, ImpairmentState
from .sim.ofdm import TxPlan
from .sim.runner import SimulationConfig


class ConfigError(ValueError):
    """Invalid scenario; the message names the offending field or position."""


@dataclass(frozen=True)
class FiberConfig:
    loss_db: float | None = None
    attenuation_db_per_km: float = 0.19
    dispersion_coefficient: float = 17.0


@dataclass(frozen=True)
class PostprocConfig:
    """``beta`` fixes the reconciliation efficiency (no code selection);
    ``fer_anchors`` of ``null`` selects the built-in anchors, a number a
    constant FER."""

    beta: float | None = None
    fer_anchors: Any = None

    def fer_model(self):
        if self.fer_anchors is None:
            return LogisticFER(FER_ANCHORS)
        if isinstance(self.fer_anchors, (int, float)):
            return ConstantFER(float(self.fer_anchors))
        return LogisticFER([tuple(p) for p in self.fer_anchors])


@dataclass(frozen=True)
class ChannelConfig:
    """``xi`` pins per-subcarrier excess noise; ``worst_case`` marks it as
    already worst-case (skip the finite-size estimators)."""

    xi: tuple[float, ...] | None = None
    worst_case: bool = True


@dataclass(frozen=True)
class OptimizationConfig:
    N_range: tuple[int, int] = (1, 10)
    V_A_range: tuple[float, float, float] = (0.1, 10.0, 0.01)
    objective: str = "asymptotic"
    optimize_V_A: bool = True
    N_mc: int = 5
    sc_residual: float = SC_DISPERSION_RESIDUAL


@dataclass(frozen=True)
class SimulationSettings:
    n_blocks: int = 16
    M: int = 16
    fast_pnc: bool = True
    slow_pnc: bool = True
    detector_noise: bool = True
    pilot_bandwidth: float = 0.05
    delta_f_AB: float = 16.0
    path_phase: float = 0.0
    path_drift: float = 0.0
    delay_samples: int = 0
    dispersion_residual: float = DEFAULT_DISPERSION_RESIDUAL
    excess_noise: float | None = None
    seed: int = 0


_NOISE_FIELDS = (
    "eps_rin", "eps_dac", "eps_le", "eps_er", "eps_iq", "eps_pnc_residual",
    "c_id", "c_ici", "laser_linewidths_hz", "dispersion_enabled",
)
_TX_FIELDS = (
    "N", "f_sym", "ts_fraction", "rrc_rolloff", "dac_rate", "f_shift", "V_A",
    "sps", "frames_per_block", "pilot_db", "ts_seed",
)


def _tuples(value):
    if isinstance(value, list):
        return tuple(_tuples(v) for v in value)
    return value


def _lists(value):
    if isinstance(value, tuple):
        return [_lists(v) for v in value]
    return value


@dataclass(frozen=True)
class Scenario:
    name: str = "custom"
    distance_km: float = 50.0
    tx: TxPlan = field(default_factory=TxPlan)
    fiber: FiberConfig = field(default_factory=FiberConfig)
    detector: DetectorModel = field(default_factory=lambda: DetectorModel(eta=CALIBRATED_ETA))
    security: SecurityParams = field(default_factory=SecurityParams)
    postproc: PostprocConfig = field(default_factory=PostprocConfig)
    noise: NoiseModel = field(default_factory=NoiseModel)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    optimization: OptimizationConfig = field(default_factory=OptimizationConfig)
    simulation: SimulationSettings = field(default_factory=SimulationSettings)

    _SECTIONS = {
        "tx": (TxPlan, _TX_FIELDS),
        "fiber": (FiberConfig, None),
        "detector": (DetectorModel, None),
        "security": (SecurityParams, None),
        "postproc": (PostprocConfig, None),
        "noise": (NoiseModel, _NOISE_FIELDS),
        "channel": (ChannelConfig, None),
        "optimization": (OptimizationConfig, None),
        "simulation": (SimulationSettings, None),
    }

    @property
    def fiber_model(self) -> FiberModel:
        f = self.fiber
        return FiberModel(self.distance_km, f.loss_db, f.attenuation_db_per_km, f.dispersion_coefficient)

    @property
    def beta(self) -> float:
        return DEFAULT_BETA if self.postproc.beta is None else self.postproc.beta

    def optimization_scenario(self, **overrides) -> OptimizationScenario:
        o = self.optimization
        args = dict(
            distance_km=self.distance_km,
            fiber=self.fiber_model,
            detector=self.detector,
            security=self.security,
            N_range=o.N_range,
            V_A_range=o.V_A_range,
            noise=self.noise,
            f_sym=self.tx.f_sym,
            ts_fraction=self.tx.ts_fraction,
            V_A=float(self.tx.V_A_per_subcarrier.mean()),
            beta=self.beta,
            objective=o.objective,
            xi=self.channel.xi,
            xi_is_worst_case=self.channel.worst_case,
            N_mc=o.N_mc,
            sc_residual=o.sc_residual,
        )
        args.update(overrides)
        return OptimizationScenario(**args)

    def simulation_config(self, n_blocks: int | None = None, seed: int | None = None) -> SimulationConfig:
        s = self.simulation
        if s.excess_noise is not None:
            xi = s.excess_noise
        elif self.channel.xi is not None:
            xi = sum(self.channel.xi) / len(self.channel.xi)
        else:
            opt = self.optimization_scenario()
            xi = sum(float(opt.excess_noise(k, self.tx.N, self.tx.V_A_per_subcarrier[k])) for k in range(self.tx.N))
            xi /= self.tx.N
        imp = ImpairmentState(
            laser_linewidths=tuple(self.noise.laser_linewidths_hz),
            delta_f_AB=s.delta_f_AB,
            dispersion_coefficient=self.fiber.dispersion_coefficient,
            rng_seed=s.seed if seed is None else seed,
            excess_noise=xi,
            dispersion_enabled=self.noise.dispersion_enabled,
            dispersion_residual=s.dispersion_residual,
            path_phase=s.path_phase,
            path_drift=s.path_drift,
            delay_samples=s.delay_samples,
        )
        return SimulationConfig(
            plan=self.tx,
            fiber=self.fiber_model,
            detector=self.detector,
            impairments=imp,
            n_blocks=s.n_blocks if n_blocks is None else n_blocks,
            M=s.M,
            fast_pnc=s.fast_pnc,
            slow_pnc=s.slow_pnc,
            detector_noise=s.detector_noise,
            pilot_bandwidth=s.pilot_bandwidth,
        )

    # -- serialization -------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        if not isinstance(data, dict):
            raise ConfigError("scenario must be a JSON object")
        known = {"name", "distance_km", *cls._SECTIONS}
        for key in data:
            if key not in known:
                raise ConfigError(f"{key}: unknown section")
        kwargs: dict[str, Any] = {}
        if "name" in data:
            kwargs["name"] = str(data["name"])
        if "distance_km" in data:
            d = data["distance_km"]
            if not isinstance(d, (int, float)) or isinstance(d, bool) or d < 0:
                raise ConfigError(f"distance_km: expected a non-negative number, got {d!r}")
            kwargs["distance_km"] = float(d)
        for section, (typ, allowed) in cls._SECTIONS.items():
            if section not in data:
                continue
            body = data[section]
            if not isinstance(body, dict):
                raise ConfigError(f"{section}: expected an object")
            names = allowed or tuple(f.name for f in fields(typ))
            for key in body:
                if key not in names:
                    raise ConfigError(f"{section}.{key}: unknown field")
            values = {k: _tuples(v) for k, v in body.items()}
            try:
                kwargs[section] = typ(**values)
            except (TypeError, ValueError, DomainError) as exc:
                raise ConfigError(f"{section}: {exc}") from exc
        sc = cls(**kwargs)
        sc.validate()
        return sc

    def validate(self) -> None:
        try:
            self.fiber_model
            self.postproc.fer_model()
            if self.channel.xi is not None and any(x < 0 for x in self.channel.xi):
                raise ValueError("xi entries must be non-negative")
            self.optimization_scenario()
            if self.postproc.beta is not None and not 0 < self.postproc.beta <= 1:
                raise ValueError(f"postproc.beta must lie in (0, 1], got {self.postproc.beta}")
        except (TypeError, ValueError, DomainError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"name": self.name, "distance_km": self.distance_km}
        for section, (_, allowed) in self._SECTIONS.items():
            obj = getattr(self, section)
            names = allowed or tuple(f.name for f in fields(obj))
            out[section] = {n: _lists(getattr(obj, n)) for n in names}
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)


def parse_scenario(text: str) -> Scenario:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return Scenario.from_dict(data)


def builtin_scenario(name: str) -> Scenario:
    """``<d>km`` for the reference distances (worst-case noise pinned), or ``toy``."""
    if name == "toy":
        return Scenario(
            name="toy",
            distance_km=0.0,
            tx=TxPlan(N=1, V_A=4.0),
            fiber=FiberConfig(loss_db=0.0),
            detector=DetectorModel(eta=1.0),
            postproc=PostprocConfig(beta=1.0, fer_anchors=0.0),
            channel=ChannelConfig(xi=(0.0,), worst_case=True),
            optimization=OptimizationConfig(optimize_V_A=False),
        )
    try:
        d = float(name.removesuffix("km"))
        xi = reference.WORST_CASE_XI[d]
    except (ValueError, KeyError):
        choices = ", ".join(builtin_names())
        raise ConfigError(f"unknown builtin scenario {name!r} (choose from {choices})") from None
    return Scenario(
        name=name,
        distance_km=d,
        fiber=FiberConfig(loss_db=reference.LOSS_DB[d]),
        channel=ChannelConfig(xi=xi, worst_case=True),
    )


def builtin_names() -> list[str]:
    return [f"{int(d)}km" for d in reference.DISTANCES_KM] + ["toy"]


def load_scenario(source: str | None) -> Scenario:
    """Scenario from a path, ``builtin:NAME``, or the 50 km default when ``None``."""
    if source is None:
        return builtin_scenario("50km")
    if source.startswith("builtin:"):
        return builtin_scenario(source.split(":", 1)[1])
    try:
        text = Path(source).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {source}: {exc.strerror}") from exc
    return parse_scenario(text)
