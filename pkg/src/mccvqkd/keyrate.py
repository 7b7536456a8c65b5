"""
Composable finite-size key-rate calculus for Gaussian-modulated CV-QKD.

Heterodyne detection, reverse reconciliation, collective attacks. All
quadrature variances are in shot-noise units (SNU). The detector is treated
as untrusted: its efficiency is folded into the channel transmittance and
its electronic noise is charged to Eve.

Everything here is a pure function of its arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfcinv

#: Symplectic eigenvalues below ``1 - SYMPLECTIC_TOL`` mark an unphysical state.
SYMPLECTIC_TOL = 1e-9

DEFAULT_ADC_BITS = 8


class DomainError(ValueError):
    """Input outside the domain of a key-rate formula."""


class BlockTooSmallError(DomainError):
    """Parameter-estimation sample too small: worst-case transmittance <= 0."""


def _check_prob(name: str, value: float) -> None:
    if not 0.0 < value < 1.0:
        raise DomainError(f"{name} must lie in (0, 1), got {value!r}")


@dataclass(frozen=True)
class SecurityParams:
    """Epsilon budget and block sizes of one subcarrier.

    Attributes
    ----------
    eps_s, eps_h, eps_cor, eps_pe : float
        Smoothing, hashing, correctness and parameter-estimation epsilons.
    d : int
        ADC quantization bits entering the AEP correction.
    block_size_Nt : int
        Total symbols per subcarrier.
    pe_samples_m : int
        Symbols sacrificed for parameter estimation.
    p_ec : float
        Error-correction success probability (``1 - FER``).
    """

    eps_s: float = 1e-10
    eps_h: float = 1e-10
    eps_cor: float = 1e-10
    eps_pe: float = 1e-10
    d: int = DEFAULT_ADC_BITS
    block_size_Nt: int = 10**10
    pe_samples_m: int = 10**9
    p_ec: float = 1.0

    def __post_init__(self) -> None:
        for name in ("eps_s", "eps_h", "eps_cor", "eps_pe"):
            _check_prob(name, getattr(self, name))
        if int(self.d) != self.d or self.d < 1:
            raise DomainError(f"d must be a positive integer, got {self.d!r}")
        if self.block_size_Nt < 1 or self.pe_samples_m < 1:
            raise DomainError("block_size_Nt and pe_samples_m must be positive")
        if self.pe_samples_m >= self.block_size_Nt:
            raise DomainError(
                f"pe_samples_m ({self.pe_samples_m}) must be smaller than "
                f"block_size_Nt ({self.block_size_Nt})"
            )
        if not 0.0 <= self.p_ec <= 1.0:
            raise DomainError(f"p_ec must lie in [0, 1], got {self.p_ec!r}")

    @property
    def n(self) -> int:
        """Key-generation symbols ``N_t - m``."""
        return int(self.block_size_Nt - self.pe_samples_m)


@dataclass(frozen=True)
class ChannelPoint:
    """Operating point: modulation variance, channel and detector."""

    V_A: float
    T: float
    xi: float
    eta: float = 1.0
    v_el: float = 0.0

    def __post_init__(self) -> None:
        if not (self.V_A >= 0 and self.xi >= 0 and self.v_el >= 0):
            raise DomainError(
                f"V_A, xi and v_el must be non-negative (got {self.V_A}, {self.xi}, {self.v_el})"
            )
        if not 0.0 < self.T <= 1.0:
            raise DomainError(f"T must lie in (0, 1], got {self.T!r}")
        if not 0.0 < self.eta <= 1.0:
            raise DomainError(f"eta must lie in (0, 1], got {self.eta!r}")

    def with_channel(self, T: float, xi: float) -> "ChannelPoint":
        return ChannelPoint(self.V_A, T, xi, self.eta, self.v_el)


@dataclass(frozen=True)
class DetectorModel:
    """Coherent receiver: efficiency, electronic noise (SNU) and ADC."""

    eta: float = 1.0
    v_el: float = 0.0
    adc_bits: int | None = None
    adc_rate_gsps: float = 40.0

    def __post_init__(self) -> None:
        if not 0.0 < self.eta <= 1.0:
            raise DomainError(f"eta must lie in (0, 1], got {self.eta!r}")
        if self.v_el < 0:
            raise DomainError(f"v_el must be >= 0, got {self.v_el!r}")
        if self.adc_bits is not None and self.adc_bits < 1:
            raise DomainError(f"adc_bits must be >= 1, got {self.adc_bits!r}")

    def point(self, V_A: float, T: float, xi: float) -> "ChannelPoint":
        return ChannelPoint(V_A, T, xi, self.eta, self.v_el)


@dataclass(frozen=True)
class EstimatedChannel:
    T_hat: float
    xi_hat: float
    sigma_T: float
    sigma_xi: float
    w: float
    T_wc: float
    xi_wc: float


@dataclass(frozen=True)
class ComposableRate:
    """Secret key length and the composable rate bounds of one block."""

    s_n: float
    R_LB: float
    R_UB: float

    @property
    def no_key(self) -> bool:
        return self.R_LB <= 0.0

    @property
    def key_length(self) -> int:
        """Privacy-amplification output length; zero when no key survives."""
        return max(int(math.floor(self.s_n)), 0)


@dataclass(frozen=True)
class KeyRateReport:
    I: float
    chi: float
    R_inf: float
    s_n: float
    R_LB: float
    R_UB: float
    skr_bps: float
    no_key: bool


def snr(p: ChannelPoint) -> float:
    te = p.eta * p.T
    return te * p.V_A / (2.0 + p.v_el + te * p.xi)


def mutual_information(p: ChannelPoint) -> float:
    """Alice-Bob mutual information in bits/symbol, both heterodyne quadratures."""
    if p.V_A == 0:
        return 0.0
    return float(np.log2(1.0 + snr(p)))


def _g(nu: np.ndarray) -> np.ndarray:
    nu = np.asarray(nu, dtype=float)
    out = np.zeros_like(nu)
    big = nu > 1.0
    x = nu[big]
    out[big] = (x + 1) / 2 * np.log2((x + 1) / 2) - (x - 1) / 2 * np.log2((x - 1) / 2)
    return out


_OMEGA2 = np.array([[0.0, 1.0], [-1.0, 0.0]])
_Z = np.diag([1.0, -1.0])


def covariance_matrix(V_A, T, xi, eta=1.0, v_el=0.0) -> np.ndarray:
    """Two-mode covariance matrix of the equivalent entangled state after the channel.

    Broadcasts over array inputs; the result has shape ``(..., 4, 4)``.
    """
    V = np.asarray(V_A, dtype=float) + 1.0
    te = np.asarray(eta, dtype=float) * np.asarray(T, dtype=float)
    a = V
    b = te * (V - 1.0) + 1.0 + te * np.asarray(xi, dtype=float) + np.asarray(v_el, dtype=float)
    c = np.sqrt(te * (V * V - 1.0))
    a, b, c = np.broadcast_arrays(a, b, c)
    cm = np.zeros(a.shape + (4, 4))
    eye = np.eye(2)
    cm[..., :2, :2] = a[..., None, None] * eye
    cm[..., 2:, 2:] = b[..., None, None] * eye
    cm[..., :2, 2:] = c[..., None, None] * _Z
    cm[..., 2:, :2] = c[..., None, None] * _Z
    return cm


def symplectic_eigenvalues(cm: np.ndarray) -> np.ndarray:
    """Symplectic spectrum of stacked ``2k x 2k`` covariance matrices, ascending."""
    k = cm.shape[-1] // 2
    omega = np.kron(np.eye(k), _OMEGA2)
    ev = np.abs(np.linalg.eigvals(omega @ cm).imag)
    ev = np.sort(ev, axis=-1)
    return ev[..., ::2]


def _checked(nu: np.ndarray, tol: float) -> np.ndarray:
    if np.any(nu < 1.0 - tol):
        raise DomainError(
            f"unphysical covariance matrix: symplectic eigenvalue {float(np.min(nu)):.3g} < 1"
        )
    return np.maximum(nu, 1.0)


def holevo_bound_array(V_A, T, xi, eta=1.0, v_el=0.0, tol: float = SYMPLECTIC_TOL) -> np.ndarray:
    """Vectorised Holevo bound on Bob's heterodyne outcome (reverse reconciliation)."""
    cm = covariance_matrix(V_A, T, xi, eta, v_el)
    nu12 = _checked(symplectic_eigenvalues(cm), tol)
    # Alice's mode conditioned on Bob's heterodyne outcome (Schur complement).
    g_a = cm[..., :2, :2]
    g_b = cm[..., 2:, 2:]
    s_ab = cm[..., :2, 2:]
    cond = g_a - s_ab @ np.linalg.inv(g_b + np.eye(2)) @ np.swapaxes(s_ab, -1, -2)
    nu3 = _checked(np.sqrt(np.abs(np.linalg.det(cond))), tol)
    chi = _g(nu12[..., 0]) + _g(nu12[..., 1]) - _g(nu3)
    return np.maximum(chi, 0.0)


def holevo_bound(p: ChannelPoint, tol: float = SYMPLECTIC_TOL) -> float:
    """Eve's Holevo information on Bob's outcome in bits/symbol."""
    return float(holevo_bound_array(p.V_A, p.T, p.xi, p.eta, p.v_el, tol=tol))


def mutual_information_array(V_A, T, xi, eta=1.0, v_el=0.0) -> np.ndarray:
    te = np.asarray(eta) * np.asarray(T)
    return np.log2(1.0 + te * np.asarray(V_A) / (2.0 + np.asarray(v_el) + te * np.asarray(xi)))


def aep_delta(eps_s: float, d: int) -> float:
    """AEP correction term for ``d``-bit digitised outcomes."""
    _check_prob("eps_s", eps_s)
    if int(d) != d or d < 1:
        raise DomainError(f"d must be a positive integer, got {d!r}")
    x = eps_s * eps_s
    # 1 - sqrt(1 - x) without cancellation.
    tail = x / (1.0 + math.sqrt(1.0 - x))
    return 4.0 * math.log2(math.sqrt(2.0**d) + 2.0) * math.sqrt(-math.log2(tail))


def confidence_width(eps_pe: float) -> float:
    """``w`` such that a standard normal exceeds it with probability ``eps_pe``."""
    _check_prob("eps_pe", eps_pe)
    # sqrt(2) erfinv(1 - 2 eps) == sqrt(2) erfcinv(2 eps); the latter keeps the tail exact.
    return float(math.sqrt(2.0) * erfcinv(2.0 * eps_pe))


def worst_case(T_hat: float, xi_hat: float, p: ChannelPoint, m: float, eps_pe: float) -> EstimatedChannel:
    """Pessimistic transmittance and excess noise from an ``m``-sample estimate.

    ``p`` supplies the modulation variance and detector; its own ``T`` and
    ``xi`` are ignored in favour of the estimates.
    """
    if m < 2:
        raise DomainError(f"m must be >= 2, got {m!r}")
    if p.V_A <= 0:
        raise DomainError("worst-case estimation needs V_A > 0")
    w = confidence_width(eps_pe)
    sigma_T = 2.0 * T_hat / math.sqrt(2.0 * m) * math.sqrt(
        (xi_hat + (2.0 + p.v_el) / (p.eta * T_hat)) / p.V_A
    )
    T_wc = T_hat - w * sigma_T
    if T_wc <= 0:
        raise BlockTooSmallError(
            f"block too small: T_wc = {T_wc:.3g} <= 0 for m = {m:g}, eps_pe = {eps_pe:g}"
        )
    sigma_xi = (p.eta * T_hat * xi_hat + p.v_el + 2.0) / (math.sqrt(m) * p.eta * T_wc)
    xi_wc = T_hat / T_wc * xi_hat + w * sigma_xi
    return EstimatedChannel(T_hat, xi_hat, sigma_T, sigma_xi, w, T_wc, xi_wc)


def asymptotic_skr(beta: float, p_est: ChannelPoint, wc: EstimatedChannel | None = None) -> float:
    """``beta * I`` at the estimates minus ``chi`` at the worst case (or the estimates)."""
    if not 0.0 <= beta <= 1.0:
        raise DomainError(f"beta must lie in [0, 1], got {beta!r}")
    p_wc = p_est if wc is None else p_est.with_channel(min(wc.T_wc, 1.0), wc.xi_wc)
    return beta * mutual_information(p_est) - holevo_bound(p_wc)


def composable_skr(R_inf: float, sec: SecurityParams) -> ComposableRate:
    n = sec.n
    s_n = n * R_inf - math.sqrt(n) * aep_delta(sec.eps_s, sec.d) + math.log2(
        2.0 * sec.eps_h**2 * sec.eps_cor
    )
    R_UB = sec.p_ec * s_n / sec.block_size_Nt
    R_LB = R_UB - sec.p_ec / sec.block_size_Nt
    return ComposableRate(s_n, R_LB, R_UB)


def total_epsilon(sec: SecurityParams) -> float:
    return sec.eps_cor + sec.eps_s + sec.eps_h + 2.0 * sec.eps_pe


def key_rate_report(
    beta: float,
    p_est: ChannelPoint,
    sec: SecurityParams,
    symbol_rate: float,
    *,
    m: float | None = None,
) -> KeyRateReport:
    """Full pipeline for one subcarrier.

    ``symbol_rate`` is the key-bearing symbol rate in symbols/s. The
    worst-case estimators use ``m`` samples (default ``sec.pe_samples_m``).
    """
    wc = worst_case(p_est.T, p_est.xi, p_est, sec.pe_samples_m if m is None else m, sec.eps_pe)
    I = mutual_information(p_est)
    chi = holevo_bound(p_est.with_channel(min(wc.T_wc, 1.0), wc.xi_wc))
    R_inf = beta * I - chi
    comp = composable_skr(R_inf, sec)
    return KeyRateReport(
        I=I,
        chi=chi,
        R_inf=R_inf,
        s_n=comp.s_n,
        R_LB=comp.R_LB,
        R_UB=comp.R_UB,
        skr_bps=max(comp.R_LB, 0.0) * symbol_rate,
        no_key=comp.no_key,
    )
