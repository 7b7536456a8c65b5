"""
Post-processing accounting: code rates, reconciliation efficiency, FER model
and Toeplitz-hash privacy amplification.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.signal import fftconvolve


class InfeasibleCodeError(ValueError):
    """The code rate exceeds what the channel supports (beta > 1)."""


@dataclass(frozen=True)
class CodeTable:
    """Error-correction code rates designed for a set of distances (km)."""

    entries: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if not self.entries:
            raise ValueError("code table is empty")
        dists = [d for d, _ in self.entries]
        rates = [r for _, r in self.entries]
        if any(not 0 < r < 1 for r in rates):
            raise ValueError("code rates must lie in (0, 1)")
        if any(b <= a for a, b in zip(dists, dists[1:])):
            raise ValueError("distances must be strictly increasing")
        if any(b > a for a, b in zip(rates, rates[1:])):
            raise ValueError("code rates must be non-increasing with distance")

    @property
    def rates(self) -> list[float]:
        return [r for _, r in self.entries]


DEFAULT_CODE_TABLE = CodeTable(
    ((5.0, 0.33), (10.0, 0.3), (25.0, 0.18), (50.0, 0.07), (75.0, 0.0325), (100.0, 0.02))
)


def code_rate_for_distance(L: float, table: CodeTable = DEFAULT_CODE_TABLE) -> float:
    """Code rate for distance ``L``; nearest tabulated distance otherwise.

    Ties between two equally near entries go to the longer distance (the
    lower, safer rate).
    """
    best = min(table.entries, key=lambda e: (abs(e[0] - L), -e[0]))
    return best[1]


def beta_from_code(CR: float, SNR: float) -> float:
    """Reconciliation efficiency implied by code rate ``CR`` at ``SNR``."""
    if SNR <= 0:
        raise ValueError(f"SNR must be positive, got {SNR}")
    beta = CR / (0.5 * math.log2(1.0 + SNR))
    if 1.0 < beta <= 1.0 + 1e-12:  # rounding at capacity
        beta = 1.0
    if not 0 < beta <= 1:
        raise InfeasibleCodeError(
            f"code rate {CR} infeasible at SNR {SNR:.4g}: beta = {beta:.4f} > 1"
        )
    return beta


def snr_for_code(CR: float, beta: float) -> float:
    """Inverse of :func:`beta_from_code`."""
    return 2.0 ** (2.0 * CR / beta) - 1.0


def leak_ec(n: float, H_l: float, beta: float, I: float) -> float:
    """Error-correction leakage (bits) for ``n`` symbols."""
    if H_l < beta * I:
        raise ValueError(f"H_l ({H_l}) must be >= beta*I ({beta * I})")
    return n * (H_l - beta * I)


# (beta, FER) operating points of the 50 km subcarriers.
FER_ANCHORS: tuple[tuple[float, float], ...] = (
    (0.9296, 0.0209),
    (0.9299, 0.0234),
    (0.9301, 0.0252),
    (0.9311, 0.0362),
    (0.9305, 0.0292),
)


class LogisticFER:
    """Frame error rate as a logistic function of beta.

    Fitted by least squares in logit space. Values outside the anchor span
    widened by ``margin`` are still returned (the logistic is bounded in
    [0, 1]) but :meth:`extrapolated` flags them and a warning is issued.
    """

    def __init__(self, anchors: Iterable[tuple[float, float]] = FER_ANCHORS, margin: float = 0.05):
        pts = np.asarray(list(anchors), dtype=float)
        if pts.size == 0:
            raise ValueError("FER anchors must be non-empty")
        b, f = pts[:, 0], np.clip(pts[:, 1], 1e-12, 1 - 1e-12)
        logit = np.log(f / (1 - f))
        if len(pts) == 1 or np.ptp(b) == 0:
            self.slope = 0.0
            self.intercept = float(np.mean(logit))
        else:
            self.slope, self.intercept = (float(v) for v in np.polyfit(b, logit, 1))
            if self.slope < 0:
                raise ValueError("FER anchors imply a decreasing FER(beta)")
        self.anchors = pts
        self.lo = float(b.min()) - margin
        self.hi = float(b.max()) + margin

    @property
    def midpoint(self) -> float:
        return -self.intercept / self.slope if self.slope else math.nan

    def extrapolated(self, beta: float) -> bool:
        return not self.lo <= beta <= self.hi

    def __call__(self, beta: float | np.ndarray, warn: bool = False):
        z = self.slope * np.asarray(beta, dtype=float) + self.intercept
        fer = np.clip(0.5 * (1.0 + np.tanh(0.5 * z)), 0.0, 1.0)
        if warn and np.any((np.asarray(beta) < self.lo) | (np.asarray(beta) > self.hi)):
            warnings.warn("beta outside the fitted FER range; value extrapolated", stacklevel=2)
        return float(fer) if np.ndim(fer) == 0 else fer

    def residuals(self) -> np.ndarray:
        return np.asarray(self(self.anchors[:, 0])) - self.anchors[:, 1]


class ConstantFER:
    """FER independent of beta; handy for bounding cases."""

    def __init__(self, value: float):
        if not 0 <= value <= 1:
            raise ValueError("FER must lie in [0, 1]")
        self.value = float(value)

    def __call__(self, beta, warn: bool = False):
        if np.ndim(beta) == 0:
            return self.value
        return np.full(np.shape(beta), self.value)

    def extrapolated(self, beta: float) -> bool:
        return False


def p_ec_from_fer(fer: float) -> float:
    return 1.0 - fer


@dataclass(frozen=True)
class BitBlock:
    bits: np.ndarray
    subcarrier: int = 0
    block_id: int = 0

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits, dtype=np.uint8).ravel()
        if bits.size == 0:
            raise ValueError("bit block must be non-empty")
        if np.any(bits > 1):
            raise ValueError("bits must be 0 or 1")
        object.__setattr__(self, "bits", bits)

    def __len__(self) -> int:
        return int(self.bits.size)

    def to_hex(self) -> str:
        return np.packbits(self.bits).tobytes().hex()

    def to_line(self) -> str:
        """Key-file line: ``<subcarrier> <block id> <hex>``."""
        return f"{self.subcarrier} {self.block_id} {self.to_hex()}"


def _gf2_convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if min(a.size, b.size) <= 512:
        full = np.convolve(a.astype(np.int64), b.astype(np.int64))
    else:
        full = np.rint(fftconvolve(a.astype(float), b.astype(float))).astype(np.int64)
    return (full & 1).astype(np.uint8)


def toeplitz_pa(block: BitBlock, seed: Sequence[int] | np.ndarray, out_len: int) -> BitBlock:
    """Compress ``block`` with the Toeplitz matrix generated by ``seed``.

    Matrix entry ``(j, i)`` is ``seed[n - 1 + j - i]`` for input length
    ``n``, so row ``j`` reads the seed window ``seed[j : j + n]`` backwards.
    Evaluated as a GF(2) convolution.
    """
    n = len(block)
    seed = np.asarray(seed, dtype=np.uint8).ravel()
    if not 1 <= out_len <= n:
        raise ValueError(f"out_len must lie in [1, {n}], got {out_len}")
    if seed.size != n + out_len - 1:
        raise ValueError(f"seed length must be {n + out_len - 1}, got {seed.size}")
    conv = _gf2_convolve(seed, block.bits)
    return BitBlock(conv[n - 1 : n - 1 + out_len], block.subcarrier, block.block_id)


def random_seed_bits(n: int, out_len: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, 2, size=n + out_len - 1, dtype=np.uint8)
