"""Success probabilities of heralded-entanglement protocols and device-independent metrics."""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Optional

from .analytic import TSIRELSON

__all__ = [
    "VariantKind",
    "ProtocolVariant",
    "DiMetrics",
    "POLARISATION_THRESHOLD",
    "POLARISATION_SCALING",
    "PSI_FAMILY_THRESHOLD",
    "variant_p1",
    "success_probability",
    "binary_entropy",
    "min_entropy",
    "holevo_bound",
    "di_metrics",
]

# reference constants for the polarisation-encoded protocol (no internal model)
POLARISATION_THRESHOLD = 2.0 / 3.0
POLARISATION_SCALING = "O(eta_C)"
# quoted efficiency threshold for anticorrelated single-photon path entanglement
PSI_FAMILY_THRESHOLD = 0.826


class VariantKind(enum.Enum):
    TWO_TMSV = "two-tmsv"
    TWO_SPPE = "two-sppe"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class ProtocolVariant:
    """One of the three heralding architectures.

    ``t`` is the splitter transmittance: both splitters for ``TWO_SPPE``, Bob's
    for ``HYBRID``; it is ignored for ``TWO_TMSV``.
    """

    kind: VariantKind
    lambda_: float
    t: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.lambda_ < 1.0:
            raise ValueError(f"lambda_ must lie in [0, 1), got {self.lambda_}")
        if not 0.0 <= self.t <= 1.0:
            raise ValueError(f"t must lie in [0, 1], got {self.t}")

    @classmethod
    def from_g(cls, kind: VariantKind, g: float, t: float = 1.0) -> ProtocolVariant:
        return cls(kind, math.tanh(g), t)

    @property
    def small_t_regime(self) -> bool:
        """False when a two-SPPE splitter is too transmissive for the single-pair picture."""
        return not (self.kind is VariantKind.TWO_SPPE and self.t > 0.2)


def variant_p1(variant: ProtocolVariant) -> tuple[float, float]:
    """``(P_A(1), P_B(1))``: probability each side sends one photon towards Charlie."""
    base = variant.lambda_**2 / (1.0 + variant.lambda_**2)
    if variant.kind is VariantKind.TWO_TMSV:
        return base, base
    if variant.kind is VariantKind.TWO_SPPE:
        return base * variant.t, base * variant.t
    return base, base * variant.t


def success_probability(p_a1: float, p_b1: float, eta_C: float) -> float:
    """Probability that exactly one photon reaches Charlie.

    Each arm covers half the link, so a photon survives with ``sqrt(eta_C)``.
    """
    for name, v in (("p_a1", p_a1), ("p_b1", p_b1), ("eta_C", eta_C)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {v}")
    r = math.sqrt(eta_C)
    p = r * (p_a1 + p_b1) - 2.0 * eta_C * p_a1 * p_b1
    if p < -1e-15:
        raise ValueError(f"negative success probability {p}; inputs are unphysical")
    return max(p, 0.0)


def binary_entropy(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if p in (0.0, 1.0):
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def _clamp_s(S: float) -> float:
    if S > TSIRELSON + 1e-9:
        raise ValueError(f"S = {S} exceeds the Tsirelson bound")
    if S < 2.0:
        warnings.warn(f"S = {S} below 2 clamped to 2", RuntimeWarning, stacklevel=3)
        return 2.0
    return min(S, TSIRELSON)


def min_entropy(S: float) -> float:
    """Certified min-entropy per round, ``1 - log2(1 + sqrt(2 - S^2/4))``."""
    S = _clamp_s(S)
    if S == TSIRELSON:
        return 1.0
    return 1.0 - math.log2(1.0 + math.sqrt(max(0.0, 2.0 - S * S / 4.0)))


def holevo_bound(S: float) -> float:
    """Eavesdropper information bound ``h((1 + sqrt(S^2/4 - 1)) / 2)``."""
    S = _clamp_s(S)
    if S == TSIRELSON:
        return 0.0
    return binary_entropy(0.5 * (1.0 + math.sqrt(max(0.0, S * S / 4.0 - 1.0))))


@dataclass(frozen=True)
class DiMetrics:
    S: float
    h_min: float
    chi_max: float
    rate_lower_bound: Optional[float] = None


def di_metrics(S: float, repetition_rate: Optional[float] = None) -> DiMetrics:
    """Bundle both figures of merit; the rate bound is ``r * H_min`` (bits/s)."""
    h = min_entropy(S)
    rate = None if repetition_rate is None else repetition_rate * h
    return DiMetrics(S=S, h_min=h, chi_max=holevo_bound(S), rate_lower_bound=rate)
