"""
Circuit-level simulation of the heralded protocol on a truncated Fock space.

Mode layout for the four-mode stage: ``0 = a1`` (Alice keeps), ``1 = a2``
(Alice sends to Charlie), ``2 = b1`` (Bob keeps), ``3 = b2`` (Bob sends).

Alice's source is a two-mode squeezed vacuum (or, with
``SourceModel.ONE_PAIR``, its first-order truncation
``(|00> + lambda|11>)/sqrt(1+lambda^2)``). Bob's source is a heralded single
photon split on a ``t_b`` beamsplitter. Channel loss acts on ``a2``/``b2``
before Charlie's beamsplitter, then Charlie's photon-number-resolving
detectors must see exactly one photon in the chosen output port.

Two routes reach the heralded state. :func:`herald` keeps the state as a
set of pure branches (one per pair of loss Kraus operators), which is fast.
:func:`herald_dense` pushes a full four-mode density operator through the
``fock`` channel functions. The two agree to numerical precision.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from . import fock
from .analytic import (
    ChshReport,
    LossParams,
    MeasurementSettings,
    SourceParams,
    bob_prep_probability,
    chsh_from_q,
)

__all__ = [
    "DetectorModel",
    "SourceModel",
    "ProtocolParams",
    "HeraldOutcome",
    "ClickStatistics",
    "DegenerateHeraldError",
    "alice_source",
    "bob_source",
    "prepare_sources",
    "herald",
    "herald_dense",
    "noclick_operator",
    "click_statistics",
    "measure_chsh_sim",
    "success_probability_sim",
]

A1, A2, B1, B2 = 0, 1, 2, 3


class DegenerateHeraldError(fock.ZeroWeightError):
    """Charlie's heralding outcome has zero probability."""


class DetectorModel(enum.Enum):
    PNR_EXACTLY_ONE = "pnr-exactly-one"


class SourceModel(enum.Enum):
    TMSV = "tmsv"
    ONE_PAIR = "one_pair"


@dataclass(frozen=True)
class ProtocolParams:
    src: SourceParams
    loss: LossParams = field(default_factory=LossParams)
    cutoff: int = 6
    charlie_sign: int = +1
    detector_model: DetectorModel = DetectorModel.PNR_EXACTLY_ONE
    source_model: SourceModel = SourceModel.TMSV

    def __post_init__(self):
        if not 1 <= self.cutoff <= fock.MAX_CUTOFF:
            raise ValueError(f"cutoff must lie in [1, {fock.MAX_CUTOFF}]")
        if self.src.g > 0.0 and self.cutoff < 2 and self.source_model is SourceModel.TMSV:
            raise ValueError("cutoff must be at least 2 to hold two-pair events")
        if self.charlie_sign not in (+1, -1):
            raise ValueError("charlie_sign must be +1 or -1")
        if self.detector_model is not DetectorModel.PNR_EXACTLY_ONE:
            raise NotImplementedError(f"detector model {self.detector_model} is not implemented")

    @classmethod
    def lossless(cls, src: SourceParams, **kw) -> ProtocolParams:
        return cls(src=src, loss=LossParams(), **kw)

    def with_loss(self, **changes) -> ProtocolParams:
        loss = LossParams(**{**self.loss.__dict__, **changes})
        return ProtocolParams(
            self.src, loss, self.cutoff, self.charlie_sign, self.detector_model, self.source_model
        )

    @property
    def charlie_port(self) -> tuple[int, int]:
        """Occupations of Charlie's two output modes for the selected detector."""
        return (1, 0) if self.charlie_sign > 0 else (0, 1)


@dataclass(frozen=True)
class HeraldOutcome:
    """Normalised two-mode state on ``(a1, b1)``.

    ``success_probability`` is the trace before normalisation, i.e. the
    probability that the chosen Charlie detector fires given that Bob's
    single photon was heralded.
    """

    state: fock.FockDensityOperator
    success_probability: float
    detector: int


@dataclass(frozen=True)
class ClickStatistics:
    """Joint outcome probabilities; ``0`` means no click, ``n`` a click."""

    p00: float
    p0n: float
    pn0: float
    pnn: float

    def __post_init__(self):
        for name in ("p00", "p0n", "pn0", "pnn"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} = {v} outside [0, 1]")
        if abs(self.p00 + self.p0n + self.pn0 + self.pnn - 1.0) > 1e-8:
            raise ValueError("click statistics do not sum to one")

    @property
    def q_ab(self) -> float:
        return self.p00

    @property
    def q_a(self) -> float:
        return self.p00 + self.p0n

    @property
    def q_b(self) -> float:
        return self.p00 + self.pn0

    @property
    def correlator(self) -> float:
        return self.p00 + self.pnn - self.p0n - self.pn0


# ---------------------------------------------------------------- sources


def alice_source(params: ProtocolParams) -> fock.FockStateVector:
    """Alice's pair source on ``(a1, a2)``."""
    lam, cutoff = params.src.lambda_, params.cutoff
    if params.source_model is SourceModel.TMSV:
        return fock.make_tmsv(lam, cutoff, phase=params.src.phi_a)
    amps = np.zeros((cutoff + 1) ** 2, dtype=np.complex128)
    amps[fock.fock_index((0, 0), cutoff)] = 1.0
    amps[fock.fock_index((1, 1), cutoff)] = lam * np.exp(1j * params.src.phi_a)
    return fock.FockStateVector(2, cutoff, amps / math.sqrt(1.0 + lam * lam))


def bob_source(params: ProtocolParams, heralded: bool = True) -> fock.FockDensityOperator:
    """Bob's state on ``(b1, b2)``.

    With ``heralded=True`` this is the path-entangled photon weighted by the
    probability of Bob's herald, so its trace is :func:`bob_prep_probability`.
    Otherwise the complementary vacuum branch is added and the trace is one.
    """
    p_s = bob_prep_probability(params.src.lambda_, params.src.eta_s)
    sppe = fock.make_sppe(params.src.t_b, params.src.phi_b, params.cutoff).to_density()
    if heralded:
        if p_s <= 0.0:
            raise fock.ZeroWeightError("Bob's herald has zero probability (lambda_ = 0 or eta_s = 0)")
        return fock.FockDensityOperator(2, params.cutoff, p_s * sppe.matrix)
    vac = fock.fock_state((0, 0), params.cutoff).to_density()
    return fock.FockDensityOperator(2, params.cutoff, p_s * sppe.matrix + (1.0 - p_s) * vac.matrix)


def prepare_sources(params: ProtocolParams, heralded: bool = True) -> fock.FockDensityOperator:
    """Four-mode product state ``(a1, a2, b1, b2)`` of both sources."""
    return fock.tensor_product(alice_source(params), bob_source(params, heralded))


# ---------------------------------------------------------------- heralding


def _charlie_row(params: ProtocolParams) -> np.ndarray:
    # amplitudes <port| U_BS |a2, b2> as a (d, d) array over input occupations
    d = params.cutoff + 1
    U = fock.beamsplitter_unitary(params.src.t_c, params.cutoff)
    return U[fock.fock_index(params.charlie_port, params.cutoff)].reshape(d, d)


def _branches(params: ProtocolParams, psi: np.ndarray, row: np.ndarray) -> list[np.ndarray]:
    """Post-herald ``(a1, b1)`` vectors, one per pair of loss Kraus operators."""
    ka = fock.LossChannel(params.loss.eta_a2, A2).kraus_operators(params.cutoff)
    kb = fock.LossChannel(params.loss.eta_b2, B2).kraus_operators(params.cutoff)
    out = []
    for Ka in ka:
        for Kb in kb:
            # Charlie's projection pulled back through both loss operators
            eff = Ka.T @ row @ Kb
            v = np.einsum("ij,aibj->ab", eff, psi)
            if np.any(v):
                out.append(v.reshape(-1))
    return out


@lru_cache(maxsize=512)
def herald(params: ProtocolParams) -> HeraldOutcome:
    """Heralded ``(a1, b1)`` state for the chosen Charlie detector."""
    d = params.cutoff + 1
    p_s = bob_prep_probability(params.src.lambda_, params.src.eta_s)
    if p_s <= 0.0:
        raise fock.ZeroWeightError("Bob's herald has zero probability (lambda_ = 0 or eta_s = 0)")
    alice = alice_source(params).amplitudes.reshape(d, d)
    bob = fock.make_sppe(params.src.t_b, params.src.phi_b, params.cutoff).amplitudes.reshape(d, d)
    psi = np.einsum("ai,bj->aibj", alice, bob)
    vecs = _branches(params, psi, _charlie_row(params))
    rho = np.zeros((d * d, d * d), dtype=np.complex128)
    for v in vecs:
        rho += np.outer(v, v.conj())
    weight = float(np.trace(rho).real)
    if weight <= 1e-300:
        raise DegenerateHeraldError("Charlie's detector never fires for these parameters")
    rho = 0.5 * (rho + rho.conj().T) / weight
    return HeraldOutcome(fock.FockDensityOperator(2, params.cutoff, rho), weight, params.charlie_sign)


def herald_dense(params: ProtocolParams) -> HeraldOutcome:
    """Same as :func:`herald`, through full four-mode density operators."""
    rho = prepare_sources(params, heralded=True)
    p_s = rho.weight / alice_source(params).norm2
    rho = fock.apply_loss(rho, fock.LossChannel(params.loss.eta_a2, A2))
    rho = fock.apply_loss(rho, fock.LossChannel(params.loss.eta_b2, B2))
    rho = fock.apply_beamsplitter(rho, A2, B2, params.src.t_c)
    na, nb = params.charlie_port
    try:
        rho = fock.project_fock(rho, A2, na)
        rho = fock.project_fock(rho, B2, nb)
    except fock.ZeroWeightError as exc:
        raise DegenerateHeraldError(str(exc)) from exc
    reduced = fock.partial_trace(rho, [A1, B1])
    weight = reduced.weight / p_s
    return HeraldOutcome(reduced.normalized(), weight, params.charlie_sign)


# ---------------------------------------------------------------- measurement


def noclick_operator(alpha: complex, eta: float, cutoff: int) -> np.ndarray:
    """No-click element for displacement ``D(-alpha)`` followed by loss ``eta``.

    Written as the complement of the click element so that ``eta = 0`` gives
    the identity exactly despite the truncated displacement.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    D = fock.displacement_matrix(-complex(alpha), cutoff)
    miss = (1.0 - eta) ** np.arange(cutoff + 1)
    click = D.conj().T @ ((1.0 - miss)[:, None] * D)
    N = np.eye(cutoff + 1) - click
    return 0.5 * (N + N.conj().T)


def click_statistics(
    rho: fock.FockDensityOperator, alpha: complex, beta: complex, eta_D: float
) -> ClickStatistics:
    """Joint click statistics of Alice (mode 0) and Bob (mode 1)."""
    c = rho.cutoff
    I = np.eye(c + 1)
    Na = noclick_operator(alpha, eta_D, c)
    Nb = noclick_operator(beta, eta_D, c)
    Ca, Cb = I - Na, I - Nb
    p = fock.measure_povm(rho, [np.kron(Na, Nb), np.kron(Na, Cb), np.kron(Ca, Nb), np.kron(Ca, Cb)])
    p = p / p.sum()
    return ClickStatistics(*(float(x) for x in p))


def measure_chsh_sim(
    params: ProtocolParams, settings: MeasurementSettings, eta_D: Optional[float] = None
) -> ChshReport:
    """CHSH value of the simulated heralded state."""
    eta = params.loss.eta_D if eta_D is None else eta_D
    outcome = herald(params)
    stats = [
        [
            click_statistics(outcome.state, settings.complex_alpha(i), settings.complex_beta(j), eta)
            for j in range(2)
        ]
        for i in range(2)
    ]
    qj = [[stats[i][j].q_ab for j in range(2)] for i in range(2)]
    qa = [stats[0][0].q_a, stats[1][0].q_a]
    qb = [stats[0][0].q_b, stats[0][1].q_b]
    return chsh_from_q(
        qj, qa, qb, "simulated",
        {"params": params, "settings": settings, "eta_D": eta, "herald_probability": outcome.success_probability},
    )


def success_probability_sim(params: ProtocolParams) -> float:
    """Probability that exactly one photon reaches either of Charlie's detectors.

    Bob's source is left unconditioned (his herald fires with probability
    :func:`bob_prep_probability`, otherwise he sends vacuum).
    """
    d = params.cutoff + 1
    p_s = bob_prep_probability(params.src.lambda_, params.src.eta_s)
    alice = alice_source(params).amplitudes.reshape(d, d)
    bob_photon = fock.make_sppe(params.src.t_b, params.src.phi_b, params.cutoff).amplitudes.reshape(d, d)
    bob_vac = fock.fock_state((0, 0), params.cutoff).amplitudes.reshape(d, d)
    total = 0.0
    for sign in (+1, -1):
        p = ProtocolParams(
            params.src, params.loss, params.cutoff, sign, params.detector_model, params.source_model
        )
        row = _charlie_row(p)
        for w, bob in ((p_s, bob_photon), (1.0 - p_s, bob_vac)):
            if w <= 0.0:
                continue
            psi = np.einsum("ai,bj->aibj", alice, bob)
            total += w * sum(float(np.vdot(v, v).real) for v in _branches(p, psi, row))
    return min(max(total, 0.0), 1.0)
