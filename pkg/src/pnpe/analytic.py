"""
Closed-form model of the heralded photon-number path-entangled state.

Heralded states, displaced on/off POVMs, no-click (Q-function) probabilities,
CHSH/CH values, log-negativity and the exact lossy formulas for the two
single-excitation families ``|phi> = c0|00> + c1 e^{i phi}|11>`` and
``|psi> = c0|01> + c1 e^{i phi}|10>``.

Amplitudes of the local oscillators are signed reals (a negative value is a
phase of pi) with optional extra phases ``phi_alpha`` / ``phi_beta``.

The Q-functions of the protocol state ignore the ``|1,0><1,0|`` noise that
appears when the heralding efficiency is below one. :func:`heralded_chsh`
evaluates the noisy state exactly through :func:`noclick_povm`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "SourceParams",
    "LossParams",
    "MeasurementSettings",
    "QubitPairState",
    "PathFamily",
    "GenericQubitPathState",
    "ChshReport",
    "InconsistentProbabilitiesError",
    "ideal_heralded_state",
    "heralded_state_general",
    "noclick_povm",
    "q_joint",
    "q_marginal_a",
    "q_marginal_b",
    "correlation_coefficient",
    "chsh",
    "chsh_from_q",
    "heralded_chsh",
    "ch_from_chsh",
    "log_negativity",
    "generic_state_q_functions",
    "generic_state_chsh",
    "bob_prep_probability",
]

TSIRELSON = 2.0 * math.sqrt(2.0)


class InconsistentProbabilitiesError(ValueError):
    """No-click probabilities that no joint distribution can produce."""


def _unit(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class SourceParams:
    """Source and state-preparation knobs.

    Attributes:
        g: squeezing parameter of both SPDC sources; ``lambda_ = tanh(g)``.
        t_b: transmittance of Bob's path-splitting beamsplitter.
        t_c: transmittance of Charlie's beamsplitter.
        phi_a, phi_b: pump phase (Alice) and path phase (Bob).
        eta_s: efficiency of Bob's heralding detector.
    """

    g: float
    t_b: float
    t_c: float = 0.5
    phi_a: float = 0.0
    phi_b: float = 0.0
    eta_s: float = 1.0

    def __post_init__(self):
        if self.g < 0.0 or not math.isfinite(self.g):
            raise ValueError(f"g must be a finite non-negative number, got {self.g}")
        _unit("t_b", self.t_b)
        _unit("t_c", self.t_c)
        _unit("eta_s", self.eta_s)

    @classmethod
    def from_lambda(cls, lambda_: float, t_b: float, **kw) -> SourceParams:
        if not 0.0 <= lambda_ < 1.0:
            raise ValueError(f"lambda_ must lie in [0, 1), got {lambda_}")
        return cls(g=math.atanh(lambda_), t_b=t_b, **kw)

    @property
    def lambda_(self) -> float:
        return math.tanh(self.g)

    @property
    def phi(self) -> float:
        return self.phi_a + self.phi_b


@dataclass(frozen=True)
class LossParams:
    """Efficiencies along the protocol.

    ``eta_a2`` / ``eta_b2`` cover everything between each source and Charlie's
    detection (channel and Charlie's detectors); ``eta_D`` is the local
    detection efficiency at Alice and Bob.
    """

    eta_a2: float = 1.0
    eta_b2: float = 1.0
    eta_D: float = 1.0
    eta_C: float = 1.0
    gamma: Optional[float] = None
    L: Optional[float] = None

    def __post_init__(self):
        for name in ("eta_a2", "eta_b2", "eta_D", "eta_C"):
            _unit(name, getattr(self, name))

    @classmethod
    def symmetric(cls, eta_H: float, eta_D: float = 1.0) -> LossParams:
        return cls(eta_a2=eta_H, eta_b2=eta_H, eta_D=eta_D)

    @classmethod
    def from_fiber(
        cls, gamma: float, L: float, eta_charlie: float = 1.0, eta_D: float = 1.0
    ) -> LossParams:
        """Symmetric loss from attenuation ``gamma`` (dB/km) over total length ``L`` (km)."""
        eta_C = 10.0 ** (-gamma * L / 10.0)
        eta_H = eta_charlie * math.sqrt(eta_C)
        return cls(eta_a2=eta_H, eta_b2=eta_H, eta_D=eta_D, eta_C=eta_C, gamma=gamma, L=L)

    @property
    def eta_H(self) -> float:
        if self.eta_a2 != self.eta_b2:
            raise ValueError("eta_H is only defined for symmetric heralding loss")
        return self.eta_a2


@dataclass(frozen=True)
class MeasurementSettings:
    """Local-oscillator amplitudes for the two settings of each party."""

    alpha1: float
    alpha2: float
    beta1: float
    beta2: float
    phi_alpha: float = 0.0
    phi_beta: float = 0.0

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "beta1", "beta2"):
            if abs(getattr(self, name)) > 2.0:
                raise ValueError(f"|{name}| must not exceed 2")

    @classmethod
    def symmetric(cls, alpha1: float, alpha2: float) -> MeasurementSettings:
        """Settings with ``beta_i = -alpha_i``."""
        return cls(alpha1, alpha2, -alpha1, -alpha2)

    def complex_alpha(self, i: int) -> complex:
        a = (self.alpha1, self.alpha2)[i]
        return a * complex(math.cos(self.phi_alpha), math.sin(self.phi_alpha))

    def complex_beta(self, j: int) -> complex:
        b = (self.beta1, self.beta2)[j]
        return b * complex(math.cos(self.phi_beta), math.sin(self.phi_beta))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.alpha1, self.alpha2, self.beta1, self.beta2)


@dataclass(frozen=True)
class QubitPairState:
    """4x4 state on ``{|00>, |01>, |10>, |11>}`` (Alice first)."""

    matrix: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.complex128)
        if m.shape != (4, 4):
            raise ValueError(f"expected a 4x4 matrix, got {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > 1e-12:
            raise ValueError("matrix is not Hermitian")
        if np.linalg.eigvalsh(m)[0] < -1e-12:
            raise ValueError("matrix is not positive semidefinite")
        if self.normalized and abs(np.trace(m).real - 1.0) > 1e-12:
            raise ValueError("normalized state must have unit trace")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def normalize(self) -> QubitPairState:
        tr = self.trace
        if tr <= 0.0:
            raise ValueError("cannot normalise a zero-trace state")
        return QubitPairState(self.matrix / tr, normalized=True)


class PathFamily(enum.Enum):
    CORRELATED = "phi"  # c0|00> + c1 e^{i phi}|11>
    ANTICORRELATED = "psi"  # c0|01> + c1 e^{i phi}|10>


@dataclass(frozen=True)
class GenericQubitPathState:
    c0: float
    c1: float
    kind: PathFamily
    phi: float = 0.0

    def __post_init__(self):
        if abs(self.c0**2 + self.c1**2 - 1.0) > 1e-12:
            raise ValueError("c0^2 + c1^2 must equal 1")

    @classmethod
    def from_c0(cls, c0: float, kind: PathFamily, phi: float = 0.0) -> GenericQubitPathState:
        if not -1.0 <= c0 <= 1.0:
            raise ValueError("c0 must lie in [-1, 1]")
        return cls(c0, math.sqrt(max(0.0, 1.0 - c0 * c0)), kind, phi)

    def ket(self) -> np.ndarray:
        v = np.zeros(4, dtype=np.complex128)
        ph = complex(math.cos(self.phi), math.sin(self.phi))
        if self.kind is PathFamily.CORRELATED:
            v[0], v[3] = self.c0, self.c1 * ph
        else:
            v[1], v[2] = self.c0, self.c1 * ph
        return v


@dataclass(frozen=True)
class ChshReport:
    """CHSH value with every intermediate probability that produced it.

    ``q_joint[i][j]`` is the joint no-click probability for settings
    ``(alpha_{i+1}, beta_{j+1})``; ``q_a[i]`` / ``q_b[j]`` are the marginals.
    """

    S: float
    correlators: tuple[float, float, float, float]
    q_joint: tuple[tuple[float, float], tuple[float, float]]
    q_a: tuple[float, float]
    q_b: tuple[float, float]
    provenance: str
    inputs: dict = field(default_factory=dict)

    @property
    def ch(self) -> float:
        return ch_from_chsh(self.S)


# ---------------------------------------------------------------- states


def ideal_heralded_state(
    a0: float, a1: float, b0: float, b1: float, t_c: float = 0.5, sign: int = +1
) -> QubitPairState:
    """Unnormalised pure state left after Charlie's single-photon detection.

    ``sign=+1`` is the first output port firing; ``sign=-1`` the second.
    """
    if abs(a0 * a0 + a1 * a1 - 1.0) > 1e-9 or abs(b0 * b0 + b1 * b1 - 1.0) > 1e-9:
        raise ValueError("source amplitudes must be normalised")
    _unit("t_c", t_c)
    v = np.zeros(4)
    if sign > 0:
        v[0] = a0 * b0 * math.sqrt(1.0 - t_c)
        v[3] = a1 * b1 * math.sqrt(t_c)
    else:
        v[0] = a0 * b0 * math.sqrt(t_c)
        v[3] = -a1 * b1 * math.sqrt(1.0 - t_c)
    return QubitPairState(np.outer(v, v), normalized=False)


def heralded_state_general(
    src: SourceParams, eta_a2: float = 1.0, eta_b2: float = 1.0, sign: int = +1
) -> QubitPairState:
    """Normalised heralded state with (possibly asymmetric) losses towards Charlie.

    Keeps at most one photon per mode. At ``t_c = 0.5`` the entries are
    diagonal ``{t_b eta_b2, 0, lambda^2 t_b (eta_a2 + eta_b2 - 2 eta_a2 eta_b2),
    lambda^2 (1 - t_b) eta_a2}`` and coherence ``+-lambda sqrt(eta_a2 eta_b2
    t_b (1 - t_b)) e^{+-i phi}``, up to normalisation. Other ``t_c`` values
    weight the two Charlie paths by ``t_c`` / ``1 - t_c``.
    """
    _unit("eta_a2", eta_a2)
    _unit("eta_b2", eta_b2)
    lam, tb, tc = src.lambda_, src.t_b, src.t_c
    # weight with which a photon from Alice's (Bob's) arm reaches the firing port
    w_a, w_b = (tc, 1.0 - tc) if sign > 0 else (1.0 - tc, tc)
    rho = np.zeros((4, 4), dtype=np.complex128)
    rho[0, 0] = tb * eta_b2 * w_b
    rho[3, 3] = lam**2 * (1.0 - tb) * eta_a2 * w_a
    rho[2, 2] = lam**2 * tb * (eta_a2 * (1.0 - eta_b2) * w_a + eta_b2 * (1.0 - eta_a2) * w_b)
    coh = sign * lam * math.sqrt(eta_a2 * eta_b2 * tb * (1.0 - tb) * w_a * w_b)
    rho[3, 0] = coh * np.exp(1j * src.phi)
    rho[0, 3] = np.conj(rho[3, 0])
    tr = rho.trace().real
    if tr <= 0.0:
        raise ValueError("heralded state has zero weight for these parameters")
    return QubitPairState(rho / tr)


# ---------------------------------------------------------------- measurement


def noclick_povm(alpha: complex, eta: float) -> np.ndarray:
    """No-click element of a displaced on/off detector on ``{|0>, |1>}``."""
    _unit("eta", eta)
    a2 = abs(alpha) ** 2
    damp = math.exp(-eta * a2)
    return damp * np.array(
        [[1.0, -eta * np.conj(alpha)], [-eta * alpha, 1.0 - eta + eta**2 * a2]],
        dtype=np.complex128,
    )


def _vacuum_fraction(src: SourceParams) -> tuple[float, float]:
    lam2 = src.lambda_**2
    return src.t_b, lam2 * (1.0 - src.t_b)


def q_joint(
    src: SourceParams,
    eta_D: float,
    alpha: float,
    beta: float,
    phi_alpha: float = 0.0,
    phi_beta: float = 0.0,
) -> float:
    """Joint no-click probability for the lossless-herald protocol state."""
    tb, w11 = _vacuum_fraction(src)
    lam = src.lambda_
    e = eta_D
    num = (
        tb
        + w11 * (1.0 - e + e * e * alpha * alpha) * (1.0 - e + e * e * beta * beta)
        + 2.0 * lam * math.sqrt((1.0 - tb) * tb) * alpha * beta * e * e
        * math.cos(src.phi - phi_alpha - phi_beta)
    )
    return math.exp(-(alpha * alpha + beta * beta) * e) * num / (tb + w11)


def q_marginal_a(src: SourceParams, eta_D: float, alpha: float) -> float:
    tb, w11 = _vacuum_fraction(src)
    e = eta_D
    return (tb + w11 * (1.0 - e + alpha * alpha * e * e)) / (tb + w11) * math.exp(-alpha * alpha * e)


def q_marginal_b(src: SourceParams, eta_D: float, beta: float) -> float:
    tb, w11 = _vacuum_fraction(src)
    e = eta_D
    return (tb + w11 * (1.0 - e + beta * beta * e * e)) / (tb + w11) * math.exp(-beta * beta * e)


def correlation_coefficient(q_ab: float, q_a: float, q_b: float, tol: float = 1e-12) -> float:
    """Click/no-click correlator ``E = 1 - 2 Q_a - 2 Q_b + 4 Q_ab``."""
    for name, q in (("Q_ab", q_ab), ("Q_a", q_a), ("Q_b", q_b)):
        if not -tol <= q <= 1.0 + tol:
            raise InconsistentProbabilitiesError(f"{name} = {q} outside [0, 1]")
    if q_ab > min(q_a, q_b) + tol:
        raise InconsistentProbabilitiesError(
            f"joint no-click {q_ab} exceeds a marginal (Q_a={q_a}, Q_b={q_b})"
        )
    if q_a + q_b - q_ab > 1.0 + tol:
        raise InconsistentProbabilitiesError(
            f"P(click, click) = {1 - q_a - q_b + q_ab} is negative"
        )
    return 1.0 - 2.0 * q_a - 2.0 * q_b + 4.0 * q_ab


def chsh_from_q(
    q_joint_values, q_a_values, q_b_values, provenance: str, inputs: Optional[dict] = None
) -> ChshReport:
    """Assemble a :class:`ChshReport` from a 2x2 table of joint and the marginal no-click values."""
    E = tuple(
        correlation_coefficient(q_joint_values[i][j], q_a_values[i], q_b_values[j])
        for i, j in ((0, 0), (0, 1), (1, 0), (1, 1))
    )
    S = E[0] + E[1] + E[2] - E[3]
    return ChshReport(
        S=S,
        correlators=E,
        q_joint=tuple(tuple(float(x) for x in row) for row in q_joint_values),
        q_a=tuple(float(x) for x in q_a_values),
        q_b=tuple(float(x) for x in q_b_values),
        provenance=provenance,
        inputs=inputs or {},
    )


def chsh(src: SourceParams, eta_D: float, settings: MeasurementSettings) -> ChshReport:
    """CHSH value of the protocol state from the closed-form Q-functions."""
    alphas = (settings.alpha1, settings.alpha2)
    betas = (settings.beta1, settings.beta2)
    qj = [
        [q_joint(src, eta_D, a, b, settings.phi_alpha, settings.phi_beta) for b in betas]
        for a in alphas
    ]
    qa = [q_marginal_a(src, eta_D, a) for a in alphas]
    qb = [q_marginal_b(src, eta_D, b) for b in betas]
    return chsh_from_q(qj, qa, qb, "analytic", {"src": src, "eta_D": eta_D, "settings": settings})


def _state_chsh(rho: np.ndarray, eta: float, settings: MeasurementSettings, provenance: str, inputs: dict) -> ChshReport:
    I2 = np.eye(2)
    pa = [noclick_povm(settings.complex_alpha(i), eta) for i in range(2)]
    pb = [noclick_povm(settings.complex_beta(j), eta) for j in range(2)]
    qj = [[np.trace(rho @ np.kron(pa[i], pb[j])).real for j in range(2)] for i in range(2)]
    qa = [np.trace(rho @ np.kron(pa[i], I2)).real for i in range(2)]
    qb = [np.trace(rho @ np.kron(I2, pb[j])).real for j in range(2)]
    return chsh_from_q(qj, qa, qb, provenance, inputs)


def heralded_chsh(
    src: SourceParams, loss: LossParams, settings: MeasurementSettings, sign: int = +1
) -> ChshReport:
    """CHSH of the noisy heralded state, evaluated with the no-click POVM matrices."""
    state = heralded_state_general(src, loss.eta_a2, loss.eta_b2, sign)
    return _state_chsh(
        state.matrix, loss.eta_D, settings, "analytic-noisy",
        {"src": src, "loss": loss, "settings": settings, "sign": sign},
    )


def ch_from_chsh(S: float) -> float:
    """CH value equivalent to a CHSH value: ``(S - 2) / 4``."""
    return (S - 2.0) / 4.0


def log_negativity(lambda_: float, t_b: float) -> float:
    """Log-negativity of the pure heralded state ``sqrt(t_b)|00> + lambda sqrt(1-t_b)|11>``."""
    denom = lambda_**2 * (1.0 - t_b) + t_b
    if denom <= 0.0:
        raise ValueError("lambda_ = 0 together with t_b = 0 leaves no state")
    return math.log2(1.0 + 2.0 * lambda_ * math.sqrt(t_b * (1.0 - t_b)) / denom)


# ---------------------------------------------------------------- generic families


def generic_state_q_functions(
    state: GenericQubitPathState,
    eta: float,
    alpha: float,
    beta: float,
    phi_alpha: float = 0.0,
    phi_beta: float = 0.0,
) -> tuple[float, float, float]:
    """Exact lossy ``(Q_ab, Q_a, Q_b)`` for the two single-excitation families.

    The interference term is ``cos(phi - phi_alpha - phi_beta)`` for the
    correlated family and ``cos(phi + phi_alpha - phi_beta)`` for the
    anticorrelated one, as in the published closed forms. The two agree with
    the POVM construction whenever ``phi_alpha == phi_beta == 0``.
    """
    c0sq, c1sq = state.c0**2, state.c1**2
    cross = 2.0 * alpha * beta * state.c0 * state.c1 * eta * eta
    ea = math.exp(-eta * alpha * alpha)
    eb = math.exp(-eta * beta * beta)
    fa = 1.0 - eta + eta * eta * alpha * alpha
    fb = 1.0 - eta + eta * eta * beta * beta
    if state.kind is PathFamily.CORRELATED:
        q_ab = (c0sq + c1sq * fa * fb + cross * math.cos(state.phi - phi_alpha - phi_beta)) * ea * eb
        q_a = (c0sq + c1sq * fa) * ea
        q_b = (c0sq + c1sq * fb) * eb
    else:
        q_ab = (c0sq * fb + c1sq * fa + cross * math.cos(state.phi + phi_alpha - phi_beta)) * ea * eb
        q_a = (c1sq * fa + c0sq) * ea
        q_b = (c0sq * fb + c1sq) * eb
    return q_ab, q_a, q_b


def generic_state_chsh(state: GenericQubitPathState, eta: float, settings: MeasurementSettings) -> float:
    alphas = (settings.alpha1, settings.alpha2)
    betas = (settings.beta1, settings.beta2)
    q = [
        [generic_state_q_functions(state, eta, a, b, settings.phi_alpha, settings.phi_beta) for b in betas]
        for a in alphas
    ]
    qj = [[q[i][j][0] for j in range(2)] for i in range(2)]
    return chsh_from_q(qj, [q[0][0][1], q[1][0][1]], [q[0][0][2], q[0][1][2]], state.kind.value).S


def bob_prep_probability(lambda_: float, eta_s: float = 1.0) -> float:
    """Probability that Bob's heralded single photon is prepared: ``eta_s l^2 / (1 + l^2)``."""
    _unit("eta_s", eta_s)
    if not 0.0 <= lambda_ < 1.0:
        raise ValueError(f"lambda_ must lie in [0, 1), got {lambda_}")
    return eta_s * lambda_**2 / (1.0 + lambda_**2)
