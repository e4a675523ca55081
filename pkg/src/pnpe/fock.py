"""
Truncated multimode Fock-space states, channels and measurements.

Index convention
----------------
A state of ``mode_count`` modes with per-mode cutoff ``c`` lives in a space of
dimension ``(c + 1) ** mode_count``. The flat index of the occupation tuple
``(n_0, n_1, ..., n_{M-1})`` is the mixed-radix number with mode 0 as the most
significant digit, i.e. C-order reshaping of a ``(c + 1,) * M`` tensor. All
index arithmetic goes through :func:`fock_index` and :func:`fock_occupations`.

Beamsplitter convention
-----------------------
:func:`apply_beamsplitter` maps creation operators of the two modes as::

    a^dag -> sqrt(t) a^dag + sqrt(1 - t) b^dag
    b^dag -> sqrt(1 - t) a^dag - sqrt(t) b^dag

The mode matrix is real, symmetric and squares to the identity, so applying
the same splitter twice is the identity. This sign choice reproduces the
Charlie-station expansion used by the protocol: a single photon leaving
through the first output port heralds the ``+`` state.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache
from math import comb, sqrt
from typing import Sequence, Union

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

__all__ = [
    "FockStateVector",
    "FockDensityOperator",
    "LossChannel",
    "TruncationWarning",
    "ZeroWeightError",
    "fock_index",
    "fock_occupations",
    "fock_state",
    "make_tmsv",
    "make_sppe",
    "tensor_product",
    "beamsplitter_unitary",
    "displacement_matrix",
    "apply_beamsplitter",
    "apply_displacement",
    "apply_phase",
    "apply_loss",
    "partial_trace",
    "project_fock",
    "measure_povm",
]

MAX_CUTOFF = 12
MAX_DISPLACEMENT = 2.0


class TruncationWarning(UserWarning):
    """Raised when an operation pushes amplitude above the photon-number cutoff."""


class ZeroWeightError(ValueError):
    """A projection or herald produced a state with zero probability."""


def _check_cutoff(cutoff: int) -> int:
    if int(cutoff) != cutoff or cutoff < 1:
        raise ValueError(f"cutoff must be a positive integer, got {cutoff!r}")
    if cutoff > MAX_CUTOFF:
        raise ValueError(f"cutoff {cutoff} exceeds the supported maximum {MAX_CUTOFF}")
    return int(cutoff)


def fock_index(occupations: Sequence[int], cutoff: int) -> int:
    """Flat index of an occupation tuple (mode 0 most significant)."""
    d = cutoff + 1
    index = 0
    for n in occupations:
        if not 0 <= n <= cutoff:
            raise ValueError(f"occupation {n} outside [0, {cutoff}]")
        index = index * d + int(n)
    return index


def fock_occupations(index: int, mode_count: int, cutoff: int) -> tuple[int, ...]:
    """Inverse of :func:`fock_index`."""
    d = cutoff + 1
    if not 0 <= index < d**mode_count:
        raise ValueError(f"index {index} outside the {mode_count}-mode space")
    digits = []
    for _ in range(mode_count):
        index, n = divmod(index, d)
        digits.append(n)
    return tuple(reversed(digits))


@dataclass(frozen=True)
class FockStateVector:
    """Pure (possibly sub-normalised) state on a truncated multimode Fock space.

    A squared norm below one marks a heralded branch; the norm is the branch
    probability.
    """

    mode_count: int
    cutoff: int
    amplitudes: np.ndarray

    def __post_init__(self):
        _check_cutoff(self.cutoff)
        if self.mode_count < 1:
            raise ValueError("mode_count must be positive")
        amps = np.array(self.amplitudes, dtype=np.complex128).reshape(-1)
        if amps.size != (self.cutoff + 1) ** self.mode_count:
            raise ValueError(
                f"expected {(self.cutoff + 1) ** self.mode_count} amplitudes, got {amps.size}"
            )
        norm2 = float(np.vdot(amps, amps).real)
        if not 0.0 < norm2 <= 1.0 + 1e-12:
            raise ValueError(f"squared norm {norm2} outside (0, 1]")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def norm2(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((self.cutoff + 1,) * self.mode_count)

    def amplitude(self, *occupations: int) -> complex:
        return complex(self.amplitudes[fock_index(occupations, self.cutoff)])

    def to_density(self) -> FockDensityOperator:
        return FockDensityOperator(
            self.mode_count, self.cutoff, np.outer(self.amplitudes, self.amplitudes.conj())
        )


@dataclass(frozen=True)
class FockDensityOperator:
    """Dense density operator; ``weight`` (the trace) is the branch probability.

    Only cheap checks run at construction. :meth:`validate` performs the full
    Hermiticity / positivity audit.
    """

    mode_count: int
    cutoff: int
    matrix: np.ndarray

    def __post_init__(self):
        _check_cutoff(self.cutoff)
        if self.mode_count < 1:
            raise ValueError("mode_count must be positive")
        dim = (self.cutoff + 1) ** self.mode_count
        mat = np.array(self.matrix, dtype=np.complex128)
        if mat.shape != (dim, dim):
            raise ValueError(f"expected a {dim}x{dim} matrix, got shape {mat.shape}")
        trace = float(np.trace(mat).real)
        if not 0.0 < trace <= 1.0 + 1e-10:
            raise ValueError(f"trace {trace} outside (0, 1]")
        mat.flags.writeable = False
        object.__setattr__(self, "matrix", mat)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def weight(self) -> float:
        return float(np.trace(self.matrix).real)

    def tensor(self) -> np.ndarray:
        return self.matrix.reshape((self.cutoff + 1,) * (2 * self.mode_count))

    def element(self, ket: Sequence[int], bra: Sequence[int]) -> complex:
        return complex(
            self.matrix[fock_index(ket, self.cutoff), fock_index(bra, self.cutoff)]
        )

    def normalized(self) -> FockDensityOperator:
        return FockDensityOperator(self.mode_count, self.cutoff, self.matrix / self.weight)

    def validate(self, herm_tol: float = 1e-10, psd_tol: float = 1e-9) -> None:
        """Raise ``ValueError`` if the operator is not Hermitian and PSD."""
        asym = float(np.max(np.abs(self.matrix - self.matrix.conj().T)))
        if asym > herm_tol:
            raise ValueError(f"not Hermitian: max |M - M^dag| = {asym:.3e}")
        herm = 0.5 * (self.matrix + self.matrix.conj().T)
        lowest = float(np.linalg.eigvalsh(herm)[0])
        if lowest < -psd_tol:
            raise ValueError(f"not positive semidefinite: min eigenvalue {lowest:.3e}")


State = Union[FockStateVector, FockDensityOperator]


@dataclass(frozen=True)
class LossChannel:
    """Pure-loss channel of transmittance ``eta`` on one mode."""

    eta: float
    mode: int

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if self.mode < 0:
            raise ValueError("mode index must be non-negative")

    def kraus_operators(self, cutoff: int) -> list[np.ndarray]:
        """Single-mode Kraus operators ``K_k`` removing exactly ``k`` photons."""
        coeffs = _loss_coefficients(float(self.eta), cutoff)
        d = cutoff + 1
        ops = []
        for k in range(d):
            K = np.zeros((d, d))
            for n in range(k, d):
                K[n - k, n] = coeffs[k, n]
            ops.append(K)
        return ops


def _loss_coefficients(eta: float, cutoff: int) -> np.ndarray:
    # coeffs[k, n] = sqrt(C(n, k) eta^(n-k) (1-eta)^k)
    d = cutoff + 1
    out = np.zeros((d, d))
    for n in range(d):
        for k in range(n + 1):
            out[k, n] = sqrt(comb(n, k) * eta ** (n - k) * (1.0 - eta) ** k)
    return out


# ---------------------------------------------------------------- states


def fock_state(occupations: Sequence[int], cutoff: int) -> FockStateVector:
    """Number state ``|n_0, ..., n_{M-1}>``."""
    _check_cutoff(cutoff)
    amps = np.zeros((cutoff + 1) ** len(occupations), dtype=np.complex128)
    amps[fock_index(occupations, cutoff)] = 1.0
    return FockStateVector(len(occupations), cutoff, amps)


def make_tmsv(lambda_: float, cutoff: int = 6, phase: float = 0.0) -> FockStateVector:
    """Two-mode squeezed vacuum ``sqrt(1-l^2) sum_n l^n e^{i n phase} |n, n>``.

    The series is cut at ``n = cutoff``; the missing weight is ``lambda_**(2*(cutoff+1))``.
    """
    if cutoff == 0:
        raise ValueError("cutoff 0 cannot hold the single-pair term")
    _check_cutoff(cutoff)
    if not 0.0 <= lambda_ < 1.0:
        raise ValueError(f"lambda_ must lie in [0, 1), got {lambda_}")
    d = cutoff + 1
    amps = np.zeros((d, d), dtype=np.complex128)
    pref = sqrt(1.0 - lambda_**2)
    for n in range(d):
        amps[n, n] = pref * lambda_**n * np.exp(1j * n * phase)
    return FockStateVector(2, cutoff, amps)


def make_sppe(t_b: float, phi_b: float = 0.0, cutoff: int = 1) -> FockStateVector:
    """Single-photon path entanglement ``sqrt(t)|0,1> + sqrt(1-t) e^{i phi}|1,0>``."""
    if not 0.0 <= t_b <= 1.0:
        raise ValueError(f"t_b must lie in [0, 1], got {t_b}")
    _check_cutoff(cutoff)
    amps = np.zeros((cutoff + 1) ** 2, dtype=np.complex128)
    amps[fock_index((0, 1), cutoff)] = sqrt(t_b)
    amps[fock_index((1, 0), cutoff)] = sqrt(1.0 - t_b) * np.exp(1j * phi_b)
    return FockStateVector(2, cutoff, amps)


def tensor_product(*states: State) -> State:
    """Tensor product; the result is a density operator if any factor is one."""
    if not states:
        raise ValueError("need at least one state")
    cutoffs = {s.cutoff for s in states}
    if len(cutoffs) != 1:
        raise ValueError("mixed cutoffs are not supported")
    cutoff = cutoffs.pop()
    modes = sum(s.mode_count for s in states)
    if all(isinstance(s, FockStateVector) for s in states):
        amps = states[0].amplitudes
        for s in states[1:]:
            amps = np.kron(amps, s.amplitudes)
        return FockStateVector(modes, cutoff, amps)
    mats = [s.matrix if isinstance(s, FockDensityOperator) else s.to_density().matrix for s in states]
    mat = mats[0]
    for m in mats[1:]:
        mat = np.kron(mat, m)
    return FockDensityOperator(modes, cutoff, mat)


# ---------------------------------------------------------------- operators


@lru_cache(maxsize=64)
def beamsplitter_unitary(t: float, cutoff: int) -> np.ndarray:
    """Two-mode beamsplitter matrix on the truncated ``(cutoff+1)**2`` space.

    Exact on the subspace with total photon number ``<= cutoff``. Columns for
    inputs above that lose the components that would exceed the cutoff.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"transmittance must lie in [0, 1], got {t}")
    d = cutoff + 1
    st, sr = sqrt(t), sqrt(1.0 - t)
    lf = gammaln(np.arange(2 * d) + 1)
    U = np.zeros((d * d, d * d))
    for n in range(d):
        for m in range(d):
            col = n * d + m
            for j in range(n + 1):
                cj = comb(n, j) * st**j * sr ** (n - j)
                if cj == 0.0:
                    continue
                for k in range(m + 1):
                    ck = comb(m, k) * sr**k * (-st) ** (m - k)
                    if ck == 0.0:
                        continue
                    p, q = j + k, n + m - j - k
                    if p > cutoff or q > cutoff:
                        continue
                    norm = np.exp(0.5 * (lf[p] + lf[q] - lf[n] - lf[m]))
                    U[p * d + q, col] += cj * ck * norm
    U.flags.writeable = False
    return U


def displacement_matrix(alpha: complex, cutoff: int) -> np.ndarray:
    """Exact matrix elements ``<m|D(alpha)|n>`` for ``m, n <= cutoff``."""
    d = cutoff + 1
    x = abs(alpha) ** 2
    damp = np.exp(-x / 2)
    lf = gammaln(np.arange(d) + 1)
    D = np.zeros((d, d), dtype=np.complex128)
    for m in range(d):
        for n in range(d):
            if m >= n:
                D[m, n] = (
                    np.exp(0.5 * (lf[n] - lf[m])) * alpha ** (m - n) * damp
                    * eval_genlaguerre(n, m - n, x)
                )
            else:
                D[m, n] = (
                    np.exp(0.5 * (lf[m] - lf[n])) * (-np.conj(alpha)) ** (n - m) * damp
                    * eval_genlaguerre(m, n - m, x)
                )
    return D


def _apply_ket(tensor: np.ndarray, op: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    # Apply op (acting on the listed axes jointly) to a tensor index set.
    k = len(axes)
    moved = np.moveaxis(tensor, axes, range(k))
    shape = moved.shape
    flat = moved.reshape(op.shape[1], -1)
    out = (op @ flat).reshape(shape)
    return np.moveaxis(out, range(k), axes)


def _apply_operator(state: State, op: np.ndarray, modes: Sequence[int]) -> np.ndarray:
    """Return the raw array of ``op`` applied on ``modes`` (ket and, for rho, bra)."""
    M = state.mode_count
    if isinstance(state, FockStateVector):
        return _apply_ket(state.tensor(), op, list(modes)).reshape(-1)
    t = _apply_ket(state.tensor(), op, list(modes))
    t = _apply_ket(t, op.conj(), [M + m for m in modes])
    return t.reshape(state.dim, state.dim)


def _rebuild(state: State, data: np.ndarray, before: float, what: str) -> State:
    if isinstance(state, FockStateVector):
        after = float(np.vdot(data, data).real)
        new = FockStateVector(state.mode_count, state.cutoff, data)
    else:
        after = float(np.trace(data).real)
        new = FockDensityOperator(state.mode_count, state.cutoff, data)
    deficit = before - after
    if deficit > 1e-12:
        warnings.warn(
            f"{what}: {deficit:.3e} of the weight left the truncated space",
            TruncationWarning,
            stacklevel=3,
        )
    return new


def _weight(state: State) -> float:
    return state.norm2 if isinstance(state, FockStateVector) else state.weight


def _check_mode(state: State, mode: int) -> None:
    if not 0 <= mode < state.mode_count:
        raise ValueError(f"mode {mode} out of range for a {state.mode_count}-mode state")


def apply_beamsplitter(state: State, mode_i: int, mode_j: int, t_c: float) -> State:
    """Mix ``mode_i`` and ``mode_j`` on a beamsplitter of transmittance ``t_c``.

    See the module docstring for the sign convention. A :class:`TruncationWarning`
    reports any weight pushed above the cutoff.
    """
    if mode_i == mode_j:
        raise ValueError("beamsplitter modes must differ")
    _check_mode(state, mode_i)
    _check_mode(state, mode_j)
    U = beamsplitter_unitary(float(t_c), state.cutoff)
    data = _apply_operator(state, U, [mode_i, mode_j])
    return _rebuild(state, data, _weight(state), "beamsplitter")


def apply_displacement(state: State, mode: int, alpha: complex) -> State:
    """Apply ``D(alpha)`` on one mode using exact truncated matrix elements."""
    if abs(alpha) > MAX_DISPLACEMENT:
        raise ValueError(f"|alpha| = {abs(alpha):.3f} exceeds the guardrail {MAX_DISPLACEMENT}")
    _check_mode(state, mode)
    D = displacement_matrix(complex(alpha), state.cutoff)
    data = _apply_operator(state, D, [mode])
    return _rebuild(state, data, _weight(state), "displacement")


def apply_phase(state: State, mode: int, phi: float) -> State:
    """Phase rotation ``exp(i phi n)`` on one mode."""
    _check_mode(state, mode)
    R = np.diag(np.exp(1j * phi * np.arange(state.cutoff + 1)))
    data = _apply_operator(state, R, [mode])
    if isinstance(state, FockStateVector):
        return FockStateVector(state.mode_count, state.cutoff, data)
    return FockDensityOperator(state.mode_count, state.cutoff, data)


def apply_loss(rho: State, channel: LossChannel) -> FockDensityOperator:
    """Send one mode through a pure-loss channel.

    Each Kraus operator lowers the photon number by a fixed ``k``, so the sum
    ``K_k rho K_k^dag`` is accumulated with shifted slices instead of dense
    matrix products.
    """
    if isinstance(rho, FockStateVector):
        rho = rho.to_density()
    _check_mode(rho, channel.mode)
    if channel.eta == 1.0:
        return rho
    M, d = rho.mode_count, rho.cutoff + 1
    coeffs = _loss_coefficients(float(channel.eta), rho.cutoff)
    t = np.moveaxis(rho.tensor(), [channel.mode, M + channel.mode], [0, 1])
    out = np.zeros_like(t)
    extra = (1,) * (t.ndim - 2)
    for k in range(d):
        c = coeffs[k, k:]
        scale = np.outer(c, c).reshape((d - k, d - k) + extra)
        out[: d - k, : d - k] += scale * t[k:, k:]
    out = np.moveaxis(out, [0, 1], [channel.mode, M + channel.mode])
    return FockDensityOperator(M, rho.cutoff, out.reshape(rho.dim, rho.dim))


def partial_trace(rho: State, keep_modes: Sequence[int]) -> FockDensityOperator:
    """Reduced state on ``keep_modes`` (result modes follow the given order)."""
    if isinstance(rho, FockStateVector):
        rho = rho.to_density()
    keep = list(keep_modes)
    if not keep:
        raise ValueError("keep_modes must not be empty")
    if len(set(keep)) != len(keep):
        raise ValueError("keep_modes contains duplicates")
    for m in keep:
        _check_mode(rho, m)
    M = rho.mode_count
    letters = "abcdefghijklmnopqrstuvwxyz"
    ket = list(letters[:M])
    bra = list(letters[M : 2 * M])
    for m in range(M):
        if m not in keep:
            bra[m] = ket[m]
    out = "".join(ket[m] for m in keep) + "".join(bra[m] for m in keep)
    reduced = np.einsum("".join(ket) + "".join(bra) + "->" + out, rho.tensor())
    dim = (rho.cutoff + 1) ** len(keep)
    return FockDensityOperator(len(keep), rho.cutoff, reduced.reshape(dim, dim))


def project_fock(rho: State, mode: int, n: int) -> FockDensityOperator:
    """Unnormalised ``(|n><n|_mode) rho (|n><n|_mode)``; its trace is the outcome probability."""
    if isinstance(rho, FockStateVector):
        rho = rho.to_density()
    _check_mode(rho, mode)
    if not 0 <= n <= rho.cutoff:
        raise ValueError(f"photon number {n} outside [0, {rho.cutoff}]")
    M = rho.mode_count
    t = rho.tensor()
    out = np.zeros_like(t)
    idx = [slice(None)] * (2 * M)
    idx[mode] = n
    idx[M + mode] = n
    out[tuple(idx)] = t[tuple(idx)]
    mat = out.reshape(rho.dim, rho.dim)
    if float(np.trace(mat).real) <= 0.0:
        raise ZeroWeightError(f"outcome n={n} on mode {mode} has zero probability")
    return FockDensityOperator(M, rho.cutoff, mat)


def measure_povm(rho: State, elements: Sequence[np.ndarray], tol: float = 1e-8) -> np.ndarray:
    """Outcome probabilities ``Tr[E_k rho] / Tr[rho]`` for a full-space POVM."""
    if isinstance(rho, FockStateVector):
        rho = rho.to_density()
    total = np.zeros((rho.dim, rho.dim), dtype=np.complex128)
    for E in elements:
        E = np.asarray(E)
        if E.shape != (rho.dim, rho.dim):
            raise ValueError(f"POVM element has shape {E.shape}, expected {(rho.dim, rho.dim)}")
        if np.max(np.abs(E - E.conj().T)) > tol:
            raise ValueError("POVM element is not Hermitian")
        if np.linalg.eigvalsh(0.5 * (E + E.conj().T))[0] < -1e-9:
            raise ValueError("POVM element is not positive semidefinite")
        total += E
    if np.max(np.abs(total - np.eye(rho.dim))) > tol:
        raise ValueError("POVM elements do not sum to the identity")
    probs = np.array([np.trace(E @ rho.matrix).real for E in elements]) / rho.weight
    return np.clip(probs, 0.0, 1.0)
