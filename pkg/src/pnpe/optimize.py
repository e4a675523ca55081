"""
Multi-start CHSH maximisation and efficiency-threshold search.

The search runs Nelder-Mead (``scipy.optimize.minimize``) on an unconstrained
vector that is folded back into the box with a triangle wave, so every
evaluated point respects the bounds. Starts are the closest tabulated optima
followed by seeded uniform draws; results are reduced deterministically
(largest S, then smallest ``g``, then smallest ``|alpha2|``).
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .analytic import (
    ChshReport,
    GenericQubitPathState,
    LossParams,
    MeasurementSettings,
    PathFamily,
    SourceParams,
    chsh,
    heralded_chsh,
)
from .table_s1 import nearest_rows

__all__ = [
    "Objective",
    "VARIABLES",
    "OptimizationProblem",
    "OptimumReport",
    "GenericOptimum",
    "NoViolationError",
    "fast_chsh",
    "fast_generic_chsh",
    "maximize_chsh",
    "maximize_generic_chsh",
    "threshold_scan",
    "chsh_threshold",
    "generic_threshold",
]

VARIABLES = ("t_b", "g", "alpha1", "alpha2", "beta1", "beta2")
GENERIC_VARIABLES = ("c0", "alpha1", "alpha2", "beta1", "beta2")
DEFAULT_BOUNDS = {
    "t_b": (0.0, 1.0),
    "g": (0.0, 0.5),
    "alpha1": (-1.0, 1.0),
    "alpha2": (-1.0, 1.0),
    "beta1": (-1.0, 1.0),
    "beta2": (-1.0, 1.0),
}
VIOLATION_MARGIN = 1e-6
TIE_TOL = 1e-12


class NoViolationError(RuntimeError):
    """No efficiency in the scanned interval gives a CHSH violation."""


class Objective(enum.Enum):
    ANALYTIC = "analytic"
    SIMULATED = "simulated"


# ---------------------------------------------------------------- objectives


def fast_chsh(
    t_b: float,
    g: float,
    a1: float,
    a2: float,
    b1: float,
    b2: float,
    eta_D: float,
    eta_a2: float = 1.0,
    eta_b2: float = 1.0,
    t_c: float = 0.5,
    phi: float = 0.0,
) -> float:
    """Scalar CHSH of the (noisy) heralded state for real amplitudes."""
    lam = math.tanh(g)
    l2 = lam * lam
    wa, wb = t_c, 1.0 - t_c
    p00 = t_b * eta_b2 * wb
    p11 = l2 * (1.0 - t_b) * eta_a2 * wa
    p10 = l2 * t_b * (eta_a2 * (1.0 - eta_b2) * wa + eta_b2 * (1.0 - eta_a2) * wb)
    norm = p00 + p11 + p10
    if norm <= 0.0:
        return 2.0
    coh = 2.0 * lam * math.sqrt(max(0.0, eta_a2 * eta_b2 * t_b * (1.0 - t_b) * wa * wb)) * math.cos(phi)
    e = eta_D

    def f(x):
        return 1.0 - e + e * e * x * x

    def qab(x, y):
        return math.exp(-e * (x * x + y * y)) * (
            p00 + p10 * f(x) + p11 * f(x) * f(y) + coh * e * e * x * y
        ) / norm

    qa = math.exp(-e * a1 * a1) * (p00 + (p10 + p11) * f(a1)) / norm
    qb = math.exp(-e * b1 * b1) * (p00 + p10 + p11 * f(b1)) / norm
    return 2.0 + 4.0 * (qab(a1, b1) + qab(a1, b2) + qab(a2, b1) - qab(a2, b2) - qa - qb)


def fast_generic_chsh(kind: PathFamily, c0: float, a1: float, a2: float, b1: float, b2: float, eta: float) -> float:
    """Scalar CHSH of a single-excitation family member (zero phases, real amplitudes)."""
    c0sq = c0 * c0
    c1sq = 1.0 - c0sq
    cross = 2.0 * c0 * math.sqrt(max(c1sq, 0.0)) * eta * eta

    def f(x):
        return 1.0 - eta + eta * eta * x * x

    if kind is PathFamily.CORRELATED:
        def qab(x, y):
            return math.exp(-eta * (x * x + y * y)) * (c0sq + c1sq * f(x) * f(y) + cross * x * y)

        qa = math.exp(-eta * a1 * a1) * (c0sq + c1sq * f(a1))
        qb = math.exp(-eta * b1 * b1) * (c0sq + c1sq * f(b1))
    else:
        def qab(x, y):
            return math.exp(-eta * (x * x + y * y)) * (c0sq * f(y) + c1sq * f(x) + cross * x * y)

        qa = math.exp(-eta * a1 * a1) * (c1sq * f(a1) + c0sq)
        qb = math.exp(-eta * b1 * b1) * (c0sq * f(b1) + c1sq)
    return 2.0 + 4.0 * (qab(a1, b1) + qab(a1, b2) + qab(a2, b1) - qab(a2, b2) - qa - qb)


# ---------------------------------------------------------------- problem types


@dataclass(frozen=True)
class OptimizationProblem:
    """CHSH maximisation at one local detection efficiency.

    ``eta_H`` sets a symmetric heralding efficiency (1 reproduces the
    noise-free model). ``fixed`` pins variables to constants.
    """

    eta_D: float
    objective: Objective = Objective.ANALYTIC
    bounds: Mapping[str, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_BOUNDS))
    symmetric_ansatz: bool = False
    eta_H: float = 1.0
    t_c: float = 0.5
    fixed: Mapping[str, float] = field(default_factory=dict)
    restarts: int = 8
    warm_starts: int = 3
    seed: int = 0
    xatol: float = 1e-9
    fatol: float = 1e-14
    maxfev: int = 20_000
    cutoff: int = 6
    workers: int = 1

    def __post_init__(self):
        if not 0.0 <= self.eta_D <= 1.0:
            raise ValueError("eta_D must lie in [0, 1]")
        if not 0.0 <= self.eta_H <= 1.0:
            raise ValueError("eta_H must lie in [0, 1]")
        for name in VARIABLES:
            if name not in self.bounds:
                raise ValueError(f"missing bounds for {name}")
        for name, (lo, hi) in self.bounds.items():
            if name not in VARIABLES:
                raise ValueError(f"unknown variable {name}")
            if not lo <= hi:
                raise ValueError(f"empty interval for {name}: [{lo}, {hi}]")
        g_lo, g_hi = self.bounds["g"]
        if g_hi > 0.5 or g_lo < 0.0:
            raise ValueError("g must stay within [0, 0.5]")
        t_lo, t_hi = self.bounds["t_b"]
        if t_lo < 0.0 or t_hi > 1.0:
            raise ValueError("t_b must stay within [0, 1]")
        for name in self.fixed:
            if name not in VARIABLES:
                raise ValueError(f"unknown fixed variable {name}")
        if self.restarts < 1:
            raise ValueError("restarts must be positive")

    @property
    def free_variables(self) -> tuple[str, ...]:
        out = []
        for name in VARIABLES:
            if name in self.fixed:
                continue
            if self.symmetric_ansatz and name.startswith("beta"):
                continue
            out.append(name)
        return tuple(out)

    def expand(self, x: Sequence[float]) -> dict[str, float]:
        """Full variable assignment from the free-variable vector."""
        vals = dict(self.fixed)
        vals.update(zip(self.free_variables, (float(v) for v in x)))
        if self.symmetric_ansatz:
            for i in ("1", "2"):
                if "beta" + i not in self.fixed:
                    vals["beta" + i] = -vals["alpha" + i]
        return vals

    def evaluate(self, vals: Mapping[str, float]) -> float:
        if self.objective is Objective.ANALYTIC:
            return fast_chsh(
                vals["t_b"], vals["g"], vals["alpha1"], vals["alpha2"], vals["beta1"], vals["beta2"],
                self.eta_D, self.eta_H, self.eta_H, self.t_c,
            )
        from .protocol import ProtocolParams, measure_chsh_sim

        params = ProtocolParams(
            SourceParams(g=vals["g"], t_b=vals["t_b"], t_c=self.t_c),
            LossParams.symmetric(self.eta_H, self.eta_D),
            cutoff=self.cutoff,
        )
        try:
            return measure_chsh_sim(params, _settings(vals), self.eta_D).S
        except ValueError:
            return 2.0


@dataclass(frozen=True)
class OptimumReport:
    source: SourceParams
    settings: MeasurementSettings
    S: float
    evaluations: int
    restarts_used: int
    seed: int
    degenerate: bool
    problem: OptimizationProblem
    restart_values: tuple[float, ...] = ()

    def chsh_report(self) -> ChshReport:
        """Full analytic report at the optimum (noise included when ``eta_H < 1``)."""
        if self.problem.eta_H == 1.0:
            return chsh(self.source, self.problem.eta_D, self.settings)
        return heralded_chsh(
            self.source, LossParams.symmetric(self.problem.eta_H, self.problem.eta_D), self.settings
        )


@dataclass(frozen=True)
class GenericOptimum:
    state: GenericQubitPathState
    settings: MeasurementSettings
    S: float
    abs_S: float
    evaluations: int
    seed: int


# ---------------------------------------------------------------- search machinery


def _fold(y: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Reflect an unconstrained point into ``[lo, hi]`` (triangle wave)."""
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    u = np.mod((y - lo) / safe, 2.0)
    u = np.where(u > 1.0, 2.0 - u, u)
    return np.where(span > 0, lo + u * span, lo)


def _nelder_mead(fun: Callable[[np.ndarray], float], x0, lo, hi, xatol, fatol, maxfev):
    """Maximise ``fun`` from ``x0``; returns ``(x, value, nfev, start_value)``."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    x0 = np.clip(np.asarray(x0, dtype=float), lo, hi)
    start = fun(x0)
    res = minimize(
        lambda y: -fun(_fold(y, lo, hi)),
        x0,
        method="Nelder-Mead",
        options={"xatol": xatol, "fatol": fatol, "maxfev": maxfev, "maxiter": maxfev},
    )
    x = _fold(res.x, lo, hi)
    val = fun(x)
    if val < start:
        x, val = x0, start
    return x, val, int(res.nfev) + 2, start


def _settings(vals: Mapping[str, float]) -> MeasurementSettings:
    return MeasurementSettings(vals["alpha1"], vals["alpha2"], vals["beta1"], vals["beta2"])


def _problem_starts(problem: OptimizationProblem) -> list[np.ndarray]:
    names = problem.free_variables
    lo = np.array([problem.bounds[n][0] for n in names])
    hi = np.array([problem.bounds[n][1] for n in names])
    starts = []
    for row in nearest_rows(problem.eta_D, problem.warm_starts)[: problem.restarts]:
        vals = {
            "t_b": row.transmittance, "g": row.g,
            "alpha1": row.alpha1, "alpha2": row.alpha2, "beta1": row.beta1, "beta2": row.beta2,
        }
        starts.append(np.clip([vals[n] for n in names], lo, hi))
    rng = np.random.default_rng(problem.seed)
    while len(starts) < problem.restarts:
        starts.append(rng.uniform(lo, hi))
    return starts


def _run_restart(problem: OptimizationProblem, x0: np.ndarray):
    names = problem.free_variables
    lo = [problem.bounds[n][0] for n in names]
    hi = [problem.bounds[n][1] for n in names]

    def fun(x):
        return problem.evaluate(problem.expand(x))

    return _nelder_mead(fun, x0, lo, hi, problem.xatol, problem.fatol, problem.maxfev)


def _reduce(results, key_of):
    """Index of the best result: max value, then the tie-break key, then order."""
    best = max(r[1] for r in results)
    tied = [i for i, r in enumerate(results) if r[1] >= best - TIE_TOL]
    return min(tied, key=lambda i: (key_of(results[i]), i))


def maximize_chsh(problem: OptimizationProblem) -> OptimumReport:
    """Best CHSH value over the problem's box."""
    starts = _problem_starts(problem)
    if not problem.free_variables:
        vals = problem.expand([])
        S = problem.evaluate(vals)
        return OptimumReport(
            SourceParams(g=vals["g"], t_b=vals["t_b"], t_c=problem.t_c), _settings(vals), S,
            1, 0, problem.seed, True, problem, (S,),
        )
    if problem.workers > 1:
        with ProcessPoolExecutor(max_workers=problem.workers) as pool:
            results = list(pool.map(_run_restart, [problem] * len(starts), starts))
    else:
        results = [_run_restart(problem, x0) for x0 in starts]

    def tie_key(r):
        vals = problem.expand(r[0])
        return (vals["g"], abs(vals["alpha2"]))

    i = _reduce(results, tie_key)
    vals = problem.expand(results[i][0])
    degenerate = all(r[1] <= r[3] + TIE_TOL for r in results)
    return OptimumReport(
        source=SourceParams(g=vals["g"], t_b=vals["t_b"], t_c=problem.t_c),
        settings=_settings(vals),
        S=results[i][1],
        evaluations=sum(r[2] for r in results),
        restarts_used=len(results),
        seed=problem.seed,
        degenerate=degenerate,
        problem=problem,
        restart_values=tuple(r[1] for r in results),
    )


def maximize_generic_chsh(
    kind: PathFamily,
    eta: float,
    restarts: int = 8,
    seed: int = 0,
    amplitude_bound: float = 1.0,
    xatol: float = 1e-9,
    fatol: float = 1e-14,
    maxfev: int = 20_000,
) -> GenericOptimum:
    """Largest ``|S|`` over ``(c0, alpha_i, beta_i)`` for one single-excitation family.

    The anticorrelated family violates with ``S < -2``; both signs count.
    """
    lo = np.array([-1.0] + [-amplitude_bound] * 4)
    hi = np.array([1.0] + [amplitude_bound] * 4)

    def fun(x):
        return abs(fast_generic_chsh(kind, *x, eta))

    starts = []
    for row in nearest_rows(eta, min(3, restarts)):
        if kind is PathFamily.CORRELATED:
            lam2 = math.tanh(row.g) ** 2
            tb = row.transmittance
            c0 = math.sqrt(tb / (tb + lam2 * (1.0 - tb)))
        else:
            c0 = math.sqrt(0.5)
        starts.append(np.clip([c0, row.alpha1, row.alpha2, row.beta1, row.beta2], lo, hi))
    rng = np.random.default_rng(seed)
    while len(starts) < restarts:
        starts.append(rng.uniform(lo, hi))
    results = [_nelder_mead(fun, x0, lo, hi, xatol, fatol, maxfev) for x0 in starts]
    i = _reduce(results, lambda r: (abs(r[0][2]),))
    x = results[i][0]
    c0 = float(x[0])
    state = GenericQubitPathState.from_c0(c0, kind)
    return GenericOptimum(
        state=state,
        settings=MeasurementSettings(*(float(v) for v in x[1:])),
        S=fast_generic_chsh(kind, *x, eta),
        abs_S=results[i][1],
        evaluations=sum(r[2] for r in results),
        seed=seed,
    )


# ---------------------------------------------------------------- thresholds


def threshold_scan(
    max_s: Callable[[float], float],
    tol: float = 1e-3,
    lo: float = 0.6,
    hi: float = 1.0,
    margin: float = VIOLATION_MARGIN,
) -> float:
    """Smallest efficiency where ``max_s`` exceeds ``2 + margin``, by bisection.

    Assumes the optimal violation grows with efficiency. Returns the midpoint
    of the final bracket, whose width is below ``tol``.
    """
    if tol < 1e-4:
        raise ValueError("tol must be at least 1e-4")
    if not max_s(hi) > 2.0 + margin:
        raise NoViolationError(f"no CHSH violation up to efficiency {hi}")
    if max_s(lo) > 2.0 + margin:
        return lo
    while hi - lo >= tol:
        mid = 0.5 * (lo + hi)
        if max_s(mid) > 2.0 + margin:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def chsh_threshold(template: Optional[OptimizationProblem] = None, tol: float = 1e-3, **scan) -> float:
    """Detection-efficiency threshold of the full protocol."""
    template = template or OptimizationProblem(eta_D=1.0)
    return threshold_scan(lambda eta: maximize_chsh(replace(template, eta_D=eta)).S, tol, **scan)


def generic_threshold(kind: PathFamily, tol: float = 1e-3, seed: int = 0, restarts: int = 8, **scan) -> float:
    """Efficiency threshold of one single-excitation family (scored on ``|S|``)."""
    return threshold_scan(
        lambda eta: maximize_generic_chsh(kind, eta, restarts=restarts, seed=seed).abs_S, tol, **scan
    )

