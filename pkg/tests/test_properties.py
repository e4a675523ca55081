import math
import warnings

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from pnpe import analytic as A
from pnpe import fock as F
from pnpe import protocol as P
from pnpe.metrics import holevo_bound, min_entropy

unit = st.floats(0.0, 1.0)
amp = st.floats(-0.6, 0.6)
seeds = st.integers(0, 2**32 - 1)


def random_density(seed, modes=2, cutoff=3, rank=3):
    rng = np.random.default_rng(seed)
    d = (cutoff + 1) ** modes
    X = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    if modes == 2:
        # keep total photon number within the cutoff so beamsplitters stay exact
        X[[i * (cutoff + 1) + j for i in range(cutoff + 1) for j in range(cutoff + 1) if i + j > cutoff]] = 0.0
    rho = X @ X.conj().T
    return F.FockDensityOperator(modes, cutoff, rho / np.trace(rho).real)


def check_physical(rho: F.FockDensityOperator):
    rho.validate(herm_tol=1e-10, psd_tol=1e-9)


@settings(max_examples=40, deadline=None)
@given(seeds, unit, st.floats(-3.0, 3.0))
def test_channels_preserve_physicality(seed, t, phi):
    rho = random_density(seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", F.TruncationWarning)
        ops = [
            F.apply_beamsplitter(rho, 0, 1, t),
            F.apply_displacement(rho, 1, 0.5 * np.exp(1j * phi)),
            F.apply_phase(rho, 0, phi),
            F.apply_loss(rho, F.LossChannel(t, 1)),
            F.partial_trace(rho, [1]),
        ]
    for out in ops:
        check_physical(out)
    assert abs(ops[0].weight - rho.weight) < 1e-10
    assert abs(ops[3].weight - rho.weight) < 1e-10
    assert abs(ops[4].weight - rho.weight) < 1e-10


@settings(max_examples=40, deadline=None)
@given(seeds, unit, unit)
def test_loss_composition(seed, e1, e2):
    rho = random_density(seed, modes=1, cutoff=5, rank=2)
    two = F.apply_loss(F.apply_loss(rho, F.LossChannel(e1, 0)), F.LossChannel(e2, 0))
    one = F.apply_loss(rho, F.LossChannel(e1 * e2, 0))
    assert np.max(np.abs(two.matrix - one.matrix)) < 1e-10


@settings(max_examples=40, deadline=None)
@given(seeds, unit)
def test_beamsplitter_involution(seed, t):
    rng = np.random.default_rng(seed)
    amps = np.zeros((5, 5), complex)
    for i in range(5):
        for j in range(5 - i):
            amps[i, j] = rng.normal() + 1j * rng.normal()
    s = F.FockStateVector(2, 4, (amps / np.linalg.norm(amps)).reshape(-1))
    back = F.apply_beamsplitter(F.apply_beamsplitter(s, 0, 1, t), 0, 1, t)
    assert np.max(np.abs(back.amplitudes - s.amplitudes)) < 1e-10


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(0, 1), st.integers(0, 3))
def test_projection_weight_is_probability(seed, mode, n):
    rho = random_density(seed)
    proj = F.project_fock(rho, mode, n)
    P_n = np.zeros((4, 4))
    P_n[n, n] = 1
    E = np.kron(P_n, np.eye(4)) if mode == 0 else np.kron(np.eye(4), P_n)
    p = F.measure_povm(rho, [E, np.eye(16) - E])
    assert abs(proj.weight - p[0]) < 1e-12
    check_physical(proj)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 0.5), unit, unit, amp, amp)
def test_q_consistency(g, tb, eta, a, b):
    s = A.SourceParams(g=g, t_b=tb)
    q_ab, q_a, q_b = A.q_joint(s, eta, a, b), A.q_marginal_a(s, eta, a), A.q_marginal_b(s, eta, b)
    for q in (q_ab, q_a, q_b):
        assert -1e-12 <= q <= 1 + 1e-12
    assert q_ab <= min(q_a, q_b) + 1e-12


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 0.5), st.floats(0.01, 0.99), unit, amp, amp, amp, amp, st.floats(-3, 3))
def test_joint_sign_flip(g, tb, eta, a1, a2, b1, b2, phi):
    s = A.SourceParams(g=g, t_b=tb, phi_a=phi)
    m1 = A.MeasurementSettings(a1, a2, b1, b2)
    m2 = A.MeasurementSettings(-a1, -a2, -b1, -b2)
    assert abs(A.chsh(s, eta, m1).S - A.chsh(s, eta, m2).S) < 1e-12


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 0.6), st.floats(0.01, 0.99), st.floats(0.05, 0.95))
def test_lossless_general_equals_ideal(lam, tb, tc):
    s = A.SourceParams.from_lambda(lam, tb, t_c=tc)
    n = math.sqrt(1 + lam * lam)
    ideal = A.ideal_heralded_state(1 / n, lam / n, math.sqrt(tb), math.sqrt(1 - tb), tc).normalize()
    assert np.max(np.abs(A.heralded_state_general(s).matrix - ideal.matrix)) < 1e-12


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 0.6), unit, unit, unit, st.sampled_from([1, -1]))
def test_general_state_is_physical(lam, tb, ea, eb, sign):
    s = A.SourceParams.from_lambda(lam, min(max(tb, 1e-3), 1 - 1e-3))
    m = A.heralded_state_general(s, max(ea, 1e-3), max(eb, 1e-3), sign).matrix
    assert np.max(np.abs(m - m.conj().T)) <= 1e-12
    assert np.linalg.eigvalsh(m)[0] >= -1e-12
    assert abs(np.trace(m).real - 1) <= 1e-12


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 0.5), st.floats(0.05, 0.95), st.floats(0.1, 1.0), unit, amp, amp)
def test_click_statistics_sum(g, tb, eta_h, eta_d, a, b):
    p = P.ProtocolParams(A.SourceParams(g=g, t_b=tb), A.LossParams.symmetric(eta_h))
    stats = P.click_statistics(P.herald(p).state, a, b, eta_d)
    assert abs(stats.p00 + stats.p0n + stats.pn0 + stats.pnn - 1) <= 1e-8


@settings(max_examples=100, deadline=None)
@given(st.floats(2.0, 2 * math.sqrt(2) - 1e-4))
def test_entropy_monotone(S):
    h = 5e-5
    assert min_entropy(S + h) > min_entropy(S)
    assert holevo_bound(S + h) < holevo_bound(S)
