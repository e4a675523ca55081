import math

import numpy as np
import pytest

from pnpe import analytic as A
from pnpe import fock as F
from pnpe import protocol as P
from pnpe.metrics import success_probability
from pnpe.table_s1 import ROWS


def params(g=0.2, t_b=0.8, eta_a2=1.0, eta_b2=1.0, eta_D=1.0, **kw):
    return P.ProtocolParams(A.SourceParams(g=g, t_b=t_b), A.LossParams(eta_a2, eta_b2, eta_D), **kw)


class TestParams:
    def test_cutoff_rules(self):
        with pytest.raises(ValueError):
            params(cutoff=1)
        with pytest.raises(ValueError):
            params(cutoff=13)
        P.ProtocolParams(A.SourceParams(g=0.0, t_b=0.5), cutoff=1)

    def test_sign_rule(self):
        with pytest.raises(ValueError):
            params(charlie_sign=0)


class TestSources:
    def test_low_gain_alice_vacuum(self):
        p = params(g=0.0)
        alice = P.alice_source(p)
        assert alice.amplitude(0, 0) == 1.0

    def test_bob_state(self):
        p = P.ProtocolParams(A.SourceParams.from_lambda(0.2, 0.8))
        bob = P.bob_source(p)
        w = A.bob_prep_probability(0.2)
        assert bob.weight == pytest.approx(w)
        assert bob.element((0, 1), (0, 1)).real == pytest.approx(0.8 * w)
        assert bob.element((1, 0), (1, 0)).real == pytest.approx(0.2 * w)
        assert bob.element((0, 1), (1, 0)).real == pytest.approx(0.4 * w)

    def test_unheralded_mixture(self):
        p = params(g=0.3)
        bob = P.bob_source(p, heralded=False)
        assert bob.weight == pytest.approx(1.0)
        assert bob.element((0, 0), (0, 0)).real == pytest.approx(1 - A.bob_prep_probability(math.tanh(0.3)))

    def test_alice_series(self):
        lam = math.tanh(0.3)
        rho = P.prepare_sources(params(g=0.3))
        alice = F.partial_trace(rho, [0, 1])
        assert (alice.element((1, 1), (1, 1)).real / alice.weight) == pytest.approx(
            lam**2 * (1 - lam**2) / (1 - lam**14), rel=1e-12
        )

    def test_zero_gain_rejected(self):
        with pytest.raises(F.ZeroWeightError):
            P.prepare_sources(params(g=0.0))
        with pytest.raises(F.ZeroWeightError):
            P.herald(params(g=0.0))


class TestHerald:
    @pytest.mark.filterwarnings("ignore::pnpe.fock.TruncationWarning")
    def test_dense_route_agrees(self):
        for p in (params(0.2, 0.8, 0.7, 0.9), params(0.3, 0.4, 0.5, 1.0, charlie_sign=-1)):
            fast, dense = P.herald(p), P.herald_dense(p)
            assert np.max(np.abs(fast.state.matrix - dense.state.matrix)) < 1e-12
            assert fast.success_probability == pytest.approx(dense.success_probability, rel=1e-10)

    def test_low_gain_fidelity(self):
        g = 0.05
        lam = math.tanh(g)
        p = params(g=g, t_b=0.6)
        rho = P.herald(p).state.tensor()[:2, :2, :2, :2].reshape(4, 4)
        ref = A.heralded_state_general(p.src).matrix
        v = np.linalg.eigh(ref)[1][:, -1]
        fid = np.vdot(v, rho @ v).real
        assert fid >= 1 - 5 * lam**2

    def test_pnr_herald_gives_exact_block(self):
        # with exactly-one-photon heralding nothing leaks outside the qubit block at eta_H = 1
        p = params(g=0.3, t_b=0.5)
        t = P.herald(p).state.tensor()
        assert np.sum(np.abs(t[:2, :2, :2, :2])) == pytest.approx(np.sum(np.abs(t)), abs=1e-12)

    def test_noise_ratio(self):
        lam, tb, eta = 0.2, 0.8, 0.7
        p = P.ProtocolParams(A.SourceParams.from_lambda(lam, tb), A.LossParams.symmetric(eta))
        st = P.herald(p).state
        ratio = st.element((1, 0), (1, 0)).real / st.element((0, 0), (0, 0)).real
        assert ratio == pytest.approx(2 * lam**2 * (1 - eta), abs=lam**4)

    def test_matches_analytic_for_one_pair_source(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            lam, tb, ea, eb, tc = rng.uniform(0.05, 0.3), rng.uniform(0.1, 0.9), *rng.uniform(0.2, 1, 2), rng.uniform(0.2, 0.8)
            for sign in (+1, -1):
                p = P.ProtocolParams(
                    A.SourceParams.from_lambda(lam, tb, t_c=tc, phi_a=0.3, phi_b=-0.1),
                    A.LossParams(ea, eb), charlie_sign=sign, source_model=P.SourceModel.ONE_PAIR,
                )
                block = P.herald(p).state.tensor()[:2, :2, :2, :2].reshape(4, 4)
                ref = A.heralded_state_general(p.src, ea, eb, sign).matrix
                assert np.max(np.abs(block - ref)) < 1e-12

    def test_success_probability_cross_check(self):
        g, tb = 0.33, 0.8
        lam2 = math.tanh(g) ** 2
        p = params(g=g, t_b=tb)
        pa = lam2 / (1 + lam2)
        eq5 = success_probability(pa, tb * pa, 1.0)
        sim = P.success_probability_sim(p)
        assert abs(sim - eq5) < 4 * lam2**2

    def test_degenerate(self):
        with pytest.raises(P.DegenerateHeraldError):
            P.herald(params(eta_a2=0.0, eta_b2=0.0))


class TestMeasurement:
    @pytest.mark.filterwarnings("ignore::pnpe.fock.TruncationWarning")
    def test_noclick_operator_limits(self):
        assert np.array_equal(P.noclick_operator(0.4, 0.0, 6), np.eye(7))
        # |alpha><alpha| on the low-photon block, where the truncated D^dag D is the identity
        N = P.noclick_operator(0.3, 1.0, 10)
        coh = F.apply_displacement(F.fock_state((0,), 10), 0, 0.3).amplitudes
        assert np.allclose(N[:4, :4], np.outer(coh, coh.conj())[:4, :4], atol=1e-12)

    def test_statistics_valid(self):
        p = params(0.3, 0.4, 0.8, 0.6)
        st = P.click_statistics(P.herald(p).state, 0.3, -0.5, 0.7)
        assert st.p00 + st.p0n + st.pn0 + st.pnn == pytest.approx(1.0, abs=1e-12)
        assert -1 <= st.correlator <= 1

    @pytest.mark.parametrize("idx", [9, 1])
    def test_table_row(self, idx):
        row = ROWS[idx]
        r = P.measure_chsh_sim(P.ProtocolParams(row.source()), row.settings(), row.eta_D)
        assert r.S == pytest.approx(row.S, abs=1e-3)
        assert r.provenance == "simulated"

    def test_blind(self):
        row = ROWS[9]
        assert P.measure_chsh_sim(P.ProtocolParams(row.source()), row.settings(), 0.0).S == 2.0

    def test_displacement_sign_irrelevant_for_S(self):
        row = ROWS[7]
        p = P.ProtocolParams(row.source())
        s1 = row.settings()
        s2 = A.MeasurementSettings(*(-x for x in s1.as_tuple()))
        assert P.measure_chsh_sim(p, s1, row.eta_D).S == pytest.approx(P.measure_chsh_sim(p, s2, row.eta_D).S, abs=1e-12)


class TestSuccessProbability:
    def test_zero_channel(self):
        assert P.success_probability_sim(params(eta_a2=0.0, eta_b2=0.0)) == 0.0

    def test_one_pair_matches_formula(self):
        g, tb, eta_c = 0.33, 0.8, 0.01
        lam2 = math.tanh(g) ** 2
        p = P.ProtocolParams(A.SourceParams(g=g, t_b=tb), A.LossParams.symmetric(math.sqrt(eta_c)),
                             source_model=P.SourceModel.ONE_PAIR)
        pa = lam2 / (1 + lam2)
        ref = success_probability(pa, tb * pa, eta_c)
        assert P.success_probability_sim(p) == pytest.approx(ref, rel=0.02)
        assert P.success_probability_sim(p) == pytest.approx(ref, rel=1e-12)

    def test_full_source_within_second_order(self):
        g, tb, eta_c = 0.33, 0.8, 0.01
        lam2 = math.tanh(g) ** 2
        p = P.ProtocolParams(A.SourceParams(g=g, t_b=tb), A.LossParams.symmetric(math.sqrt(eta_c)))
        pa = lam2 / (1 + lam2)
        ref = success_probability(pa, tb * pa, eta_c)
        # multi-pair emission from Alice adds a relative O(lambda^2) correction
        assert abs(P.success_probability_sim(p) / ref - 1) < 2 * lam2

    def test_sqrt_scaling(self):
        p = lambda e: P.success_probability_sim(
            P.ProtocolParams(A.SourceParams(g=0.33, t_b=0.8), A.LossParams.symmetric(math.sqrt(e)))
        )
        slope = math.log(p(1e-4) / p(1e-3)) / math.log(0.1)
        assert slope == pytest.approx(0.5, abs=0.01)
