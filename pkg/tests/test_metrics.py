import math

import numpy as np
import pytest

from pnpe import metrics as M

SQ8 = 2 * math.sqrt(2)


class TestSuccessProbability:
    def test_zero_channel(self):
        assert M.success_probability(0.1, 0.2, 0.0) == 0.0

    def test_unit_channel(self):
        p = 0.07
        assert M.success_probability(p, p, 1.0) == pytest.approx(2 * p - 2 * p * p)

    def test_rejects(self):
        with pytest.raises(ValueError):
            M.success_probability(1.2, 0.1, 0.5)

    def test_ordering(self):
        lam = math.tanh(0.33)
        tmsv = M.variant_p1(M.ProtocolVariant(M.VariantKind.TWO_TMSV, lam))
        hyb = M.variant_p1(M.ProtocolVariant(M.VariantKind.HYBRID, lam, 0.8))
        sppe = M.variant_p1(M.ProtocolVariant(M.VariantKind.TWO_SPPE, lam, 0.1))
        for eta in np.logspace(-6, 0, 61):
            a, b, c = (M.success_probability(*p, eta) for p in (tmsv, hyb, sppe))
            assert a >= b >= c

    def test_sqrt_law(self):
        pa, pb = 0.08, 0.06
        eta = 1e-4
        assert M.success_probability(pa, pb, eta) / math.sqrt(eta) == pytest.approx(pa + pb, rel=0.01)

    def test_hybrid_tends_to_tmsv(self):
        lam = 0.3
        tmsv = M.variant_p1(M.ProtocolVariant(M.VariantKind.TWO_TMSV, lam))
        hyb = M.variant_p1(M.ProtocolVariant(M.VariantKind.HYBRID, lam, 1.0))
        assert hyb == tmsv


class TestVariants:
    def test_zero_gain(self):
        for kind in M.VariantKind:
            assert M.variant_p1(M.ProtocolVariant(kind, 0.0, 0.5)) == (0.0, 0.0)

    def test_sppe_limit(self):
        lam = 0.25
        assert M.variant_p1(M.ProtocolVariant(M.VariantKind.TWO_SPPE, lam, 1.0)) == M.variant_p1(
            M.ProtocolVariant(M.VariantKind.TWO_TMSV, lam)
        )

    def test_value(self):
        lam = math.tanh(0.33)
        p = M.variant_p1(M.ProtocolVariant.from_g(M.VariantKind.HYBRID, 0.33, 0.8))
        assert p == pytest.approx((lam**2 / (1 + lam**2), 0.8 * lam**2 / (1 + lam**2)), abs=1e-16)

    def test_regime_flag(self):
        assert M.ProtocolVariant(M.VariantKind.TWO_SPPE, 0.3, 0.1).small_t_regime
        assert not M.ProtocolVariant(M.VariantKind.TWO_SPPE, 0.3, 0.5).small_t_regime


class TestEntropies:
    def test_endpoints(self):
        assert M.min_entropy(2.0) == 0.0
        assert M.min_entropy(SQ8) == 1.0
        assert M.holevo_bound(2.0) == 1.0
        assert M.holevo_bound(SQ8) == 0.0

    def test_binary_entropy(self):
        assert M.binary_entropy(0.0) == M.binary_entropy(1.0) == 0.0
        assert M.binary_entropy(0.5) == 1.0
        assert M.binary_entropy(0.11) == pytest.approx(0.4999162, abs=1e-6)

    def test_table_value(self):
        S = 2.685871
        assert M.min_entropy(S) == pytest.approx(1 - math.log2(1 + math.sqrt(2 - S * S / 4)), abs=1e-15)
        p = (1 + math.sqrt(S * S / 4 - 1)) / 2
        assert M.holevo_bound(S) == pytest.approx(-p * math.log2(p) - (1 - p) * math.log2(1 - p), abs=1e-15)

    def test_monotone(self):
        grid = np.linspace(2.0005, SQ8 - 0.0005, 100)
        h = 1e-6
        for S in grid:
            assert M.min_entropy(S + h) - M.min_entropy(S - h) > 0
            assert M.holevo_bound(S + h) - M.holevo_bound(S - h) < 0

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            M.min_entropy(2.9)
        with pytest.warns(RuntimeWarning):
            assert M.min_entropy(1.5) == 0.0

    def test_rate(self):
        m = M.di_metrics(2.4, repetition_rate=1e6)
        assert m.rate_lower_bound == pytest.approx(1e6 * m.h_min)
        assert M.di_metrics(2.4).rate_lower_bound is None
