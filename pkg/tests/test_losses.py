import math

import numpy as np
import pytest

from fdpo import cli
from fdpo import generators as G
from fdpo import losses as L
from fdpo._rng import make_rng


def _triples(rng, count, spread=8.0):
    x = rng.uniform(-spread, spread, (4, count))
    return L.TripleLogProbs(*x)


class TestBradleyTerry:
    def test_zero_gap(self):
        assert L.bt_nll(0.0) == pytest.approx(math.log(2), rel=1e-15)

    def test_stable_for_large_gaps(self):
        assert L.bt_nll(800.0) == 0.0
        assert L.bt_nll(-800.0) == pytest.approx(800.0)

    def test_vectorised(self):
        out = L.bt_nll(np.array([0.0, -2.0]))
        np.testing.assert_allclose(out, [math.log(2), math.log1p(math.e ** 2)], rtol=1e-14)


class TestDpo:
    def test_value_and_gradient(self):
        lv = L.dpo_loss(L.TripleLogProbs(1.0, 0.0, -1.0, 0.0), 0.01)
        # frozen: softplus(-0.02) and -0.01 sigmoid(-0.02)
        assert lv.value == pytest.approx(0.6831971797266342, rel=1e-14)
        assert lv.grad_w == pytest.approx(-0.004950001666600003, rel=1e-12)
        assert lv.grad_l == pytest.approx(0.004950001666600003, rel=1e-12)

    def test_beta_positive(self):
        with pytest.raises(ValueError):
            L.dpo_loss(L.TripleLogProbs(0.0, 0.0, 0.0, 0.0), 0.0)


class TestIdentities:
    def test_fdpo_kl_is_dpo(self):
        t = _triples(make_rng(1), 10_000)
        a, b = L.dpo_loss(t, 0.3), L.fdpo_loss(t, G.get("kl"), 0.3)
        for name in ("value", "grad_w", "grad_l"):
            assert np.max(np.abs(getattr(a, name) - getattr(b, name))) <= 1e-12

    def test_fdpo_squaredpo_is_squaredpo_without_clip(self):
        t = _triples(make_rng(2), 10_000, spread=3.0)
        a = L.squaredpo_loss(t, 0.3, clip=np.inf)
        b = L.fdpo_loss(t, G.get("squaredpo"), 0.3)
        for name in ("value", "grad_w", "grad_l"):
            assert np.max(np.abs(getattr(a, name) - getattr(b, name))) <= 1e-12


class TestSquaredPo:
    def test_clip_exact(self):
        assert L.adaptive_beta(-60.0, 0.01) == 0.01 * math.exp(50.0)

    def test_unclipped_coefficient(self):
        assert L.adaptive_beta(-1.0, 0.5) == pytest.approx(0.5 * math.e, rel=1e-15)
        assert L.adaptive_beta(2.0, 0.5) == pytest.approx(0.5 * math.exp(-2.0), rel=1e-15)

    def test_clipped_gradient_is_constant_coefficient(self):
        # past the threshold only the log-ratio factor moves
        lv = L.squaredpo_loss(L.TripleLogProbs(-61.0, 0.0, 0.0, 0.0), 1e-30)
        s = 1.0 / (1.0 + math.exp(1e-30 * math.exp(50.0) * 61.0))
        assert lv.grad_w == pytest.approx(-s * 1e-30 * math.exp(50.0), rel=1e-12)

    def test_stop_gradient_uses_coefficient(self):
        t = L.TripleLogProbs(-0.5, 0.0, 0.2, 0.0)
        full = L.squaredpo_loss(t, 0.1)
        sg = L.squaredpo_loss(t, 0.1, stop_gradient_beta=True)
        assert sg.value == full.value
        ratio = sg.grad_w / full.grad_w
        assert ratio == pytest.approx(1.0 / 1.5, rel=1e-12)

    def test_rejects_bad_clip(self):
        with pytest.raises(ValueError):
            L.squaredpo_loss(L.TripleLogProbs(0.0, 0.0, 0.0, 0.0), 0.1, clip=0.0)


class TestGradients:
    @pytest.mark.parametrize("case", cli.gradient_cases(), ids=lambda c: c[0])
    def test_against_finite_differences(self, case):
        name, fn, clip = case
        points = cli.gradient_points(make_rng(4), 200, L.DEFAULT_CLIP)
        checked, failures, skipped, worst = cli.check_loss_gradients(name, fn, clip, points)
        assert failures == 0, f"worst relative error {worst:.3e}"
        assert checked - skipped >= 190

    @pytest.mark.parametrize("loss_id", ["dpo", "squaredpo"] + [f"fdpo:{g.id}" for g in G.catalog()])
    def test_gradient_step_widens_gap(self, loss_id):
        t = L.TripleLogProbs(np.log(0.3), np.log(0.3), np.log(0.2), np.log(0.2))
        lv = L.loss_by_id(loss_id, t, 0.1)
        assert lv.grad_w < 0 < lv.grad_l


class TestLossIds:
    def test_dispatch(self):
        t = L.TripleLogProbs(0.1, 0.0, -0.2, 0.0)
        assert L.loss_by_id("fdpo:kl", t, 0.2).value == pytest.approx(L.dpo_loss(t, 0.2).value, rel=1e-14)

    @pytest.mark.parametrize("bad", ["ipo", "fdpo:nosuch", ""])
    def test_unknown(self, bad):
        with pytest.raises(KeyError):
            L.validate_loss_id(bad)

    def test_normalises_case(self):
        assert L.validate_loss_id(" SquaredPO ") == "squaredpo"
