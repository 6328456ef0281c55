import csv
import math

import numpy as np
import pytest
from scipy.special import expit

from fdpo import losses
from fdpo import oracle as O
from fdpo import trainer as T


def _two_response_world(gap=0.0):
    return T.SyntheticWorld(1, 2, np.array([[gap, 0.0]]), np.zeros((1, 2)), 0)


@pytest.fixture(scope="module")
def small_run():
    cfg = T.ToyConfig(num_prompts=30, vocab_size=8, loss="squaredpo")
    return cfg, T.run_experiment(cfg, seed=3)


class TestWorld:
    def test_deterministic(self):
        a, b = T.generate_world(seed=5), T.generate_world(seed=5)
        assert np.array_equal(a.true_reward, b.true_reward) and np.array_equal(a.ref_logits, b.ref_logits)

    def test_seed_changes_world(self):
        assert not np.array_equal(T.generate_world(seed=1).true_reward, T.generate_world(seed=2).true_reward)

    def test_minimal_world(self):
        w = T.generate_world(num_prompts=1, vocab_size=2)
        assert w.true_reward.shape == (1, 2) and w.displacement_free

    def test_reference_is_distribution(self):
        p = np.exp(T.generate_world(seed=0).ref_logprobs)
        np.testing.assert_allclose(p.sum(axis=1), 1.0)
        assert np.all(p > 0)

    @pytest.mark.parametrize("kw", [dict(vocab_size=1), dict(num_prompts=0), dict(reward_scale=-1.0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            T.generate_world(**kw)


class TestPreferences:
    @pytest.mark.parametrize("gap,want,tol", [(50.0, 1.0, 1e-4), (0.0, 0.5, 0.02), (1.0, float(expit(1.0)), 0.02)])
    def test_bradley_terry_rates(self, gap, want, tol):
        triples = T.sample_preferences(_two_response_world(gap), 10_000, seed=1)
        rate = np.mean([t.winner == 0 for t in triples])
        assert abs(rate - want) <= tol

    def test_zero_reward_scale_is_fair(self):
        w = T.generate_world(num_prompts=50, vocab_size=4, reward_scale=0.0, seed=2)
        triples = T.sample_preferences(w, 200, seed=2)
        lower_wins = np.mean([t.winner < t.loser for t in triples])
        assert abs(lower_wins - 0.5) < 0.02

    def test_pairs_are_distinct_and_counted(self):
        w = T.generate_world(num_prompts=7, vocab_size=5, seed=0)
        triples = T.sample_preferences(w, 3, seed=0)
        assert len(triples) == 21
        assert all(t.winner != t.loser for t in triples)

    def test_rejects_zero_pairs(self):
        with pytest.raises(ValueError):
            T.sample_preferences(T.generate_world(seed=0), 0)

    def test_triple_validates(self):
        with pytest.raises(ValueError):
            T.PreferenceTriple(0, 1, 1)


class TestTraining:
    def test_lr_zero_keeps_reference(self):
        w = T.generate_world(num_prompts=10, vocab_size=5, seed=0)
        tr = T.sample_preferences(w, 2, seed=0)
        ck = T.train(w, tr, "dpo", lr=0.0)
        assert len(ck) == 5
        for c in ck:
            assert np.array_equal(c.logits, w.ref_logits)
            assert np.all(T.chosen_log_ratios(c, w, tr) == 0.0)

    def test_winner_probability_increases(self):
        w = _two_response_world()
        tr = [T.PreferenceTriple(0, 0, 1)] * 4
        probs = [c.probs()[0, 0] for c in T.train(w, tr, "dpo", lr=0.5)]
        assert all(b > a for a, b in zip(probs, probs[1:]))

    def test_checkpoint_tags(self):
        w = _two_response_world()
        ck = T.train(w, [T.PreferenceTriple(0, 0, 1)], "dpo", epochs=2)
        assert [c.epoch_tag for c in ck] == ["epoch-0", "epoch-1", "epoch-2"]

    def test_gradient_matches_finite_differences(self):
        w = T.generate_world(num_prompts=3, vocab_size=4, seed=1)
        tr = T.sample_preferences(w, 3, seed=1)
        z0 = np.asarray(w.ref_logits) + T.generate_world(num_prompts=3, vocab_size=4, seed=9).ref_logits
        for loss_id in ("dpo", "squaredpo", "fdpo:jeffrey"):
            def value(flat):
                return T.mean_loss_and_grad(flat.reshape(3, 4), w.ref_logprobs, tr, loss_id, 0.5)[0]

            _, grad = T.mean_loss_and_grad(z0, w.ref_logprobs, tr, loss_id, 0.5)
            fd = O.finite_diff_gradient(value, z0.ravel())
            np.testing.assert_allclose(grad.ravel(), fd, atol=1e-8)

    def test_divergence_keeps_good_checkpoints(self):
        w = T.generate_world(num_prompts=4, vocab_size=4, seed=0)
        tr = T.sample_preferences(w, 2, seed=0)
        with pytest.raises(T.TrainingDiverged) as info:
            T.train(w, tr, "dpo", lr=math.inf)
        assert len(info.value.checkpoints) >= 1
        assert np.array_equal(info.value.checkpoints[0].logits, w.ref_logits)

    def test_unknown_loss(self):
        w = _two_response_world()
        with pytest.raises(KeyError):
            T.train(w, [T.PreferenceTriple(0, 0, 1)], "ipo")

    def test_bad_triple_index(self):
        with pytest.raises(ValueError):
            T.train(_two_response_world(), [T.PreferenceTriple(0, 0, 2)], "dpo")

    def test_deterministic(self):
        a = T.run_experiment(T.ToyConfig(num_prompts=20), seed=4)
        b = T.run_experiment(T.ToyConfig(num_prompts=20), seed=4)
        for x, y in zip(a.checkpoints, b.checkpoints):
            assert x.logits.tobytes() == y.logits.tobytes()


class TestLogRatios:
    def test_shift_invariance(self):
        w = T.generate_world(num_prompts=2, vocab_size=3, seed=0)
        tr = [T.PreferenceTriple(0, 0, 1), T.PreferenceTriple(1, 2, 0)]
        shifted = T.TabularPolicy(np.asarray(w.ref_logits) + np.array([[3.0], [-7.0]]), "shift")
        np.testing.assert_allclose(T.chosen_log_ratios(shifted, w, tr), 0.0, atol=1e-14)

    def test_doubling(self):
        w = T.SyntheticWorld(1, 3, np.zeros((1, 3)), np.zeros((1, 3)), 0)
        # winner probability 2/3 against a uniform 1/3
        pol = T.TabularPolicy(np.log(np.array([[2 / 3, 1 / 6, 1 / 6]])), "h")
        lr = T.chosen_log_ratios(pol, w, [T.PreferenceTriple(0, 0, 1)])
        assert lr[0] == pytest.approx(math.log(2.0), rel=1e-14)

    def test_shape_mismatch(self):
        w = _two_response_world()
        with pytest.raises(ValueError):
            T.chosen_log_ratios(T.TabularPolicy(np.zeros((2, 2)), "x"), w, [T.PreferenceTriple(0, 0, 1)])


class TestReport:
    def test_reference_column_zero(self, small_run):
        _, res = small_run
        assert np.all(res.report.per_winner_logratio[:, 0] == 0.0)

    def test_nesting(self, small_run):
        _, res = small_run
        fr = [res.report.monotone_fractions[k] for k in (2, 3, 4)]
        assert all(0.0 <= f <= 1.0 for f in fr)
        assert fr[0] >= fr[1] >= fr[2]

    def test_counts_match_fractions(self, small_run):
        _, res = small_run
        rep = res.report
        for k, c in rep.monotone_counts.items():
            assert rep.monotone_fractions[k] == c / rep.denominator

    def test_adaptive_coefficient_grows_for_displaced_winners(self, small_run):
        cfg, res = small_run
        for ck in res.checkpoints[1:]:
            lr = T.chosen_log_ratios(ck, res.world, res.triples)
            eff = T.effective_betas(ck, res.world, res.triples, cfg.beta)
            down = lr < 0
            assert down.any()
            np.testing.assert_allclose(eff[down], cfg.beta * np.exp(-lr[down]), rtol=1e-14)
            assert np.all(eff[down] > cfg.beta)

    def test_empty_denominator(self):
        w = T.generate_world(num_prompts=5, vocab_size=4, seed=0)
        tr = T.sample_preferences(w, 2, seed=0)
        rep = T.displacement_report(T.train(w, tr, "dpo", lr=0.0), w, tr)
        assert rep.denominator == 0
        assert rep.monotone_fractions == {2: None, 3: None, 4: None}

    def test_single_epoch_has_no_fractions(self):
        w = T.generate_world(num_prompts=5, vocab_size=4, seed=0)
        tr = T.sample_preferences(w, 2, seed=0)
        rep = T.displacement_report(T.train(w, tr, "dpo", epochs=1), w, tr)
        assert rep.epochs == 1 and rep.monotone_fractions == {}

    def test_needs_two_checkpoints(self):
        w = _two_response_world()
        with pytest.raises(ValueError):
            T.displacement_report([T.TabularPolicy(np.zeros((1, 2)), "e0")], w, [T.PreferenceTriple(0, 0, 1)])

    def test_csv_outputs(self, small_run, tmp_path):
        _, res = small_run
        T.write_trajectories_csv(tmp_path / "t.csv", res.report)
        T.write_histogram_csv(tmp_path / "h.csv", res.report)
        with open(tmp_path / "t.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["triple_id", "epoch", "logratio"]
        assert len(rows) == 1 + len(res.triples) * 5
        with open(tmp_path / "h.csv") as fh:
            assert len(fh.read().splitlines()) == 1 + len(res.triples)


class TestPairedRuns:
    def test_dpo_more_monotone_than_squaredpo(self):
        d = T.run_experiment(T.ToyConfig(loss="dpo"), seed=0).report
        q = T.run_experiment(T.ToyConfig(loss="squaredpo"), seed=0).report
        assert d.monotone_fractions[4] > q.monotone_fractions[4]

    @pytest.mark.xfail(strict=True, reason="tabular softmax: squaredpo's growing loser coefficient "
                                           "drives the worst winner lower than under dpo")
    def test_squaredpo_minimum_not_below_dpo(self):
        d = T.run_experiment(T.ToyConfig(loss="dpo"), seed=0).report
        q = T.run_experiment(T.ToyConfig(loss="squaredpo"), seed=0).report
        assert q.per_winner_logratio[:, 4].min() >= d.per_winner_logratio[:, 4].min()

    def test_clip_default(self):
        assert T.ToyConfig().clip == losses.DEFAULT_CLIP
