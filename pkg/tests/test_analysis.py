import math

import numpy as np
import pytest

from hardrank.analysis import (
    FALSE_NEGATIVE,
    TRUE_NEGATIVE,
    collect_scores,
    delta_curve_sweep,
    kde,
    kl_divergence,
    scores_by_label,
)
from hardrank.errors import DegenerateSample
from hardrank.prefcurve import PreferenceCurve, delta_g


class TestKDE:
    def test_recovers_normal_density(self, rng):
        x = rng.normal(2.0, 1.0, size=4000)
        est = kde(x)
        truth = np.exp(-0.5 * (est.grid - 2.0) ** 2) / math.sqrt(2 * math.pi)
        assert np.max(np.abs(est.density - truth)) < 0.03

    def test_integrates_to_one(self, rng):
        x = rng.normal(size=500)
        est = kde(x)
        dx = est.grid[1] - est.grid[0]
        assert np.sum(est.density) * dx == pytest.approx(1.0, abs=1e-3)

    def test_silverman_bandwidth(self, rng):
        x = rng.normal(size=300)
        est = kde(x)
        expected = 1.06 * np.std(x, ddof=1) * 300 ** (-0.2)
        assert est.bandwidth == pytest.approx(expected, rel=1e-12)

    def test_degenerate_samples(self):
        with pytest.raises(DegenerateSample):
            kde([1.0])
        with pytest.raises(DegenerateSample):
            kde([2.0, 2.0, 2.0])


class TestKL:
    def test_self_divergence_zero(self, rng):
        x = rng.normal(size=800)
        est = kde(x)
        assert kl_divergence(est, est) == pytest.approx(0.0, abs=1e-10)

    def test_gaussian_closed_form(self, rng):
        # KL(N(0,1) || N(1,1)) = 0.5 in nats; KDE smoothing biases the
        # estimate slightly, so the tolerance is loose
        p = kde(rng.normal(0.0, 1.0, size=6000))
        q = kde(rng.normal(1.0, 1.0, size=6000))
        assert kl_divergence(p, q) == pytest.approx(0.5, abs=0.1)

    def test_asymmetry_direction(self, rng):
        # narrow vs wide: KL(narrow||wide) < KL(wide||narrow)
        narrow = kde(rng.normal(0.0, 0.5, size=3000))
        wide = kde(rng.normal(0.0, 2.0, size=3000))
        assert kl_divergence(narrow, wide) < kl_divergence(wide, narrow)

    def test_nonnegative(self, rng):
        p = kde(rng.normal(0.0, 1.0, size=400))
        q = kde(rng.normal(0.3, 1.2, size=400))
        assert kl_divergence(p, q) >= 0.0


class TestCollectScores:
    def test_label_partition(self, small_synthetic, mf_model):
        dataset, planted = small_synthetic
        samples = collect_scores(mf_model, dataset, planted_false_negatives=planted,
                                 tn_per_user=50, seed=0)
        fn = scores_by_label(samples, FALSE_NEGATIVE)
        tn = scores_by_label(samples, TRUE_NEGATIVE)
        assert len(fn) + len(tn) == len(samples)
        assert len(fn) == len(planted)
        assert len(tn) > 0

    def test_fn_scores_match_model(self, small_synthetic, mf_model):
        dataset, planted = small_synthetic
        samples = collect_scores(mf_model, dataset, planted_false_negatives=planted,
                                 tn_per_user=10, seed=0)
        fn_samples = [s for s in samples if s.label == FALSE_NEGATIVE]
        expected = [float(mf_model.score_all_items(u)[i]) for u, i in planted]
        assert sorted(s.score for s in fn_samples) == pytest.approx(sorted(expected))

    def test_test_items_fallback(self, small_synthetic, mf_model):
        dataset, _ = small_synthetic
        samples = collect_scores(mf_model, dataset, tn_per_user=20, seed=0)
        fn = scores_by_label(samples, FALSE_NEGATIVE)
        assert len(fn) == len(dataset.test)

    def test_deterministic(self, small_synthetic, mf_model):
        dataset, planted = small_synthetic
        a = collect_scores(mf_model, dataset, planted_false_negatives=planted, seed=4)
        b = collect_scores(mf_model, dataset, planted_false_negatives=planted, seed=4)
        assert a == b


class TestDeltaSweep:
    def test_columns(self):
        curve = PreferenceCurve(1, -1, 0.8)
        table = delta_curve_sweep(curve, (-4, 4), 33)
        assert table.shape == (33, 3)
        np.testing.assert_allclose(table[:, 1], delta_g(curve, table[:, 0]))
        np.testing.assert_allclose(table[:, 2] * curve.c, table[:, 1], rtol=1e-14)

    def test_too_few_steps(self):
        with pytest.raises(ValueError):
            delta_curve_sweep(PreferenceCurve(1, 0, 1), (-1, 1), 1)
