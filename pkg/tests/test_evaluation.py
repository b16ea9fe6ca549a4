import numpy as np
import pytest

from slerpshield.errors import InsufficientPairs
from slerpshield.evaluation import (
    SyntheticPopulation,
    accuracy_sweep,
    alpha_ablation,
    eer_from_scores,
    generate_population,
    revocability_check,
    revocability_study,
    sswl,
    unprotected_scores,
)
from slerpshield.evaluation import _linkability_from_scores
from slerpshield.protection import ProtectionParams
from slerpshield.templates import GroupLayout, group_normalize


class TestGeneratePopulation:
    def test_zero_intra_angle_collapses_to_center(self):
        cfg = SyntheticPopulation(3, 4, 32, 0.0, seed=1, m=2)
        pop = generate_population(cfg)
        for i in range(3):
            for j in range(1, 4):
                np.testing.assert_array_equal(pop.values[i, j], pop.values[i, 0])

    def test_mean_genuine_angle_hits_target(self, standard_pop):
        # 50 identities, d=784, target 25 degrees: measured mean within 10%.
        assert abs(np.degrees(standard_pop.mean_genuine_angle) - 25.0) <= 2.5

    def test_measured_post_hoc_on_samples(self, standard_pop):
        angles = []
        for i in range(standard_pop.n_identities):
            for a in range(standard_pop.n_samples):
                for b in range(a + 1, standard_pop.n_samples):
                    cos = np.dot(standard_pop.values[i, a], standard_pop.values[i, b]) / 49
                    angles.append(np.degrees(np.arccos(np.clip(cos, -1, 1))))
        assert 22.5 <= np.mean(angles) <= 27.5

    def test_centers_near_orthogonal_in_high_dimension(self):
        # 1000 center pairs at d=784: spherical concentration keeps every
        # pair far from collinear.
        rng = np.random.default_rng(7)
        centers = rng.standard_normal((2000, 784))
        centers /= np.linalg.norm(centers, axis=1)[:, None]
        cos = np.einsum("id,id->i", centers[:1000], centers[1000:])
        angles = np.degrees(np.arccos(np.clip(cos, -1, 1)))
        assert angles.min() > 60.0

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SyntheticPopulation(1, 4, 32, 0.1)
        with pytest.raises(ValueError):
            SyntheticPopulation(5, 4, 32, np.pi / 2)


class TestAccuracySweep:
    def test_identity_params_match_unprotected_roc(self, small_pop):
        params = ProtectionParams(0.0, 0.0, small_pop.layout)
        sweep = accuracy_sweep(small_pop, params, seed=5)
        g0, i0 = unprotected_scores(small_pop, seed=5)
        thresholds = sweep.thresholds
        tpr0 = np.mean(g0[:, None] >= thresholds[None, :], axis=0)
        fpr0 = np.mean(i0[:, None] >= thresholds[None, :], axis=0)
        np.testing.assert_allclose(sweep.tpr, tpr0, atol=1e-9)
        np.testing.assert_allclose(sweep.fpr, fpr0, atol=1e-9)

    def test_roc_is_monotone(self, small_pop, small_params):
        # Along ascending thresholds both rates fall, so TPR never decreases
        # as FPR grows along the curve.
        sweep = accuracy_sweep(small_pop, small_params, seed=6, impostors_per_query=5)
        assert np.all(np.diff(sweep.tpr) <= 1e-12)
        assert np.all(np.diff(sweep.fpr) <= 1e-12)

    def test_protected_eer_close_to_unprotected(self, small_pop, small_params):
        sweep = accuracy_sweep(small_pop, small_params, seed=7, impostors_per_query=5)
        g0, i0 = unprotected_scores(small_pop, impostors_per_query=5, seed=7)
        eer0, _ = eer_from_scores(g0, i0)
        assert abs(sweep.eer - eer0) <= 0.03

    def test_heavy_rotation_still_collapses_gap(self, small_pop):
        # Near the alpha bound scores bunch together: the genuine-impostor
        # separation drops below 1e-3 even though clean synthetic margins
        # keep the ordering itself intact.
        params = ProtectionParams(0.999, 0.5, small_pop.layout)
        sweep = accuracy_sweep(small_pop, params, seed=8, impostors_per_query=5)
        gap = sweep.genuine_scores.mean() - sweep.impostor_scores.mean()
        assert gap < 1e-3


class TestAlphaAblation:
    def test_alpha_zero_matches_unprotected_gap(self, small_pop):
        params = ProtectionParams(0.0, 0.0, small_pop.layout)
        rows = alpha_ablation(
            small_pop, [0.0], params, seed=9, impostors_per_query=small_pop.n_identities
        )
        g0, i0 = unprotected_scores(small_pop, seed=9)
        # Full impostor sets make the pair selection identical, so the means
        # agree to numerical precision.
        assert rows[0].mean_genuine == pytest.approx(float(g0.mean()), abs=1e-9)
        assert rows[0].mean_impostor == pytest.approx(float(i0.mean()), abs=1e-9)

    def test_gap_strictly_decreasing(self, small_pop, small_params):
        rows = alpha_ablation(
            small_pop, [0.0, 0.25, 0.5, 0.75, 0.9, 0.99], small_params, seed=10
        )
        gaps = [r.gap for r in rows]
        assert all(gaps[i] > gaps[i + 1] for i in range(len(gaps) - 1))

    def test_operating_point_retains_margin(self, small_pop, small_params):
        rows = alpha_ablation(small_pop, [0.9, 0.99], small_params, seed=11)
        assert rows[0].gap >= 5.0 * rows[1].gap


class TestSswl:
    def test_identical_distributions_score_zero(self):
        rng = np.random.default_rng(12)
        scores = rng.uniform(-0.5, 0.5, size=2000)
        report = _linkability_from_scores(scores, scores.copy(), 100, "unprotected")
        assert report.d_sys == pytest.approx(0.0, abs=1e-12)

    def test_unprotected_population_is_linkable(self, small_pop, small_params):
        report = sswl(small_pop, small_params, "unprotected", n_pairs=600, seed=13)
        assert report.d_sys > 0.8

    def test_protected_population_is_unlinkable(self, small_pop, small_params):
        report = sswl(small_pop, small_params, "protected", n_pairs=600, seed=13)
        assert report.d_sys < 0.1

    def test_bin_count_stability(self, standard_pop, standard_params):
        # Needs the standard population: histogram refinement is only stable
        # once each occupied bin holds enough pairs.
        for protocol in ("unprotected", "protected"):
            r100 = sswl(standard_pop, standard_params, protocol, n_pairs=1000, bins=100, seed=14)
            r200 = sswl(standard_pop, standard_params, protocol, n_pairs=1000, bins=200, seed=14)
            assert abs(r100.d_sys - r200.d_sys) <= 0.02

    def test_mated_pair_order_is_irrelevant(self):
        # The pair score is a symmetric function, so relabeling which
        # protection comes first cannot change the histograms.
        rng = np.random.default_rng(15)
        mated = rng.uniform(-1, 1, 800)
        nonmated = rng.uniform(-1, 1, 800)
        a = _linkability_from_scores(mated, nonmated, 100, "protected")
        b = _linkability_from_scores(mated[::-1].copy(), nonmated, 100, "protected")
        assert a.d_sys == b.d_sys

    def test_insufficient_pairs_rejected(self, small_pop, small_params):
        with pytest.raises(InsufficientPairs):
            sswl(small_pop, small_params, "protected", n_pairs=200)

    def test_unknown_protocol_rejected(self, small_pop, small_params):
        with pytest.raises(ValueError):
            sswl(small_pop, small_params, "plaintext")

    def test_histogram_fields(self, small_pop, small_params):
        report = sswl(small_pop, small_params, "protected", n_pairs=600, seed=16)
        assert report.mated_hist.shape == (100,)
        assert report.nonmated_hist.shape == (100,)
        assert report.mated_hist.sum() == 600
        assert 0.0 <= report.d_sys <= 1.0


class TestRevocability:
    def test_same_seed_reproduces_record(self, small_params):
        layout = small_params.layout
        t = group_normalize(np.random.default_rng(17).standard_normal(64), layout)
        rep = revocability_check(t, small_params, (42, 42))
        assert rep.renewed_identical
        assert rep.direct_score == pytest.approx(1.0, abs=1e-9)

    def test_distinct_seeds_decorrelate_records(self, small_params):
        layout = small_params.layout
        t = group_normalize(np.random.default_rng(18).standard_normal(64), layout)
        rep = revocability_check(t, small_params, (1, 2))
        assert not rep.renewed_identical
        assert rep.direct_score < 0.5

    def test_genuine_queries_survive_renewal(self, standard_pop, standard_params):
        study = revocability_study(standard_pop, standard_params, n_templates=100, seed=19)
        assert study.genuine_accept_rate >= 0.95
        assert study.direct_scores.size == 100
        assert study.impostor_scores.size == 100
        # Old credentials stay far below the verification threshold.
        assert study.direct_scores.mean() < 0.5 < study.threshold
