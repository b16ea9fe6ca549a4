import numpy as np
import pytest

from slerpshield.errors import EmptyStore, LayoutMismatch
from slerpshield.matching import FAILED_SCORE, EnrollmentRecord, identify, verify
from slerpshield.protection import KeyTemplate, ProtectionParams, protect
from slerpshield.templates import (
    GroupLayout,
    Template,
    group_normalize,
    groupwise_similarity,
)

from conftest import random_unit


def enroll(t, params, seed):
    protected, key = protect(t, params, rng_seed=seed)
    return EnrollmentRecord(f"id{seed}", protected, key)


def unit_at_angle(base, phi, rng):
    """Unit vector at angle phi from base (before group renormalization)."""
    w = rng.standard_normal(base.size)
    w -= np.dot(w, base) * base
    w /= np.linalg.norm(w)
    return np.cos(phi) * base + np.sin(phi) * w


class TestVerify:
    def test_enrolled_template_scores_one(self, small_params):
        layout = small_params.layout
        t = group_normalize(np.random.default_rng(1).standard_normal(64), layout)
        rec = enroll(t, small_params, 2)
        res = verify(t, rec, 0.5, small_params)
        assert res.score == pytest.approx(1.0, abs=1e-6)
        assert res.accepted
        assert res.error is None

    def test_threshold_minus_one_accepts(self, small_params):
        layout = small_params.layout
        rng = np.random.default_rng(3)
        t = group_normalize(rng.standard_normal(64), layout)
        rec = enroll(t, small_params, 4)
        stranger = group_normalize(rng.standard_normal(64), layout)
        assert verify(stranger, rec, -1.0, small_params).accepted

    def test_fails_closed_on_degenerate_query(self, small_params):
        layout = small_params.layout
        t = group_normalize(np.random.default_rng(5).standard_normal(64), layout)
        rec = enroll(t, small_params, 6)
        # Querying with the record's own key is parallel in every group.
        res = verify(Template(rec.key.values, layout), rec, -1.0, small_params)
        assert res.score == FAILED_SCORE
        assert not res.accepted
        assert res.error is not None

    def test_layout_mismatch_rejected(self, small_params):
        other = group_normalize(
            np.random.default_rng(7).standard_normal(64), GroupLayout(64, 2)
        )
        t = group_normalize(
            np.random.default_rng(8).standard_normal(64), small_params.layout
        )
        rec = enroll(t, small_params, 9)
        with pytest.raises(LayoutMismatch):
            verify(other, rec, 0.0, small_params)

    def test_genuine_beats_impostor(self, small_params):
        # Queries at 25 degrees (same identity) vs 80 degrees (stranger)
        # from the enrolled template, pushed through the full transform.
        layout = small_params.layout
        rng = np.random.default_rng(10)
        wins = 0
        trials = 1000
        for n in range(trials):
            base = random_unit(rng, layout.d)
            enrolled = group_normalize(base, layout)
            rec = enroll(enrolled, small_params, 10_000 + n)
            genuine = group_normalize(unit_at_angle(base, np.radians(25), rng), layout)
            impostor = group_normalize(unit_at_angle(base, np.radians(80), rng), layout)
            g = verify(genuine, rec, -1.0, small_params).score
            i = verify(impostor, rec, -1.0, small_params).score
            wins += int(g > i)
        assert wins / trials >= 0.99


class TestIdentify:
    def test_singleton_store_equals_verify(self, small_params):
        layout = small_params.layout
        rng = np.random.default_rng(20)
        t = group_normalize(rng.standard_normal(64), layout)
        rec = enroll(t, small_params, 21)
        query = group_normalize(rng.standard_normal(64), layout)
        single = verify(query, rec, 0.0, small_params)
        ranked = identify(query, [rec], small_params, 0.0)
        assert len(ranked) == 1
        assert ranked[0] == single

    def test_empty_store_rejected(self, small_params):
        t = group_normalize(
            np.random.default_rng(22).standard_normal(64), small_params.layout
        )
        with pytest.raises(EmptyStore):
            identify(t, [], small_params)

    def test_self_match_ranks_first_in_100_record_store(self, small_params):
        layout = small_params.layout
        rng = np.random.default_rng(23)
        templates = [group_normalize(rng.standard_normal(64), layout) for _ in range(100)]
        records = [enroll(t, small_params, 300 + n) for n, t in enumerate(templates)]
        for probe in (0, 17, 99):
            ranked = identify(templates[probe], records, small_params)
            assert ranked[0].identity_label == records[probe].identity_label
            assert ranked[0].score == pytest.approx(1.0, abs=1e-6)

    def test_results_are_permutation_of_verify(self, small_params):
        layout = small_params.layout
        rng = np.random.default_rng(24)
        records = [
            enroll(group_normalize(rng.standard_normal(64), layout), small_params, 400 + n)
            for n in range(10)
        ]
        query = group_normalize(rng.standard_normal(64), layout)
        ranked = identify(query, records, small_params, 0.0)
        direct = [verify(query, rec, 0.0, small_params) for rec in records]
        assert sorted(r.score for r in ranked) == sorted(r.score for r in direct)
        scores = [r.score for r in ranked]
        assert scores == sorted(scores, reverse=True)

    def test_deterministic_ranking(self, small_params):
        layout = small_params.layout
        rng = np.random.default_rng(25)
        records = [
            enroll(group_normalize(rng.standard_normal(64), layout), small_params, 500 + n)
            for n in range(20)
        ]
        query = group_normalize(rng.standard_normal(64), layout)
        first = identify(query, records, small_params)
        second = identify(query, records, small_params)
        assert [(r.identity_label, r.score) for r in first] == [
            (r.identity_label, r.score) for r in second
        ]

    def test_rank1_accuracy_tracks_unprotected(self, standard_pop):
        # Paired identification runs on the 50-identity store at alpha=0.9
        # and alpha=0 (the unprotected pipeline); rank-1 rates must agree
        # within 2 points.
        layout = standard_pop.layout
        rates = {}
        for alpha in (0.9, 0.0):
            params = ProtectionParams(alpha, 0.5 if alpha else 0.0, layout)
            records = [
                enroll(standard_pop.template(i, 0), params, 600 + i)
                for i in range(standard_pop.n_identities)
            ]
            hits = total = 0
            for i in range(standard_pop.n_identities):
                for j in range(1, standard_pop.n_samples):
                    ranked = identify(standard_pop.template(i, j), records, params)
                    hits += int(ranked[0].identity_label == records[i].identity_label)
                    total += 1
            rates[alpha] = hits / total
        assert abs(rates[0.9] - rates[0.0]) <= 0.02


class TestOrderPreservation:
    def test_protected_scores_preserve_clear_margins(self, small_params):
        # Triples with a raw-score margin > 0.2 keep their order through the
        # transform in at least 98% of cases.
        layout = small_params.layout
        rng = np.random.default_rng(30)
        kept = 0
        preserved = 0
        while kept < 1000:
            base = random_unit(rng, layout.d)
            t_q = group_normalize(base, layout)
            t_pos = group_normalize(unit_at_angle(base, np.radians(25), rng), layout)
            t_neg = group_normalize(unit_at_angle(base, np.radians(80), rng), layout)
            raw_pos = groupwise_similarity(t_q, t_pos)
            raw_neg = groupwise_similarity(t_q, t_neg)
            if raw_pos <= raw_neg + 0.2:
                continue
            kept += 1
            rec_pos = enroll(t_pos, small_params, 20_000 + kept)
            rec_neg = enroll(t_neg, small_params, 40_000 + kept)
            s_pos = verify(t_q, rec_pos, -1.0, small_params).score
            s_neg = verify(t_q, rec_neg, -1.0, small_params).score
            preserved += int(s_pos > s_neg)
        assert preserved / 1000 >= 0.98
