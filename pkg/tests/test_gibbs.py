import itertools

import numpy as np
import pytest
from scipy.special import digamma, gammaln

from topicem.corpus import Document
from topicem.gibbs import (
    GibbsState,
    enumerate_posterior,
    gibbs_conditional,
    gibbs_estep,
    window_start,
)
from topicem.lda import ModelParams

from conftest import random_doc, random_params


def collapsed_log_joint(z, word_ids, params):
    """log p(X, z | beta, alpha) with theta integrated out (reference form)."""
    alpha = params.alpha
    counts = np.bincount(z, minlength=params.n_topics)
    log_prior = (gammaln(alpha.sum()) - gammaln(alpha.sum() + len(z))
                 + np.sum(gammaln(alpha + counts) - gammaln(alpha)))
    log_lik = np.sum(np.log(params.beta[z, word_ids]))
    return log_prior + log_lik


class TestWindowStart:
    def test_last_quarter_for_twenty(self):
        assert window_start(20) == 15
        assert list(range(window_start(20), 20)) == [15, 16, 17, 18, 19]

    def test_minimum_window(self):
        assert window_start(4) == 3


class TestGibbsConditional:
    def test_frozen_two_token_instance(self):
        """Token 2 with the other token on topic 1: weights (1+1)/3 vs (0+1)/3
        scaled by equal beta entries -> (2/3, 1/3)."""
        beta = np.array([[0.5, 0.5], [0.5, 0.5]])
        params = ModelParams(beta, np.array([1.0, 1.0]))
        doc = Document(np.array([0, 1]))
        state = GibbsState(z=np.array([0, 0]), counts=np.array([2, 0]))
        p = gibbs_conditional(state, 1, doc, params)
        assert np.allclose(p, [2.0 / 3.0, 1.0 / 3.0], atol=1e-12)

    def test_single_token_no_evidence(self):
        beta = np.array([[0.25, 0.75], [0.25, 0.75]])
        params = ModelParams(beta, np.array([0.7, 0.7]))
        doc = Document(np.array([1]))
        state = GibbsState(z=np.array([0]), counts=np.array([1, 0]))
        p = gibbs_conditional(state, 0, doc, params)
        assert np.allclose(p, 0.5, atol=1e-12)

    def test_matches_joint_ratio_oracle(self, rng):
        """p(z_n = k | z_-n, X) computed from collapsed joints directly."""
        for _ in range(30):
            k, v, n = 2, 4, 3
            params = random_params(rng, k, v)
            doc = random_doc(rng, v, n)
            z = rng.integers(0, k, size=n)
            state = GibbsState(z=z.copy(), counts=np.bincount(z, minlength=k))
            site = int(rng.integers(0, n))
            logs = []
            for cand in range(k):
                z2 = z.copy()
                z2[site] = cand
                logs.append(collapsed_log_joint(z2, doc.word_ids, params))
            logs = np.array(logs)
            oracle = np.exp(logs - logs.max())
            oracle /= oracle.sum()
            p = gibbs_conditional(state, site, doc, params)
            assert np.allclose(p, oracle, atol=1e-12)

    def test_normalized_and_nonnegative(self, rng):
        for _ in range(50):
            k = int(rng.integers(2, 5))
            params = random_params(rng, k, 6)
            doc = random_doc(rng, 6, 5)
            z = rng.integers(0, k, size=5)
            state = GibbsState(z=z, counts=np.bincount(z, minlength=k))
            p = gibbs_conditional(state, 2, doc, params)
            assert abs(p.sum() - 1.0) <= 1e-12
            assert np.all(p >= 0)

    def test_dead_word_column_rejected(self):
        beta = np.array([[1.0, 0.0], [1.0, 0.0]])
        params = ModelParams(beta, np.array([1.0, 1.0]))
        doc = Document(np.array([1, 0]))
        state = GibbsState(z=np.array([0, 1]), counts=np.array([1, 1]))
        with pytest.raises(ValueError):
            gibbs_conditional(state, 0, doc, params)


class TestEnumeratePosterior:
    def test_single_topic(self, rng):
        params = random_params(rng, 1, 5)
        res = enumerate_posterior(Document(np.array([0, 3, 3])), params)
        assert np.allclose(res.marginals, 1.0)

    def test_one_word_closed_form(self, rng):
        params = random_params(rng, 2, 5)
        doc = Document(np.array([2]))
        res = enumerate_posterior(doc, params)
        w = params.beta[:, 2] * params.alpha
        assert np.allclose(res.marginals[0], w / w.sum(), atol=1e-12)

    def test_log_evidence_matches_direct_sum(self, rng):
        params = random_params(rng, 2, 4)
        doc = Document(np.array([0, 1, 3]))
        res = enumerate_posterior(doc, params)
        total = -np.inf
        for z in itertools.product(range(2), repeat=3):
            total = np.logaddexp(total,
                                 collapsed_log_joint(np.array(z), doc.word_ids, params))
        assert res.log_evidence == pytest.approx(total, abs=1e-10)

    def test_stats_row_sum_equals_doc_length(self, rng):
        params = random_params(rng, 3, 5)
        doc = random_doc(rng, 5, 4)
        res = enumerate_posterior(doc, params)
        assert res.stats.s1.sum() == pytest.approx(len(doc.word_ids), abs=1e-10)

    def test_state_space_cap(self, rng):
        params = random_params(rng, 3, 5)
        with pytest.raises(ValueError):
            enumerate_posterior(random_doc(rng, 5, 30), params, max_states=1000)


class TestGibbsEstep:
    def test_single_topic_degeneracy(self, rng):
        params = random_params(rng, 1, 6)
        doc = Document(np.array([1, 1, 4]))
        res = gibbs_estep(doc, params, n_sweeps=8, seed=0)
        assert np.allclose(res.marginals, 1.0)
        counts = np.bincount(doc.word_ids, minlength=6).astype(float)
        assert np.allclose(res.stats.s1[0], counts)
        assert res.stats.s2[0] == pytest.approx(0.0, abs=1e-12)

    def test_deterministic_per_seed(self, rng):
        params = random_params(rng, 3, 6)
        doc = random_doc(rng, 6, 7)
        a = gibbs_estep(doc, params, n_sweeps=12, seed=9)
        b = gibbs_estep(doc, params, n_sweeps=12, seed=9)
        assert np.array_equal(a.marginals, b.marginals)
        assert np.array_equal(a.stats.s1, b.stats.s1)
        c = gibbs_estep(doc, params, n_sweeps=12, seed=10)
        assert not np.array_equal(a.marginals, c.marginals)

    def test_requires_four_sweeps(self, rng):
        params = random_params(rng, 2, 4)
        with pytest.raises(ValueError):
            gibbs_estep(random_doc(rng, 4, 3), params, n_sweeps=3, seed=0)

    def test_empty_document_rejected(self, rng):
        params = random_params(rng, 2, 4)
        with pytest.raises(ValueError):
            gibbs_estep(Document(np.array([], dtype=int)), params, n_sweeps=8, seed=0)

    def test_marginals_rows_normalized(self, rng):
        params = random_params(rng, 3, 6)
        res = gibbs_estep(random_doc(rng, 6, 5), params, n_sweeps=8, seed=1)
        assert np.allclose(res.marginals.sum(axis=1), 1.0, atol=1e-12)

    def test_s1_total_is_doc_length(self, rng):
        params = random_params(rng, 3, 6)
        doc = random_doc(rng, 6, 9)
        res = gibbs_estep(doc, params, n_sweeps=8, seed=2)
        assert res.stats.s1.sum() == pytest.approx(9.0, abs=1e-10)

    def test_marginals_match_enumeration(self, rng):
        """Long-run RB marginals vs the exact oracle on a small instance."""
        params = random_params(rng, 3, 5)
        doc = Document(np.array([0, 2, 2, 4]))
        exact = enumerate_posterior(doc, params).marginals
        res = gibbs_estep(doc, params, n_sweeps=2000, seed=3)
        assert np.max(np.abs(res.marginals - exact)) <= 0.02

    def test_s2_matches_enumeration(self, rng):
        params = random_params(rng, 2, 5)
        doc = Document(np.array([1, 3, 3]))
        exact = enumerate_posterior(doc, params).stats.s2
        res = gibbs_estep(doc, params, n_sweeps=4000, seed=4)
        assert np.max(np.abs(res.stats.s2 - exact)) <= 0.05

    def test_last_sample_mode_counts(self, rng):
        params = random_params(rng, 2, 5)
        doc = random_doc(rng, 5, 6)
        res = gibbs_estep(doc, params, n_sweeps=8, seed=5, mode="last_sample")
        # marginal rows are one-hot indicators of the final sample
        assert set(np.unique(res.marginals)) <= {0.0, 1.0}
        assert np.allclose(res.marginals.sum(axis=1), 1.0)
        assert res.stats.s1.sum() == pytest.approx(6.0)
