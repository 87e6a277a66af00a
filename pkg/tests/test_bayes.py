import numpy as np
import pytest
from scipy.special import digamma

from topicem.bayes import (
    BayesGlobalState,
    elbo_corpus,
    expected_log_beta,
    lambda_update,
    run_variant,
)
from topicem.corpus import Document
from topicem.gibbs import GibbsEStep
from topicem.lda import LdaFamily, ModelParams
from topicem.online_em import StepSchedule, run_online_em
from topicem.variational import VariationalEStep

from conftest import random_doc, random_params


def doc_list(rng, n_docs, vocab_size, length=6):
    return [random_doc(rng, vocab_size, length) for _ in range(n_docs)]


class TestBayesGlobalState:
    def test_beta_hat_rows_normalized(self, rng):
        lam = rng.gamma(2.0, 1.0, size=(3, 7)) + 0.1
        state = BayesGlobalState(lam, 0.01, 100)
        assert np.allclose(state.beta_hat.sum(axis=1), 1.0, atol=1e-12)

    def test_rejects_nonpositive_lambda(self):
        with pytest.raises(ValueError):
            BayesGlobalState(np.array([[1.0, 0.0]]), 0.01, 10)

    def test_rejects_bad_prior(self):
        with pytest.raises(ValueError):
            BayesGlobalState(np.ones((2, 3)), 0.0, 10)


class TestExpectedLogBeta:
    def test_matches_digamma_rows(self, rng):
        lam = rng.gamma(3.0, 1.0, size=(2, 4)) + 0.2
        state = BayesGlobalState(lam, 0.01, 10)
        want = digamma(lam) - digamma(lam.sum(axis=1))[:, None]
        assert np.allclose(expected_log_beta(state), want, atol=1e-14)

    def test_large_lambda_approaches_log_mean(self, rng):
        rows = rng.dirichlet(np.ones(5), size=2)
        state = BayesGlobalState(1e7 * rows, 0.01, 10)
        assert np.allclose(expected_log_beta(state), np.log(rows), atol=1e-5)

    def test_surrogate_rows_sum_below_one(self, rng):
        # exp(E[log beta]) always undershoots the mean simplex row
        lam = rng.gamma(1.5, 1.0, size=(3, 6)) + 0.1
        state = BayesGlobalState(lam, 0.01, 10)
        sums = np.exp(expected_log_beta(state)).sum(axis=1)
        assert np.all(sums < 1.0)


class TestLambdaUpdate:
    def test_full_step_is_candidate(self):
        state = BayesGlobalState(np.full((2, 3), 5.0), 0.5, 40)
        s1 = np.array([[0.1, 0.2, 0.3], [0.0, 0.1, 0.0]])
        new = lambda_update(state, s1, rho=1.0)
        assert np.allclose(new.lam, 0.5 + 40 * s1)

    def test_zero_stats_collapse_to_prior(self):
        state = BayesGlobalState(np.full((2, 3), 5.0), 0.5, 40)
        new = lambda_update(state, np.zeros((2, 3)), rho=1.0)
        assert np.allclose(new.lam, 0.5)

    def test_partial_blend_midpoint(self):
        state = BayesGlobalState(np.full((1, 2), 2.0), 1.0, 10)
        new = lambda_update(state, np.full((1, 2), 0.5), rho=0.5)
        # candidate = 1 + 10*0.5 = 6; midpoint of (2, 6) = 4
        assert np.allclose(new.lam, 4.0)

    def test_reversed_blend_full_step_keeps_state(self):
        state = BayesGlobalState(np.full((2, 3), 5.0), 0.5, 40)
        new = lambda_update(state, np.ones((2, 3)), rho=1.0, blend="reversed")
        assert np.allclose(new.lam, state.lam)

    def test_unknown_blend_rejected(self):
        state = BayesGlobalState(np.ones((1, 2)), 0.5, 4)
        with pytest.raises(ValueError):
            lambda_update(state, np.ones((1, 2)), rho=0.5, blend="middle")

    def test_positivity_preserved(self, rng):
        state = BayesGlobalState(rng.gamma(1.0, 1.0, (3, 5)) + 1e-3, 0.01, 25)
        for rho in (0.1, 0.5, 1.0):
            new = lambda_update(state, rng.uniform(0.0, 0.2, (3, 5)), rho)
            assert np.all(new.lam > 0)


class TestRunVariant:
    def test_unknown_variant_rejected(self, rng):
        params = random_params(rng, 2, 5)
        with pytest.raises(ValueError):
            run_variant("collapsed", iter([]), params, StepSchedule(kappa=1.0), 1, 2, 4)

    @pytest.mark.parametrize("variant", ["svb", "splda", "sgs"])
    def test_incremental_variants_pin_schedule(self, rng, variant):
        params = random_params(rng, 2, 5)
        with pytest.raises(ValueError):
            run_variant(variant, iter([]), params, StepSchedule(kappa=0.5), 1, 2, 4)

    def test_splda_delegates_to_boosted_variational(self, rng):
        k, v = 3, 8
        params = random_params(rng, k, v)
        docs = doc_list(rng, 12, v)
        run = run_variant(
            "splda", iter(docs), params, StepSchedule(kappa=1.0),
            minibatch_size=4, local_iters=3, corpus_size=12, base_seed=5,
        )
        family = LdaFamily(params.copy(), alpha_mode="fixed_point")
        direct = run_online_em(
            iter(docs), family, VariationalEStep(), StepSchedule(kappa=1.0),
            minibatch_size=4, local_iters=3, boost=True, base_seed=5,
        )
        assert np.array_equal(run.trace.last.beta, direct.last.beta)
        assert np.array_equal(run.trace.last.alpha, direct.last.alpha)
        assert run.state is None

    def test_sgs_delegates_to_last_sample_gibbs(self, rng):
        k, v = 2, 6
        params = random_params(rng, k, v)
        docs = doc_list(rng, 8, v)
        run = run_variant(
            "sgs", iter(docs), params, StepSchedule(kappa=1.0),
            minibatch_size=2, local_iters=4, corpus_size=8, base_seed=3,
        )
        family = LdaFamily(params.copy(), alpha_mode="frozen", alpha_value=params.alpha)
        direct = run_online_em(
            iter(docs), family, GibbsEStep(mode="last_sample"), StepSchedule(kappa=1.0),
            minibatch_size=2, local_iters=4, base_seed=3,
        )
        assert np.array_equal(run.trace.last.beta, direct.last.beta)
        # frozen alpha never moves
        assert np.array_equal(run.trace.last.alpha, params.alpha)

    def test_olda_run_is_deterministic(self, rng):
        params = random_params(rng, 2, 6)
        docs = doc_list(rng, 10, 6)
        runs = [
            run_variant(
                "olda", iter(docs), params, StepSchedule(kappa=0.7),
                minibatch_size=5, local_iters=3, corpus_size=10, base_seed=11,
            )
            for _ in range(2)
        ]
        assert np.array_equal(runs[0].state.lam, runs[1].state.lam)
        assert np.array_equal(runs[0].trace.last.alpha, runs[1].trace.last.alpha)

    def test_svb_is_olda_with_incremental_schedule(self, rng):
        params = random_params(rng, 2, 6)
        docs = doc_list(rng, 9, 6)
        kwargs = dict(minibatch_size=3, local_iters=3, corpus_size=9, base_seed=2)
        svb = run_variant("svb", iter(docs), params, StepSchedule(kappa=1.0), **kwargs)
        olda = run_variant("olda", iter(docs), params, StepSchedule(kappa=1.0), **kwargs)
        assert np.array_equal(svb.state.lam, olda.state.lam)

    def test_vargibbs_freezes_alpha(self, rng):
        params = random_params(rng, 3, 6)
        docs = doc_list(rng, 6, 6)
        run = run_variant(
            "vargibbs", iter(docs), params, StepSchedule(kappa=0.6),
            minibatch_size=3, local_iters=5, corpus_size=6, base_seed=7,
        )
        assert np.array_equal(run.trace.last.alpha, params.alpha)
        assert np.allclose(run.trace.last.beta.sum(axis=1), 1.0, atol=1e-12)

    def test_olda_moves_alpha(self, rng):
        params = random_params(rng, 2, 6)
        docs = doc_list(rng, 12, 6)
        run = run_variant(
            "olda", iter(docs), params, StepSchedule(kappa=0.6),
            minibatch_size=4, local_iters=4, corpus_size=12, base_seed=1,
            gradient_lr=5e-2, gradient_steps=10,
        )
        assert not np.allclose(run.trace.last.alpha, params.alpha)
        assert np.all(run.trace.last.alpha > 0)

    def test_alpha_value_overrides_init(self, rng):
        params = random_params(rng, 2, 5)
        docs = doc_list(rng, 4, 5)
        run = run_variant(
            "vargibbs", iter(docs), params, StepSchedule(kappa=0.8),
            minibatch_size=2, local_iters=4, corpus_size=4, base_seed=0,
            alpha_value=np.array([0.9, 1.1]),
        )
        assert np.array_equal(run.trace.last.alpha, [0.9, 1.1])

    def test_init_lambda_respected(self, rng):
        params = random_params(rng, 2, 5)
        lam0 = np.full((2, 5), 3.0)
        run = run_variant(
            "olda", iter([]), params, StepSchedule(kappa=0.5),
            minibatch_size=2, local_iters=2, corpus_size=1, base_seed=0,
            init_lambda=lam0,
        )
        assert np.array_equal(run.state.lam, lam0)
        assert run.trace.count == 0

    def test_checkpoints_follow_minibatches(self, rng):
        params = random_params(rng, 2, 5)
        docs = doc_list(rng, 7, 5)
        seen = []
        run_variant(
            "olda", iter(docs), params, StepSchedule(kappa=0.5),
            minibatch_size=3, local_iters=2, corpus_size=7, base_seed=0,
            callback=lambda info: seen.append((info.minibatch_index, info.docs_seen)),
        )
        assert seen == [(1, 3), (2, 6), (3, 7)]


class TestElboCorpus:
    def test_single_topic_closed_form(self, rng):
        params = random_params(rng, 1, 6)
        docs = doc_list(rng, 5, 6, length=4)
        want = np.mean([np.log(params.beta[0, d.word_ids]).sum() for d in docs])
        got = elbo_corpus(docs, params, n_sweeps=2)
        assert got == pytest.approx(want, abs=1e-10)

    def test_monotone_in_sweeps(self, rng):
        params = random_params(rng, 3, 8)
        docs = doc_list(rng, 20, 8)
        vals = [elbo_corpus(docs, params, n_sweeps=s) for s in (1, 3, 10, 25)]
        assert np.all(np.diff(vals) >= -1e-8)

    def test_state_requires_alpha(self, rng):
        state = BayesGlobalState(np.ones((2, 4)), 0.01, 5)
        docs = doc_list(rng, 3, 4)
        with pytest.raises(ValueError):
            elbo_corpus(docs, state)

    def test_state_and_equivalent_params_differ_by_surrogate(self, rng):
        # the surrogate rows sum below one, so the state bound sits below the
        # point bound at beta_hat
        lam = rng.gamma(2.0, 2.0, size=(2, 5)) + 0.5
        state = BayesGlobalState(lam, 0.01, 5)
        alpha = np.array([0.8, 1.2])
        docs = doc_list(rng, 10, 5)
        b_state = elbo_corpus(docs, state, alpha=alpha, n_sweeps=15)
        b_point = elbo_corpus(docs, ModelParams(state.beta_hat, alpha), n_sweeps=15)
        assert b_state < b_point

    def test_empty_docs_rejected(self, rng):
        params = random_params(rng, 2, 4)
        with pytest.raises(ValueError):
            elbo_corpus([], params)

    def test_chunking_invariant(self, rng):
        params = random_params(rng, 2, 5)
        docs = doc_list(rng, 9, 5)
        a = elbo_corpus(docs, params, n_sweeps=6, chunk=2)
        b = elbo_corpus(docs, params, n_sweeps=6, chunk=100)
        assert a == pytest.approx(b, abs=1e-10)
