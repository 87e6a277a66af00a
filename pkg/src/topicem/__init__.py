"""Streaming estimation for mixed-membership topic models.

The package fits latent Dirichlet topic models (and an unbounded stick-
breaking extension) from a single pass over a document stream by blending
per-minibatch sufficient statistics and re-solving the M-step in closed form.
Local steps come in collapsed-Gibbs and variational flavors; Bayesian
posterior-tracking variants share the same stream loop.
"""

from .corpus import (
    Corpus,
    Document,
    SyntheticSpec,
    filter_vocabulary,
    generate_synthetic,
    load_uci_bag_of_words,
    save_uci_bag_of_words,
    split_corpus,
)
from .online_em import (
    AveragedTrace,
    CheckpointInfo,
    ResumeState,
    StepSchedule,
    SuffStats,
    blend_stats,
    doc_rng,
    minibatch_estimate,
    run_online_em,
    step_size,
    stream_rng,
)
from .lda import (
    LdaFamily,
    ModelParams,
    alpha_fixed_point,
    alpha_gradient_ascent,
    alpha_objective,
    load_model_params,
    log_joint,
    m_step,
    save_model_params,
)
from .gibbs import GibbsEStep, GibbsResult, enumerate_posterior, gibbs_conditional, gibbs_estep
from .variational import (
    VariationalEStep,
    VariationalResult,
    VariationalState,
    elbo_document,
    variational_estep,
)
from .evaluation import (
    PerplexityReport,
    exact_loglik_quadrature,
    left_to_right,
    match_topics,
    perplexity,
    write_perplexity_csv,
    write_perplexity_summary,
)
from .bayes import (
    BAYES_VARIANTS,
    BayesGlobalState,
    VariantRun,
    elbo_corpus,
    expected_log_beta,
    lambda_update,
    run_variant,
)
from .hdp import (
    HdpBayesState,
    HdpFamily,
    HdpGibbsEStep,
    HdpParams,
    HdpSuffStats,
    hdp_evaluate,
    hdp_gibbs_estep,
    hdp_m_step,
    hdp_vargibbs_step,
    log_stirling_row,
    run_hdp_vargibbs,
    sample_table_count,
)
from .harness import ExperimentConfig, METHODS, run_experiment, run_sweep
from .estimators import BayesianOnlineLDA, OnlineHDP, OnlineLDA
from .special import inverse_digamma

__version__ = "0.1.0"

__all__ = [
    "AveragedTrace",
    "BAYES_VARIANTS",
    "BayesGlobalState",
    "BayesianOnlineLDA",
    "CheckpointInfo",
    "Corpus",
    "Document",
    "ExperimentConfig",
    "GibbsEStep",
    "GibbsResult",
    "HdpBayesState",
    "HdpFamily",
    "HdpGibbsEStep",
    "HdpParams",
    "HdpSuffStats",
    "LdaFamily",
    "METHODS",
    "ModelParams",
    "OnlineHDP",
    "OnlineLDA",
    "PerplexityReport",
    "ResumeState",
    "StepSchedule",
    "SuffStats",
    "SyntheticSpec",
    "VariantRun",
    "VariationalEStep",
    "VariationalResult",
    "VariationalState",
    "alpha_fixed_point",
    "alpha_gradient_ascent",
    "alpha_objective",
    "blend_stats",
    "doc_rng",
    "elbo_corpus",
    "elbo_document",
    "enumerate_posterior",
    "exact_loglik_quadrature",
    "expected_log_beta",
    "filter_vocabulary",
    "generate_synthetic",
    "gibbs_conditional",
    "gibbs_estep",
    "hdp_evaluate",
    "hdp_gibbs_estep",
    "hdp_m_step",
    "hdp_vargibbs_step",
    "inverse_digamma",
    "lambda_update",
    "left_to_right",
    "load_model_params",
    "load_uci_bag_of_words",
    "log_joint",
    "log_stirling_row",
    "m_step",
    "match_topics",
    "minibatch_estimate",
    "perplexity",
    "run_experiment",
    "run_hdp_vargibbs",
    "run_online_em",
    "run_sweep",
    "run_variant",
    "sample_table_count",
    "save_model_params",
    "save_uci_bag_of_words",
    "split_corpus",
    "step_size",
    "stream_rng",
    "variational_estep",
    "write_perplexity_csv",
    "write_perplexity_summary",
]
