"""Experiment harness: configs, trace files, summaries, sweeps.

A single experiment = one method on one corpus for one or more seeds.  Every
run writes, under ``out_dir``:

    config.json                resolved configuration
    seed<k>/trace.csv          iteration,docs_seen,wallclock_s,test_log_perplexity[,test_elbo]
    seed<k>/model.txt          final parameters
    summary.csv                one row per seed (final numbers)
    aggregate.csv              median and 0.3/0.7 quantiles across seeds

Traces are append-and-flush so partial runs stay inspectable; with
``zero_wallclock`` the timing column is pinned to 0.0 so reruns of the same
config are byte-identical.
"""

from __future__ import annotations

import dataclasses
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .bayes import elbo_corpus, run_variant
from .corpus import (
    Corpus,
    SyntheticSpec,
    generate_synthetic,
    load_uci_bag_of_words,
    split_corpus,
)
from .evaluation import match_topics, perplexity, write_perplexity_csv
from .gibbs import GibbsEStep
from .hdp import (
    HdpBayesState,
    HdpFamily,
    HdpGibbsEStep,
    HdpParams,
    hdp_evaluate,
    run_hdp_vargibbs,
)
from .lda import LdaFamily, ModelParams, load_model_params, save_model_params
from .online_em import StepSchedule, run_online_em, stream_rng
from .variational import VariationalEStep

__all__ = [
    "METHODS",
    "ExperimentConfig",
    "init_point_params",
    "run_experiment",
    "run_sweep",
]

_TAG_INIT = 2

# method -> (engine, backend, boost, default kappa, default alpha handling)
METHODS = {
    "g-oem": ("em", "gibbs", False, 0.5, "fixed_point"),
    "g-oem++": ("em", "gibbs", True, 0.5, "fixed_point"),
    "v-oem": ("em", "variational", False, 0.5, "fixed_point"),
    "v-oem++": ("em", "variational", True, 0.5, "fixed_point"),
    "olda": ("bayes", "variational", False, 0.5, "gradient"),
    "svb": ("bayes", "variational", False, 1.0, "gradient"),
    "splda": ("bayes", "variational", True, 1.0, "fixed_point"),
    "sgs": ("bayes", "gibbs", False, 1.0, "frozen"),
    "vargibbs": ("bayes", "gibbs", False, 0.5, "frozen"),
    "hdp-g-oem": ("hdp", "gibbs", False, 0.5, None),
    "hdp-vargibbs": ("hdp", "gibbs", False, 0.5, None),
}

_INCREMENTAL_ONLY = ("svb", "splda", "sgs")


def init_point_params(n_topics: int, vocab_size: int, seed: int) -> ModelParams:
    """Shared starting point: Dirichlet(1) topic rows, alpha = 1."""
    rng = stream_rng(seed, _TAG_INIT)
    beta = rng.dirichlet(np.ones(vocab_size), size=n_topics)
    return ModelParams(beta, np.ones(n_topics))


@dataclass
class ExperimentConfig:
    """Fully describes one experiment; unset knobs resolve to method defaults."""

    method: str
    n_topics: int = 10
    kappa: Optional[float] = None
    offset: int = 0
    minibatch_size: int = 100
    local_iters: int = 20
    alpha_mode: Optional[str] = None
    alpha_value: Optional[float] = None
    alpha_from_run: Optional[str] = None
    averaging: bool = False
    seeds: tuple = (0,)
    # corpus: either file paths or a synthetic spec
    corpus_path: Optional[str] = None
    vocab_path: Optional[str] = None
    synthetic: Optional[SyntheticSpec] = None
    synthetic_seed: int = 0
    n_test: int = 100
    eval_every: int = 0
    n_particles: int = 25
    track_elbo: bool = False
    # Bayesian knobs
    prior_b: float = 0.01
    lambda_blend: str = "standard"
    gradient_lr: float = 1e-3
    gradient_steps: int = 10
    # unbounded-topics knobs
    hdp_b: float = 1.0
    hdp_alpha_conc: float = 1.0
    hdp_beta_floor: Optional[float] = None  # None -> 0.01 / vocab_size
    t_init: int = 2
    t_max: int = 200
    truncation: int = 50
    prior_eta: float = 0.01
    # bookkeeping
    out_dir: str = "runs/experiment"
    zero_wallclock: bool = False

    def resolve(self) -> "ExperimentConfig":
        """Fill method defaults and reject contradictory settings."""
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {sorted(METHODS)}")
        engine, backend, boost, default_kappa, default_alpha = METHODS[self.method]

        kappa = default_kappa if self.kappa is None else self.kappa
        if self.method in _INCREMENTAL_ONLY and (kappa != 1.0 or self.offset != 0):
            raise ValueError(f"{self.method} is defined only for kappa=1, offset=0")

        alpha_mode = default_alpha if self.alpha_mode is None else self.alpha_mode
        if engine == "hdp":
            if self.alpha_mode is not None:
                raise ValueError(f"{self.method} has no alpha mode")
            if self.averaging:
                raise ValueError(f"{self.method} does not support iterate averaging")
        elif self.method in ("sgs", "vargibbs"):
            if alpha_mode != "frozen":
                raise ValueError(f"{self.method} keeps alpha frozen")
        if self.averaging and engine == "bayes":
            raise ValueError("iterate averaging applies to the point-estimate methods only")
        if (self.corpus_path is None) == (self.synthetic is None):
            raise ValueError("give exactly one of corpus_path or synthetic")
        if self.alpha_value is not None and self.alpha_from_run is not None:
            raise ValueError("give at most one of alpha_value / alpha_from_run")
        if self.eval_every < 0 or self.n_test < 1 or self.n_particles < 1:
            raise ValueError("n_test, n_particles must be >= 1 and eval_every >= 0")
        return dataclasses.replace(self, kappa=kappa, alpha_mode=alpha_mode)


def _load_corpus(config: ExperimentConfig) -> Corpus:
    if config.corpus_path is not None:
        if config.vocab_path is None:
            raise ValueError("corpus_path requires vocab_path")
        return load_uci_bag_of_words(config.corpus_path, config.vocab_path)
    return generate_synthetic(config.synthetic, seed=config.synthetic_seed)[0]


def _frozen_alpha(config: ExperimentConfig, n_topics: int) -> Optional[np.ndarray]:
    if config.alpha_from_run is not None:
        prior = load_model_params(config.alpha_from_run)
        return np.full(n_topics, float(prior.alpha.mean()))
    if config.alpha_value is not None:
        return np.full(n_topics, float(config.alpha_value))
    return None


def _config_json(config: ExperimentConfig) -> str:
    def default(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if dataclasses.is_dataclass(o):
            return dataclasses.asdict(o)
        raise TypeError(f"not serializable: {type(o)}")

    return json.dumps(dataclasses.asdict(config), indent=2, sort_keys=True, default=default)


class _TraceWriter:
    """Append-and-flush eval rows; wallclock excludes evaluation time."""

    def __init__(self, path: Path, track_elbo: bool, zero_wallclock: bool):
        self.path = path
        self.track_elbo = track_elbo
        self.zero_wallclock = zero_wallclock
        header = "iteration,docs_seen,wallclock_s,test_log_perplexity"
        if track_elbo:
            header += ",test_elbo"
        self.path.write_text(header + "\n")
        self._t0 = time.perf_counter()
        self._eval_spent = 0.0
        self.rows = 0

    def training_seconds(self) -> float:
        return time.perf_counter() - self._t0 - self._eval_spent

    def write(self, iteration: int, docs_seen: int, log_perp: float, elbo=None):
        t_eval0 = time.perf_counter()
        wall = 0.0 if self.zero_wallclock else self.training_seconds()
        cells = [str(iteration), str(docs_seen), repr(float(wall)), repr(float(log_perp))]
        if self.track_elbo:
            cells.append(repr(float(elbo)))
        with self.path.open("a") as fh:
            fh.write(",".join(cells) + "\n")
            fh.flush()
        self.rows += 1
        self._eval_spent += time.perf_counter() - t_eval0

    def charge_eval(self, seconds: float):
        self._eval_spent += seconds


def _evaluate(params, test_corpus, config: ExperimentConfig, seed: int):
    """(mean log perplexity, optional mean test ELBO) for one checkpoint."""
    if isinstance(params, HdpParams):
        report = hdp_evaluate(test_corpus, params, config.n_particles, seed)
    else:
        report = perplexity(test_corpus, params, config.n_particles, seed)
    elbo = None
    if config.track_elbo:
        if isinstance(params, HdpParams):
            point = ModelParams(params.beta, params.b * params.pi / params.pi.sum())
        else:
            point = params
        elbo = elbo_corpus(test_corpus.documents, point, n_sweeps=config.local_iters)
    return report, elbo


def _run_single(config: ExperimentConfig, corpus: Corpus, seed: int, seed_dir: Path):
    """One (method, seed) run; returns the summary row dict."""
    train, test = split_corpus(corpus, config.n_test, seed=seed)
    v = corpus.vocab_size
    trace = _TraceWriter(seed_dir / "trace.csv", config.track_elbo, config.zero_wallclock)
    engine, backend, boost, _, _ = METHODS[config.method]
    schedule = StepSchedule(config.kappa, config.offset)
    n_batches = int(np.ceil(train.n_documents / config.minibatch_size))

    def is_eval_point(i):
        if i == n_batches:
            return True
        return config.eval_every > 0 and i % config.eval_every == 0

    def make_callback(pick_params):
        def cb(info):
            if not is_eval_point(info.minibatch_index):
                return
            t0 = time.perf_counter()
            params = pick_params(info)
            report, elbo = _evaluate(params, test, config, seed)
            trace.charge_eval(time.perf_counter() - t0)
            trace.write(info.minibatch_index, info.docs_seen,
                        report.mean_log_perplexity, elbo)
        return cb

    final_params = None
    if engine == "em":
        params = init_point_params(config.n_topics, v, seed)
        frozen = _frozen_alpha(config, config.n_topics)
        family = LdaFamily(params, alpha_mode=config.alpha_mode, alpha_value=frozen)
        estep = GibbsEStep() if backend == "gibbs" else VariationalEStep()
        pick = (lambda info: info.averaged_params) if config.averaging \
            else (lambda info: info.params)
        result = run_online_em(
            train.documents, family, estep, schedule,
            config.minibatch_size, config.local_iters, boost=boost,
            callback=make_callback(pick), base_seed=seed,
        )
        final_params = result.running_mean if config.averaging else result.last
        save_model_params(final_params, seed_dir / "model.txt")
    elif engine == "bayes":
        params = init_point_params(config.n_topics, v, seed)
        run = run_variant(
            config.method, train.documents, params, schedule,
            config.minibatch_size, config.local_iters,
            corpus_size=train.n_documents, base_seed=seed,
            prior_b=config.prior_b, lambda_blend=config.lambda_blend,
            alpha_value=_frozen_alpha(config, config.n_topics),
            gradient_lr=config.gradient_lr, gradient_steps=config.gradient_steps,
            callback=make_callback(lambda info: info.params),
        )
        final_params = run.trace.last
        save_model_params(final_params, seed_dir / "model.txt")
    else:  # unbounded topics
        if config.method == "hdp-g-oem":
            rng = stream_rng(seed, _TAG_INIT)
            beta = rng.dirichlet(np.ones(v), size=config.t_init)
            pibar = rng.beta(1.0, config.hdp_alpha_conc, size=config.t_init)
            pi = pibar * np.concatenate([[1.0], np.cumprod(1.0 - pibar[:-1])])
            hdp_params = HdpParams(beta, pi, config.hdp_b, config.hdp_alpha_conc)
            # Smoothing floor on beta rows: without it a word whose count mass
            # has fully decayed makes the new-topic outcome win by default and
            # the instantiated-topic count creeps upward forever.  The Bayesian
            # variant gets the same effect from its prior pseudocounts.
            floor = 0.01 / v if config.hdp_beta_floor is None else config.hdp_beta_floor
            family = HdpFamily(hdp_params, t_max=config.t_max, beta_floor=floor)
            result = run_online_em(
                train.documents, family, HdpGibbsEStep(t_max=config.t_max), schedule,
                config.minibatch_size, config.local_iters,
                callback=make_callback(lambda info: info.params), base_seed=seed,
            )
            final_params = result.last
        else:  # hdp-vargibbs
            rng = stream_rng(seed, _TAG_INIT)
            t = config.truncation
            state = HdpBayesState(
                rng.gamma(100.0, 0.01, size=(t, v)),
                np.ones(t), np.full(t, config.hdp_alpha_conc),
                config.hdp_b, config.hdp_alpha_conc, config.prior_eta,
                corpus_size=train.n_documents,
            )
            result = run_hdp_vargibbs(
                train.documents, state, schedule,
                config.minibatch_size, config.local_iters, base_seed=seed,
                callback=make_callback(lambda info: info.params),
            )
            final_params = result.last
        save_hdp_params(final_params, seed_dir / "model.txt")

    # final evaluation row is guaranteed by is_eval_point(n_batches); redo it
    # here only if the stream was empty
    if trace.rows == 0 and n_batches == 0:
        raise ValueError("training split is empty")
    report, elbo = _evaluate(final_params, test, config, seed)
    write_perplexity_csv(report, seed_dir / "test_log_liks.csv")

    row = {
        "method": config.method,
        "n_topics": getattr(final_params, "n_topics", config.n_topics),
        "kappa": config.kappa,
        "seed": seed,
        "final_log_perplexity": report.mean_log_perplexity,
    }
    if config.track_elbo:
        row["final_elbo"] = elbo
    if config.synthetic is not None and not isinstance(final_params, HdpParams):
        _, truth = generate_synthetic(config.synthetic, seed=config.synthetic_seed)
        assignment, kl = match_topics(truth.beta, final_params.beta)
        matched = np.flatnonzero(assignment >= 0)
        row["matched_topic_kl"] = float(kl[matched, assignment[matched]].mean())
    return row


def save_hdp_params(params: HdpParams, path):
    """Text dump mirroring save_model_params: header, beta rows, pi line."""
    header = {
        "n_topics": params.n_topics,
        "vocab_size": params.vocab_size,
        "b": params.b,
        "alpha_conc": params.alpha_conc,
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for row in params.beta:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")
        fh.write(" ".join(repr(float(x)) for x in params.pi) + "\n")


def load_hdp_params(path) -> HdpParams:
    with open(path) as fh:
        header = json.loads(fh.readline())
        beta = np.array(
            [fh.readline().split() for _ in range(header["n_topics"])], dtype=float
        )
        pi = np.array(fh.readline().split(), dtype=float)
    return HdpParams(beta, pi, header["b"], header["alpha_conc"])


def run_experiment(config: ExperimentConfig) -> dict:
    """Run all seeds of one experiment; returns the aggregate row."""
    config = config.resolve()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(_config_json(config) + "\n")
    corpus = _load_corpus(config)

    rows = []
    for seed in config.seeds:
        seed_dir = out / f"seed{seed}"
        seed_dir.mkdir(exist_ok=True)
        rows.append(_run_single(config, corpus, int(seed), seed_dir))

    keys = list(rows[0].keys())
    with (out / "summary.csv").open("w") as fh:
        fh.write(",".join(keys) + "\n")
        for row in rows:
            fh.write(",".join(_cell(row[k]) for k in keys) + "\n")

    finals = np.array([r["final_log_perplexity"] for r in rows], dtype=float)
    aggregate = {
        "method": config.method,
        "n_topics": config.n_topics,
        "kappa": config.kappa,
        "n_seeds": len(rows),
        "median_log_perplexity": float(np.median(finals)),
        "q30_log_perplexity": float(np.quantile(finals, 0.3)),
        "q70_log_perplexity": float(np.quantile(finals, 0.7)),
    }
    if config.track_elbo:
        elbos = np.array([r["final_elbo"] for r in rows], dtype=float)
        aggregate["median_elbo"] = float(np.median(elbos))
    with (out / "aggregate.csv").open("w") as fh:
        fh.write(",".join(aggregate.keys()) + "\n")
        fh.write(",".join(_cell(v) for v in aggregate.values()) + "\n")
    return aggregate


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _run_for_pool(config: ExperimentConfig):
    return run_experiment(config)


def run_sweep(configs, n_jobs: int = 1):
    """Run many experiments; failures are recorded, not raised."""
    outcomes = []
    if n_jobs <= 1:
        for cfg in configs:
            try:
                outcomes.append(("ok", cfg.out_dir, run_experiment(cfg)))
            except Exception as exc:  # keep sweeping
                outcomes.append(("error", cfg.out_dir, f"{type(exc).__name__}: {exc}"))
        return outcomes
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        futures = [(cfg, pool.submit(_run_for_pool, cfg)) for cfg in configs]
        for cfg, fut in futures:
            try:
                outcomes.append(("ok", cfg.out_dir, fut.result()))
            except Exception as exc:
                outcomes.append(("error", cfg.out_dir, f"{type(exc).__name__}: {exc}"))
    return outcomes
