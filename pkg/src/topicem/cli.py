"""Command-line entry points: ``topicem train`` and ``topicem sweep``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .corpus import SyntheticSpec
from .harness import METHODS, ExperimentConfig, run_experiment, run_sweep

__all__ = ["main", "parse_synthetic"]

_SYNTH_KEYS = {
    "k": "n_topics",
    "v": "vocab_size",
    "d": "n_documents",
    "len": "mean_length",
    "alpha": "alpha",
    "conc": "topic_concentration",
}


def parse_synthetic(text: str) -> SyntheticSpec:
    """Parse "k=5,v=100,d=20000,len=40[,alpha=0.5][,conc=0.1]"."""
    kwargs = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ValueError(f"bad synthetic clause {part!r} (expected key=value)")
        key, value = part.split("=", 1)
        if key not in _SYNTH_KEYS:
            raise ValueError(f"unknown synthetic key {key!r} (expected {sorted(_SYNTH_KEYS)})")
        kwargs[_SYNTH_KEYS[key]] = float(value)
    for req in ("n_topics", "vocab_size", "n_documents", "mean_length"):
        if req not in kwargs:
            raise ValueError(f"synthetic spec is missing {req}")
    for int_key in ("n_topics", "vocab_size", "n_documents"):
        kwargs[int_key] = int(kwargs[int_key])
    return SyntheticSpec(**kwargs)


def _add_train_flags(p: argparse.ArgumentParser):
    """All flags default to None so a config file can fill the gaps."""
    p.add_argument("--method", choices=sorted(METHODS), help="inference method")
    p.add_argument("--k", type=int, help="number of topics (initial count for hdp-*)")
    p.add_argument("--kappa", type=float, help="step-size decay in (0, 1]")
    p.add_argument("--offset", type=int, help="step-size schedule offset")
    p.add_argument("--minibatch", type=int, help="documents per update")
    p.add_argument("--local-iters", type=int, help="local sweeps per document")
    p.add_argument("--alpha-mode", choices=["fixed_point", "gradient", "frozen"])
    p.add_argument("--alpha-value", type=float, help="symmetric frozen alpha")
    p.add_argument("--alpha-from-run", metavar="MODEL_TXT",
                   help="freeze alpha at the mean alpha of a saved model")
    p.add_argument("--averaging", choices=["on", "off"], help="report averaged iterates")
    p.add_argument("--seed", type=int, nargs="+", help="one run per seed")
    p.add_argument("--corpus", help="bag-of-words count file")
    p.add_argument("--vocab", help="vocabulary file (one word per line)")
    p.add_argument("--synthetic", metavar="SPEC",
                   help='e.g. "k=5,v=100,d=20000,len=40,alpha=0.5"')
    p.add_argument("--synthetic-seed", type=int)
    p.add_argument("--n-test", type=int, help="held-out document count")
    p.add_argument("--eval-every", type=int,
                   help="evaluate every N minibatches (0: final only)")
    p.add_argument("--particles", type=int, help="held-out estimator particles")
    p.add_argument("--track-elbo", choices=["on", "off"])
    p.add_argument("--prior-b", type=float, help="topic-row prior for the Bayesian variants")
    p.add_argument("--lambda-blend", choices=["standard", "reversed"])
    p.add_argument("--gradient-lr", type=float)
    p.add_argument("--gradient-steps", type=int)
    p.add_argument("--hdp-b", type=float, help="document-level concentration")
    p.add_argument("--hdp-alpha-conc", type=float, help="stick prior concentration")
    p.add_argument("--hdp-beta-floor", type=float,
                   help="smoothing floor on topic rows (default 0.01/V)")
    p.add_argument("--t-max", type=int, help="topic growth cap")
    p.add_argument("--truncation", type=int, help="hdp-vargibbs truncation level")
    p.add_argument("--prior-eta", type=float, help="hdp-vargibbs topic-row prior")
    p.add_argument("--out", help="output directory")
    p.add_argument("--zero-wallclock", choices=["on", "off"],
                   help="write 0.0 wallclock so reruns are byte-identical")
    p.add_argument("--config", metavar="JSON",
                   help="config file; explicit flags override its values")


_FLAG_TO_FIELD = {
    "method": "method",
    "k": "n_topics",
    "kappa": "kappa",
    "offset": "offset",
    "minibatch": "minibatch_size",
    "local_iters": "local_iters",
    "alpha_mode": "alpha_mode",
    "alpha_value": "alpha_value",
    "alpha_from_run": "alpha_from_run",
    "averaging": "averaging",
    "seed": "seeds",
    "corpus": "corpus_path",
    "vocab": "vocab_path",
    "synthetic": "synthetic",
    "synthetic_seed": "synthetic_seed",
    "n_test": "n_test",
    "eval_every": "eval_every",
    "particles": "n_particles",
    "track_elbo": "track_elbo",
    "prior_b": "prior_b",
    "lambda_blend": "lambda_blend",
    "gradient_lr": "gradient_lr",
    "gradient_steps": "gradient_steps",
    "hdp_b": "hdp_b",
    "hdp_alpha_conc": "hdp_alpha_conc",
    "hdp_beta_floor": "hdp_beta_floor",
    "t_max": "t_max",
    "truncation": "truncation",
    "prior_eta": "prior_eta",
    "out": "out_dir",
    "zero_wallclock": "zero_wallclock",
}

_ON_OFF = ("averaging", "track_elbo", "zero_wallclock")


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build an ExperimentConfig from JSON-style keys."""
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys {sorted(unknown)}")
    raw = dict(raw)
    if isinstance(raw.get("synthetic"), dict):
        raw["synthetic"] = SyntheticSpec(**raw["synthetic"])
    elif isinstance(raw.get("synthetic"), str):
        raw["synthetic"] = parse_synthetic(raw["synthetic"])
    if "seeds" in raw:
        raw["seeds"] = tuple(int(s) for s in raw["seeds"])
    return ExperimentConfig(**raw)


def _train_config(args) -> ExperimentConfig:
    raw = {}
    if args.config:
        with open(args.config) as fh:
            raw.update(json.load(fh))
    for flag, field_name in _FLAG_TO_FIELD.items():
        value = getattr(args, flag)
        if value is None:
            continue
        if flag in _ON_OFF:
            value = value == "on"
        elif flag == "synthetic":
            value = parse_synthetic(value)
        elif flag == "seed":
            value = tuple(value)
        raw[field_name] = value
    if "method" not in raw:
        raise SystemExit("error: --method is required (flag or config file)")
    if str(raw["method"]).startswith("hdp") and "n_topics" in raw:
        raw.setdefault("t_init", raw["n_topics"])
    return config_from_dict(raw)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="topicem",
        description="Streaming topic-model training and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run one method, write traces and summaries")
    _add_train_flags(train)

    sweep = sub.add_parser("sweep", help="run a list of experiment configs")
    sweep.add_argument("configs", metavar="JSON", help="file holding a list of config objects")
    sweep.add_argument("--jobs", type=int, default=1, help="parallel workers")

    args = parser.parse_args(argv)

    if args.command == "train":
        config = _train_config(args)
        aggregate = run_experiment(config)
        print(json.dumps(aggregate, sort_keys=True))
        return 0

    with open(args.configs) as fh:
        raw_list = json.load(fh)
    if not isinstance(raw_list, list):
        raise SystemExit("error: sweep file must hold a JSON list of configs")
    configs = [config_from_dict(d) for d in raw_list]
    outcomes = run_sweep(configs, n_jobs=args.jobs)
    failures = 0
    for status, out_dir, payload in outcomes:
        if status == "ok":
            print(f"ok {out_dir} {json.dumps(payload, sort_keys=True)}")
        else:
            failures += 1
            print(f"error {out_dir} {payload}", file=sys.stderr)
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
