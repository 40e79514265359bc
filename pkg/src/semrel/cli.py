"""Command-line entry point for the two scoring routes and their tooling.

Subcommands: train, predict, score-unsupervised, eval, augment
generate|filter|merge, review serve, anisotropy.  Every artifact-producing
run writes a manifest next to its output (resolved config, input digests,
tool version) so runs are auditable and replayable.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .augmentation import (
    DEFAULT_TEMPLATE,
    CandidateStore,
    HttpGeneratorClient,
    MockGeneratorClient,
    PromptTemplate,
    apply_auto_filters,
    generate_candidates,
    load_patterns,
    merge_accepted,
)
from .corpus import Dataset, load_dataset, save_dataset
from .encoders import PoolingStrategy, build_encoder
from .errors import SemrelError
from .evaluation import PredictionSet, evaluate
from .manifest import write_manifest
from .regressor import RegressionModel, TrainConfig, predict, train
from .scorer import ScorerConfig, anisotropy_estimate, score_dataset

_DEFAULT_CONFIG = {
    "seed": 42,
    "encoder": {"name": "toy"},
    "train": TrainConfig().to_dict(),
    "scorer": {"pooling": "avg", "rescale_to_unit_interval": True, "max_seq_len": 512},
}


def _deep_merge(base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def resolve_config(args: argparse.Namespace) -> dict:
    """defaults <- config file <- flags, fully resolved before any module runs."""
    config = dict(_DEFAULT_CONFIG)
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        config = _deep_merge(config, json.loads(path.read_text(encoding="utf-8")))
    if getattr(args, "seed", None) is not None:
        config["seed"] = args.seed
        config = _deep_merge(config, {"train": {"seed": args.seed}})
    if getattr(args, "encoder", None):
        config = _deep_merge(config, {"encoder": {"name": args.encoder}})
    if getattr(args, "pooling", None):
        config = _deep_merge(config, {"scorer": {"pooling": args.pooling}})
    return config


def _build_encoder(config: dict):
    encoder_cfg = dict(config["encoder"])
    name = encoder_cfg.pop("name")
    encoder_cfg.pop("path", None)
    return build_encoder(name, **encoder_cfg)


def _info(args, message: str) -> None:
    if not getattr(args, "quiet", False):
        print(message, file=sys.stderr)


def _load_labeled(path: str, split: str, lang: str) -> Dataset:
    return load_dataset(path, split, lang)


def _cmd_train(args) -> int:
    config = resolve_config(args)
    train_cfg = TrainConfig.from_dict(config["train"])
    train_ds = _load_labeled(args.train, "train", args.lang)
    inputs = {"train": args.train}
    if args.augments:
        augments = _load_labeled(args.augments, "train", args.lang)
        train_ds = Dataset(
            train_ds.split_name, train_ds.language_tag, train_ds.pairs + augments.pairs
        )
        inputs["augments"] = args.augments
    dev_ds = None
    if args.dev:
        dev_ds = _load_labeled(args.dev, "dev", args.lang)
        inputs["dev"] = args.dev

    encoder = _build_encoder(config)
    model, log = train(train_ds, dev_ds, train_cfg, encoder=encoder)

    out_dir = Path(args.out)
    model.save(out_dir)
    (out_dir / "trainlog.json").write_text(
        json.dumps(log.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    write_manifest(
        out_dir / "manifest.json", "train", config, inputs,
        outputs=["weights.pkl", "trainlog.json"],
    )
    final_loss = log.epoch_losses[-1] if log.epoch_losses else float("nan")
    _info(args, f"trained {log.epochs_run} epochs, final train loss {final_loss:.6f}")
    if log.best_dev_spearman is not None:
        _info(args, f"best dev Spearman {log.best_dev_spearman:.4f} at step {log.best_step}")
    return 0


def _cmd_predict(args) -> int:
    config = resolve_config(args)
    model = RegressionModel.load(args.model)
    data = load_dataset(args.input, args.split or "test", args.lang)
    preds = predict(model, data, batch_size=config["train"]["batch_size"])
    preds.save_csv(args.out)
    write_manifest(
        f"{args.out}.manifest.json", "predict", config,
        {"model": Path(args.model) / "weights.pkl", "input": args.input},
        outputs=[args.out],
    )
    _info(args, f"wrote {len(preds)} predictions to {args.out}")
    return 0


def _cmd_score_unsupervised(args) -> int:
    config = resolve_config(args)
    # Unsupervised route: labels are never read from the input file.
    data = load_dataset(args.input, args.split or "test", args.lang, with_scores=False)
    scorer_cfg = ScorerConfig(
        pooling=PoolingStrategy.parse(config["scorer"]["pooling"]),
        rescale_to_unit_interval=config["scorer"]["rescale_to_unit_interval"],
        max_seq_len=config["scorer"]["max_seq_len"],
    )
    preds = score_dataset(data, _build_encoder(config), scorer_cfg)
    preds.save_csv(args.out)
    write_manifest(
        f"{args.out}.manifest.json", "score-unsupervised", config,
        {"input": args.input}, outputs=[args.out],
    )
    _info(args, f"wrote {len(preds)} predictions to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    preds = PredictionSet.load_csv(args.pred)
    gold = load_dataset(args.gold, args.split or "test", args.lang)
    report = evaluate(preds, gold)
    print(report.to_json())
    return 0


def _cmd_augment_generate(args) -> int:
    config = resolve_config(args)
    train_ds = _load_labeled(args.train, "train", args.lang)
    if args.template:
        template = PromptTemplate(Path(args.template).read_text(encoding="utf-8").strip())
    else:
        template = DEFAULT_TEMPLATE
    if args.client == "mock":
        client = MockGeneratorClient(template=template)
    else:
        if not args.endpoint:
            raise SemrelError("--endpoint is required for the remote client")
        client = HttpGeneratorClient(args.endpoint)
    candidates = generate_candidates(train_ds, template, client)
    store = CandidateStore(args.out)
    store.replace_all(candidates)
    inputs = {"train": args.train}
    if args.template:
        inputs["template"] = args.template
    write_manifest(
        f"{args.out}.manifest.json", "augment-generate", config, inputs, outputs=[args.out],
    )
    counts = store.counts()
    _info(args, f"generated {counts['total']} candidates ({counts['pending']} pending)")
    return 0


def _cmd_augment_filter(args) -> int:
    config = resolve_config(args)
    refusal = load_patterns(args.refusal_patterns)
    policy = load_patterns(args.policy_patterns)
    store = CandidateStore(args.candidates)
    before = store.counts()
    store.replace_all(apply_auto_filters(store.items(), refusal, policy))
    after = store.counts()
    write_manifest(
        f"{args.candidates}.manifest.json", "augment-filter", config,
        {
            "refusal_patterns": args.refusal_patterns,
            "policy_patterns": args.policy_patterns,
        },
        outputs=[args.candidates],
    )
    _info(
        args,
        f"auto-rejected {after['auto_rejected_refusal']} refusal / "
        f"{after['auto_rejected_policy']} policy out of {before['pending']} pending",
    )
    return 0


def _cmd_augment_merge(args) -> int:
    config = resolve_config(args)
    train_ds = _load_labeled(args.train, "train", args.lang)
    store = CandidateStore(args.candidates)
    merged = merge_accepted(train_ds, store.items(), include_pending=args.accept_pending)
    save_dataset(merged, args.out)
    write_manifest(
        f"{args.out}.manifest.json", "augment-merge", config,
        {"train": args.train, "candidates": args.candidates},
        outputs=[args.out],
    )
    _info(args, f"merged dataset has {len(merged)} pairs")
    return 0


def _cmd_review_serve(args) -> int:
    from .service import serve

    store = CandidateStore(args.candidates)
    _info(args, f"serving {len(store)} candidates on port {args.port}")
    serve(store, args.port, ui_dir=args.ui_dir, host=args.host)
    return 0


def _cmd_anisotropy(args) -> int:
    config = resolve_config(args)
    lines = [
        line.strip()
        for line in Path(args.input).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    scorer_cfg = ScorerConfig(
        pooling=PoolingStrategy.parse(config["scorer"]["pooling"]),
        max_seq_len=config["scorer"]["max_seq_len"],
    )
    value = anisotropy_estimate(lines, _build_encoder(config), scorer_cfg)
    print(value)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file merged over defaults")
    common.add_argument("--seed", type=int, help="override the run seed")
    common.add_argument("--quiet", action="store_true", help="suppress progress messages")
    common.add_argument("--lang", default="und", help="language tag for loaded datasets")
    common.add_argument("--split", choices=["train", "dev", "test"],
                        help="split name for the main input (default per command)")

    parser = argparse.ArgumentParser(prog="semrel", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="fine-tune the supervised regressor")
    p.add_argument("--train", required=True)
    p.add_argument("--dev")
    p.add_argument("--augments", help="extra labeled pairs appended to the train split")
    p.add_argument("--encoder", help="encoder name (default from config)")
    p.add_argument("--out", required=True, help="model output directory")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", parents=[common], help="score pairs with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser(
        "score-unsupervised", parents=[common],
        help="score pairs by pooled-embedding cosine (no labels read)",
    )
    p.add_argument("--input", required=True)
    p.add_argument("--pooling", choices=[m.value for m in PoolingStrategy])
    p.add_argument("--encoder", help="encoder name (default from config)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_score_unsupervised)

    p = sub.add_parser("eval", parents=[common], help="score predictions against gold labels")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.set_defaults(func=_cmd_eval)

    p_aug = sub.add_parser("augment", help="paraphrase augmentation pipeline")
    aug_sub = p_aug.add_subparsers(dest="augment_command", required=True)

    p = aug_sub.add_parser("generate", parents=[common], help="generate paraphrase candidates")
    p.add_argument("--train", required=True)
    p.add_argument("--template", help="prompt template file with one {sentence} placeholder")
    p.add_argument("--client", choices=["mock", "remote"], default="mock")
    p.add_argument("--endpoint", help="remote generation endpoint URL")
    p.add_argument("--out", required=True, help="candidate JSONL path")
    p.set_defaults(func=_cmd_augment_generate)

    p = aug_sub.add_parser("filter", parents=[common], help="apply refusal/policy auto filters")
    p.add_argument("--candidates", required=True)
    p.add_argument("--refusal-patterns", required=True)
    p.add_argument("--policy-patterns", required=True)
    p.set_defaults(func=_cmd_augment_filter)

    p = aug_sub.add_parser("merge", parents=[common], help="merge accepted candidates into train")
    p.add_argument("--train", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--out", required=True)
    p.add_argument(
        "--accept-pending", action="store_true",
        help="treat still-pending candidates as accepted (skips manual review; "
        "the candidate store is not modified)",
    )
    p.set_defaults(func=_cmd_augment_merge)

    p_rev = sub.add_parser("review", help="manual review service")
    rev_sub = p_rev.add_subparsers(dest="review_command", required=True)

    p = rev_sub.add_parser("serve", parents=[common], help="serve the review API and UI")
    p.add_argument("--candidates", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui-dir", default="frontend/dist",
                   help="directory with the built review UI assets "
                        "(falls back to a plain API page when missing)")
    p.set_defaults(func=_cmd_review_serve)

    p = sub.add_parser(
        "anisotropy", parents=[common],
        help="mean pairwise cosine of sentence embeddings (diagnostic)",
    )
    p.add_argument("--input", required=True, help="text file, one sentence per line")
    p.add_argument("--pooling", choices=[m.value for m in PoolingStrategy])
    p.add_argument("--encoder", help="encoder name (default from config)")
    p.set_defaults(func=_cmd_anisotropy)

    return parser


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (SemrelError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
