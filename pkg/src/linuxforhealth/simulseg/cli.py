"""
cli.py

The LinuxForHealth SimulSeg Command Line Interface.

Usage:
    lfhsimul --help
    lfhsimul treebank extract --trees corpus.mrg --out instances.tsv
    lfhsimul iclp train --instances instances.tsv --model iclp.model
    lfhsimul segment --treebank corpus.mrg --policy rule --labels S,VP --min-len 2
    lfhsimul sweep --config sweep.yaml
    lfhsimul score --sessions results/sessions.jsonl --references refs.txt
"""

import argparse
import json
import logging
import logging.config
import sys
from typing import Any, Dict, List, Optional

import yaml

from .config import get_config
from .encoding import SimulSegJsonEncoder
from .harness import (
    MetricsConfig,
    PipelineConfigException,
    load_pipeline_config,
    rescore_sessions,
    run_pipeline,
    sweep,
    write_run,
)
from .iclp import (
    ExternalLabeler,
    IclpFormatException,
    OracleLabeler,
    evaluate,
    label_sentence,
    load_external_predictions,
    load_model,
    majority_baseline,
    predict_instances,
    save_model,
    train,
)
from .io import (
    read_instances,
    read_sentences,
    read_treebank,
    write_instances,
    write_jsonl,
    write_predictions,
)
from .metrics import format_report
from .segmenter import parse_policy, policy_name, segment
from .subword import apply_bpe, learn_bpe, load_merges, save_merges
from .support import is_file
from .treebank import TreebankParseException, extract_instances, split_dev

logger = logging.getLogger(__name__)

CLI_DESCRIPTION = """
The LinuxForHealth SimulSeg CLI segments source sentences into chunks for simultaneous translation.
It extracts constituent label training data from treebanks, trains label predictors, segments sentences
and runs quality/latency experiments.
"""


def _configure_logging() -> None:
    """Loads the logging dictConfig YAML, falling back to a basic console configuration"""
    logging_config = get_config().simulseg_logging_config
    if is_file(logging_config):
        with open(logging_config, "r", encoding="utf-8") as f:
            logging.config.dictConfig(yaml.safe_load(f))
    else:
        logging.basicConfig(
            level=logging.INFO,
            format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        )


def _create_arg_parser() -> argparse.ArgumentParser:
    """
    Creates the Argument Parser for the CLI utility.
    :return: ArgumentParser
    """
    parser = argparse.ArgumentParser(
        prog="lfhsimul",
        description=CLI_DESCRIPTION,
        formatter_class=argparse.RawTextHelpFormatter,
    )
    commands = parser.add_subparsers(dest="command", required=True)

    # treebank
    treebank = commands.add_parser("treebank", help="Treebank processing")
    treebank_commands = treebank.add_subparsers(dest="action", required=True)
    extract = treebank_commands.add_parser("extract", help="Extract ICLP instances")
    extract.add_argument("--trees", required=True, help="The path to a bracketed treebank file")
    extract.add_argument("--out", required=True, help="The instance TSV output path")
    extract.add_argument(
        "--no-lookahead",
        help="Pair c_i with w_1..w_(i-1) instead of w_1..w_i",
        action="store_true",
    )
    extract.add_argument(
        "--dev-fraction", type=float, default=0.0, help="Fraction of trees held out"
    )
    extract.add_argument("--dev-out", help="The held-out instance TSV output path")
    extract.add_argument("--seed", type=int, default=0, help="The split seed")

    # iclp
    iclp = commands.add_parser("iclp", help="Incremental constituent label prediction")
    iclp_commands = iclp.add_subparsers(dest="action", required=True)
    iclp_train = iclp_commands.add_parser("train", help="Train an averaged perceptron")
    iclp_train.add_argument("--instances", required=True, help="The training instance TSV")
    iclp_train.add_argument("--model", required=True, help="The model output path")
    iclp_train.add_argument("--epochs", type=int, default=5)
    iclp_train.add_argument("--seed", type=int, default=0)
    iclp_train.add_argument(
        "--no-lookahead",
        help="Train on instances pairing c_i with w_1..w_(i-1)",
        action="store_true",
    )
    iclp_train.add_argument(
        "--no-average", help="Keep the final weights", action="store_true"
    )
    iclp_train.add_argument("--dev", help="Held-out instance TSV scored after training")

    iclp_predict = iclp_commands.add_parser("predict", help="Predict instance labels")
    iclp_predict.add_argument("--model", required=True, help="The model path")
    iclp_predict.add_argument("--instances", required=True, help="The instance TSV")
    iclp_predict.add_argument("--out", required=True, help="The prediction TSV output path")

    iclp_eval = iclp_commands.add_parser("eval", help="Score label predictions")
    eval_source = iclp_eval.add_mutually_exclusive_group(required=True)
    eval_source.add_argument("--predictions", help="Predictions with gold labels")
    eval_source.add_argument("--instances", help="Gold instances labeled with --model")
    iclp_eval.add_argument("--model", help="The model path used with --instances")

    # segment
    segment_parser = commands.add_parser("segment", help="Segment sentences into chunks")
    source_group = segment_parser.add_mutually_exclusive_group(required=True)
    source_group.add_argument("--treebank", help="Segment treebank sentences")
    source_group.add_argument("--sentences", help="Segment tokenized sentences, one per line")
    segment_parser.add_argument(
        "--policy", choices=["rule", "fixed", "waitk"], required=True
    )
    segment_parser.add_argument("--labels", default="S,VP", help="Comma separated boundary labels")
    segment_parser.add_argument("--min-len", type=int, default=1)
    segment_parser.add_argument("--f", type=int, default=16)
    segment_parser.add_argument("--unit", choices=["word", "subword"], default="word")
    segment_parser.add_argument("--merges", help="BPE merges used by subword policies")
    segment_parser.add_argument("--k", type=int, default=3)
    segment_parser.add_argument("--model", help="ICLP model used to label sentences")
    segment_parser.add_argument("--predictions", help="External label predictions")
    segment_parser.add_argument("--out", help="The JSONL output path. Defaults to stdout")

    # bpe
    bpe = commands.add_parser("bpe", help="Byte pair encoding")
    bpe_commands = bpe.add_subparsers(dest="action", required=True)
    bpe_learn = bpe_commands.add_parser("learn", help="Learn a merges file")
    bpe_learn.add_argument("corpus", help="Tokenized sentences, one per line")
    bpe_learn.add_argument("--merges", type=int, required=True, help="The number of merges")
    bpe_learn.add_argument("--out", required=True, help="The merges output path")
    bpe_apply = bpe_commands.add_parser("apply", help="Split sentences into subwords")
    bpe_apply.add_argument("merges", help="The merges file")
    bpe_apply.add_argument("corpus", help="Tokenized sentences, one per line")

    # run and sweep
    for name, help_text in (("run", "Run a pipeline"), ("sweep", "Run a hyperparameter sweep")):
        command = commands.add_parser(name, help=help_text)
        command.add_argument("--config", required=True, help="The pipeline YAML config")
        command.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="Override a config key, e.g. --set policy.min_len=2",
        )
        command.add_argument("--output-dir", help="Override the output directory")
        if name == "sweep":
            command.add_argument("--workers", type=int, help="Worker processes")
            command.add_argument(
                "--policy", choices=["rule", "fixed", "waitk"], help="Replace the sweep policy"
            )
            command.add_argument("--range", help="START:STOP[:STEP], inclusive")

    # score
    score = commands.add_parser("score", help="Rescore the session logs of a run")
    score.add_argument("--sessions", required=True, help="A sessions.jsonl file")
    score.add_argument("--references", help="One reference per session. BLEU is skipped without it")
    score.add_argument("--target-unit", choices=["word", "character"], default="word")
    score.add_argument("--bleu-tokenization", choices=["word", "character"], default="word")
    score.add_argument("--smoothing", help="Floor smoothed BLEU", action="store_true")
    score.add_argument("--output-dir", help="Write report files to this directory")

    return parser


def _parse_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """
    Converts --set, --output-dir and sweep flags into dotted config overrides.
    """
    overrides: Dict[str, Any] = {}
    for assignment in args.set:
        key, separator, value = assignment.partition("=")
        if not separator:
            raise PipelineConfigException(f"invalid override {assignment!r}, expected KEY=VALUE")
        overrides[key] = yaml.safe_load(value)

    if args.output_dir:
        overrides["output_dir"] = args.output_dir

    if getattr(args, "policy", None) or getattr(args, "range", None):
        if not (args.policy and args.range):
            raise PipelineConfigException("--policy and --range are used together")
        bounds = [int(b) for b in args.range.split(":")]
        if len(bounds) not in (2, 3):
            raise PipelineConfigException(f"invalid range {args.range!r}")
        value_range = {"start": bounds[0], "stop": bounds[1], "step": bounds[2] if len(bounds) == 3 else 1}
        template: Dict[str, Any] = {"variant": args.policy}
        if args.policy == "rule":
            template["boundary_labels"] = ["S", "VP"]
        overrides["sweep"] = [{"policy": template, "range": value_range}]
    return overrides


def _treebank_extract(args: argparse.Namespace) -> int:
    if args.dev_fraction and not args.dev_out:
        raise ValueError("--dev-fraction requires --dev-out")

    trees = read_treebank(args.trees)
    train_trees, dev_trees = split_dev(trees, args.dev_fraction, args.seed)
    lookahead = not args.no_lookahead

    def instances_of(selected) -> List:
        ids = {id(t): str(i) for i, t in enumerate(trees, start=1)}
        return [
            instance
            for t in selected
            for instance in extract_instances(t, ids[id(t)], lookahead)
        ]

    train_count = write_instances(instances_of(train_trees), args.out)
    summary = {"trees": len(trees), "train_instances": train_count}
    if args.dev_out:
        summary["dev_instances"] = write_instances(instances_of(dev_trees), args.dev_out)
    print(json.dumps(summary))
    return 0


def _iclp_train(args: argparse.Namespace) -> int:
    instances = read_instances(args.instances)
    model = train(
        instances,
        args.epochs,
        args.seed,
        averaged=not args.no_average,
        lookahead=False if args.no_lookahead else None,
    )
    save_model(model, args.model)

    summary: Dict[str, Any] = {
        "instances": len(instances),
        "labels": len(model.inventory),
        "epoch_errors": list(model.train_meta.epoch_errors),
    }
    if args.dev:
        dev = read_instances(args.dev)
        summary["dev_majority_baseline"] = majority_baseline(dev, instances)
        summary["dev_accuracy"] = evaluate(predict_instances(model, dev)).accuracy
    print(json.dumps(summary))
    return 0


def _iclp_predict(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    write_predictions(predict_instances(model, read_instances(args.instances)), args.out)
    return 0


def _iclp_eval(args: argparse.Namespace) -> int:
    if args.instances:
        if not args.model:
            raise ValueError("--instances requires --model")
        records = predict_instances(load_model(args.model), read_instances(args.instances))
    else:
        records = load_external_predictions(args.predictions)

    evaluation = evaluate(records)
    print(json.dumps(evaluation, cls=SimulSegJsonEncoder, indent=4))
    return 0


def _segment(args: argparse.Namespace) -> int:
    if args.policy == "rule":
        policy = parse_policy(
            {"variant": "rule", "boundary_labels": args.labels.split(","), "min_len": args.min_len}
        )
    elif args.policy == "fixed":
        policy = parse_policy({"variant": "fixed", "f": args.f, "unit": args.unit})
    else:
        policy = parse_policy({"variant": "waitk", "k": args.k})

    trees = read_treebank(args.treebank) if args.treebank else None
    sentences = [list(t.words) for t in trees] if trees else read_sentences(args.sentences)
    sentence_ids = [str(i) for i in range(1, len(sentences) + 1)]

    predictors: List[Optional[object]] = [None] * len(sentences)
    if args.policy == "rule":
        if args.model:
            model = load_model(args.model)
            predictors = [model] * len(sentences)
        elif args.predictions:
            records = load_external_predictions(args.predictions)
            predictors = [ExternalLabeler(records, s) for s in sentence_ids]
        elif trees:
            predictors = [OracleLabeler(t) for t in trees]
        else:
            raise PipelineConfigException("rule segmentation of sentences requires --model or --predictions")

    merge_table = load_merges(args.merges) if args.unit == "subword" and args.merges else None
    if args.policy == "fixed" and args.unit == "subword" and merge_table is None:
        raise PipelineConfigException("subword segmentation requires --merges")

    records = []
    for sentence_id, words, predictor in zip(sentence_ids, sentences, predictors):
        tokens = words
        if merge_table is not None:
            tokens = [s.symbol(merge_table.end_of_word) for s in apply_bpe(merge_table, words)]
        labels = label_sentence(predictor, words) if predictor is not None else None
        segmentation = segment(tokens, policy, labels)
        records.append(
            {
                "sentence_id": sentence_id,
                "boundaries": segmentation.boundaries,
                "chunks": [" ".join(c) for c in segmentation.chunks(tokens)],
            }
        )

    if args.out:
        write_jsonl(records, args.out)
    else:
        for record in records:
            print(json.dumps(record, cls=SimulSegJsonEncoder, ensure_ascii=False))
    return 0


def _bpe_learn(args: argparse.Namespace) -> int:
    words = [w for sentence in read_sentences(args.corpus) for w in sentence]
    table = learn_bpe(words, args.merges)
    save_merges(table, args.out)
    print(json.dumps({"merges": len(table), "vocabulary_size": table.vocabulary_size}))
    return 0


def _bpe_apply(args: argparse.Namespace) -> int:
    table = load_merges(args.merges)
    for sentence in read_sentences(args.corpus):
        subwords = apply_bpe(table, sentence)
        print(" ".join(s.symbol(table.end_of_word) for s in subwords))
    return 0


def _run(args: argparse.Namespace) -> int:
    result = run_pipeline(load_pipeline_config(args.config, _parse_overrides(args)))
    if result.all_failed:
        logger.error("every session failed")
        return 1
    return 0


def _sweep(args: argparse.Namespace) -> int:
    rows = sweep(load_pipeline_config(args.config, _parse_overrides(args)), args.workers)
    if rows and all(row.error for row in rows):
        logger.error("every sweep run failed")
        return 1
    return 0


def _score(args: argparse.Namespace) -> int:
    metrics_config = MetricsConfig(
        target_unit=args.target_unit,
        bleu_tokenization=args.bleu_tokenization,
        smoothing=args.smoothing,
    )
    result = rescore_sessions(args.sessions, args.references, metrics_config)
    if args.output_dir:
        write_run(result, args.output_dir)

    name = f"{policy_name(result.policy)} {result.policy.hyperparameter}"
    print(format_report(result.latency, result.quality, title=name), end="")
    return 0


HANDLERS = {
    ("treebank", "extract"): _treebank_extract,
    ("iclp", "train"): _iclp_train,
    ("iclp", "predict"): _iclp_predict,
    ("iclp", "eval"): _iclp_eval,
    ("segment", None): _segment,
    ("bpe", "learn"): _bpe_learn,
    ("bpe", "apply"): _bpe_apply,
    ("run", None): _run,
    ("sweep", None): _sweep,
    ("score", None): _score,
}


def main(argv: Optional[List[str]] = None) -> int:
    """
    CLI module entrypoint

    :param argv: The command line arguments. Defaults to sys.argv.
    :return: The exit code. 1 signals a configuration or input error, or that every run failed.
    """
    parser = _create_arg_parser()
    args = parser.parse_args(argv)
    _configure_logging()

    handler = HANDLERS[(args.command, getattr(args, "action", None))]
    try:
        return handler(args)
    except PipelineConfigException as error:
        logger.error("configuration error: %s", error)
        return 1
    except (TreebankParseException, IclpFormatException, ValueError, OSError) as error:
        logger.error("%s", error)
        return 1


if __name__ == "__main__":
    sys.exit(main())
