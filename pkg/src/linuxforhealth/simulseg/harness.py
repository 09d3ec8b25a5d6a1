"""
harness.py

End to end pipeline runs and hyperparameter sweeps.

A pipeline run reads a corpus (treebank or tokenized sentences), obtains next-constituent labels, simulates every
sentence with a policy and a translator, then scores latency and quality. A sweep repeats the run over policy
hyperparameter ranges and tabulates BLEU against AL.

Runs are configured by a versioned YAML document:

version: 1
treebank: corpus.mrg           # or sentences: corpus.txt
labels:
  source: oracle               # oracle | model | external
translator:
  variant: sov
  dictionary: gloss.tsv
policy: {variant: rule, boundary_labels: [S, VP], min_len: 1}
sweep:
  - policy: {variant: waitk}
    range: {start: 2, stop: 30, step: 2}
output_dir: results
"""
import copy
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import pandas as pd
import yaml
from pydantic import Field, ValidationError, root_validator

from .config import PIPELINE_CONFIG_VERSION, get_config
from .iclp import (
    ExternalLabeler,
    OracleLabeler,
    label_sentence,
    load_external_predictions,
    load_model,
)
from .io import (
    read_references,
    read_sentences,
    read_session_logs,
    read_treebank,
    write_session_logs,
)
from .metrics import (
    LatencyReport,
    QualityReport,
    corpus_bleu,
    format_report,
    latency_report,
    segment_length_distribution,
    write_histogram_csv,
    write_report_csv,
)
from .models import LabelSource, SegmentUnit, SimulSegModel, TargetUnit
from .segmenter import (
    FixedSizePolicy,
    PolicyConfig,
    RuleBasedPolicy,
    WaitKPolicy,
    parse_policy,
    policy_name,
)
from .simulator import SessionLog, run_session
from .subword import MergeTable, learn_bpe, load_merges
from .support import expand_path, is_file
from .translator import TranslatorSpec, create_translator

logger = logging.getLogger(__name__)

# policy field swept by each variant
SWEPT_FIELDS = {"waitk": "k", "fixed": "f", "rule": "min_len"}

# config keys holding paths, resolved against the config file directory
PATH_KEYS = (
    ("treebank",),
    ("sentences",),
    ("references",),
    ("merges",),
    ("output_dir",),
    ("labels", "model"),
    ("labels", "predictions"),
    ("translator", "dictionary"),
)


class PipelineConfigException(Exception):
    """Raised when a pipeline configuration is invalid or names missing inputs"""

    pass


class LabelConfig(SimulSegModel):
    """
    Where next-constituent labels come from
    """

    source: LabelSource = LabelSource.ORACLE
    model: Optional[str] = None
    predictions: Optional[str] = None


class MetricsConfig(SimulSegModel):
    """
    Metric options
    """

    target_unit: TargetUnit = TargetUnit.WORD
    bleu_tokenization: TargetUnit = TargetUnit.WORD
    smoothing: bool = False
    segment_unit: SegmentUnit = SegmentUnit.WORD


class ValueRange(SimulSegModel):
    """
    An inclusive integer range
    """

    start: int
    stop: int
    step: int = Field(1, ge=1)

    def values(self) -> List[int]:
        return list(range(self.start, self.stop + 1, self.step))


class SweepSpec(SimulSegModel):
    """
    A policy template and the values of its swept hyperparameter (k, f or min_len).
    """

    policy: Dict[str, Any]
    values: Optional[List[int]] = None
    range: Optional[ValueRange] = None

    @root_validator(skip_on_failure=True)
    def validate_values(cls, values: Dict) -> Dict:
        """
        Validates that the template names a known variant and that exactly one of values and range is set.

        :param values: The validated values
        """
        if values["policy"].get("variant") not in SWEPT_FIELDS:
            raise ValueError(f"unknown policy variant {values['policy'].get('variant')!r}")
        if (values.get("values") is None) == (values.get("range") is None):
            raise ValueError("a sweep sets exactly one of values and range")
        return values

    def hyperparameters(self) -> List[int]:
        return list(self.values) if self.values is not None else self.range.values()

    def policies(self) -> List[Union[WaitKPolicy, FixedSizePolicy, RuleBasedPolicy]]:
        """
        Expands the template into one policy per hyperparameter value.

        :raises: ValueError if the range is empty
        """
        hyperparameters = self.hyperparameters()
        if not hyperparameters:
            raise ValueError(f"empty sweep range for {self.policy}")

        field = SWEPT_FIELDS[self.policy["variant"]]
        return [parse_policy({**self.policy, field: value}) for value in hyperparameters]


class PipelineConfig(SimulSegModel):
    """
    A pipeline run or sweep configuration.
    """

    version: Literal[1] = PIPELINE_CONFIG_VERSION
    treebank: Optional[str] = None
    sentences: Optional[str] = None
    labels: LabelConfig = LabelConfig()
    policy: Optional[PolicyConfig] = None
    translator: TranslatorSpec = TranslatorSpec()
    references: Optional[str] = None
    metrics: MetricsConfig = MetricsConfig()
    merges: Optional[str] = None
    num_merges: Optional[int] = Field(None, ge=0)
    output_dir: str = "results"
    seed: int = 0
    workers: Optional[int] = Field(None, ge=1)
    sweep: List[SweepSpec] = []

    @root_validator(skip_on_failure=True)
    def validate_inputs(cls, values: Dict) -> Dict:
        """
        Validates that a corpus is named and, when a rule based policy is configured, that the label source has its
        input.

        :param values: The validated values
        """
        if not (values.get("treebank") or values.get("sentences")):
            raise ValueError("a treebank or a sentences file is required")

        uses_labels = isinstance(values.get("policy"), RuleBasedPolicy) or any(
            spec.policy.get("variant") == "rule" for spec in values.get("sweep", [])
        )
        if not uses_labels:
            return values

        labels: LabelConfig = values["labels"]
        if labels.source == LabelSource.ORACLE and not values.get("treebank"):
            raise ValueError("oracle labels require a treebank")
        if labels.source == LabelSource.MODEL and not labels.model:
            raise ValueError("model labels require a model path")
        if labels.source == LabelSource.EXTERNAL and not labels.predictions:
            raise ValueError("external labels require a predictions path")
        return values

    def all_policies(self) -> List[Union[WaitKPolicy, FixedSizePolicy, RuleBasedPolicy]]:
        """Returns the single run policy followed by every swept policy"""
        policies = [self.policy] if self.policy is not None else []
        for spec in self.sweep:
            policies.extend(spec.policies())
        return policies


def _set_dotted(data: Dict, key: str, value: Any) -> None:
    """Sets a nested dictionary value addressed by a dotted key"""
    *parents, leaf = key.split(".")
    for parent in parents:
        data = data.setdefault(parent, {})
    data[leaf] = copy.deepcopy(value)


def load_pipeline_config(
    config_input: Union[str, Dict], overrides: Optional[Dict[str, Any]] = None
) -> PipelineConfig:
    """
    Loads and validates a pipeline configuration. Relative paths are resolved against the config file directory.

    :param config_input: A YAML config path or the config dictionary
    :param overrides: Dotted keys overriding config values, e.g. {"policy.k": 4}
    :return: The PipelineConfig
    :raises: PipelineConfigException if the config is missing, malformed or invalid
    """
    base_directory = "."
    if isinstance(config_input, dict):
        data = copy.deepcopy(config_input)
    else:
        if not is_file(config_input):
            raise PipelineConfigException(f"config file {config_input} does not exist")
        base_directory = os.path.dirname(os.path.abspath(expand_path(config_input)))
        try:
            with open(expand_path(config_input), "r", encoding="utf-8") as f:
                data = yaml.safe_load(f) or {}
        except yaml.YAMLError as error:
            raise PipelineConfigException(f"invalid YAML in {config_input}: {error}")

    if not isinstance(data, dict):
        raise PipelineConfigException("the pipeline config must be a mapping")

    for key, value in (overrides or {}).items():
        _set_dotted(data, key, value)

    for path_key in PATH_KEYS:
        section = data
        for key in path_key[:-1]:
            section = section.get(key) if isinstance(section, dict) else None
        if isinstance(section, dict) and isinstance(section.get(path_key[-1]), str):
            path = expand_path(section[path_key[-1]])
            section[path_key[-1]] = os.path.join(base_directory, path)

    try:
        return PipelineConfig.parse_obj(data)
    except (ValidationError, ValueError) as error:
        raise PipelineConfigException(str(error))


def check_inputs(config: PipelineConfig) -> None:
    """
    Validates that every input file named by the config exists and that the config names a runnable policy.

    :raises: PipelineConfigException
    """
    paths = [
        config.treebank,
        config.sentences,
        config.references,
        config.merges,
        config.translator.dictionary,
        config.labels.model if config.labels.source == LabelSource.MODEL else None,
        config.labels.predictions
        if config.labels.source == LabelSource.EXTERNAL
        else None,
    ]
    for path in paths:
        if path and not is_file(path):
            raise PipelineConfigException(f"input file {path} does not exist")

    try:
        policies = config.all_policies()
    except ValueError as error:
        raise PipelineConfigException(str(error))
    if not policies:
        raise PipelineConfigException("the config names no policy and no sweep")

    uses_subwords = any(
        isinstance(p, FixedSizePolicy) and p.unit == SegmentUnit.SUBWORD for p in policies
    ) or config.metrics.segment_unit == SegmentUnit.SUBWORD
    if uses_subwords and not (config.merges or config.num_merges is not None):
        raise PipelineConfigException("subword units require merges or num_merges")


class CorpusSentence(SimulSegModel):
    """
    A source sentence with its optional next-constituent labels
    """

    sentence_id: str
    words: Tuple[str, ...]
    labels: Optional[Tuple[str, ...]] = None


class PreparedCorpus(SimulSegModel):
    """
    Inputs shared by every run of a sweep
    """

    sentences: Tuple[CorpusSentence, ...]
    references: Optional[Tuple[str, ...]] = None
    merge_table: Optional[MergeTable] = None


def prepare_corpus(config: PipelineConfig) -> PreparedCorpus:
    """
    Reads the corpus and labels it when a rule based policy is configured.

    :param config: The pipeline config
    :return: The PreparedCorpus
    """
    trees = read_treebank(config.treebank) if config.treebank else None
    if trees is not None:
        word_lists = [list(t.words) for t in trees]
    else:
        word_lists = read_sentences(config.sentences)
    sentence_ids = [str(i) for i in range(1, len(word_lists) + 1)]

    labels: List[Optional[Tuple[str, ...]]] = [None] * len(word_lists)
    if any(isinstance(p, RuleBasedPolicy) for p in config.all_policies()):
        source = config.labels.source
        if source == LabelSource.ORACLE:
            predictors = [OracleLabeler(t) for t in trees]
        elif source == LabelSource.MODEL:
            model = load_model(config.labels.model)
            predictors = [model] * len(word_lists)
        else:
            records = load_external_predictions(config.labels.predictions)
            predictors = [ExternalLabeler(records, s) for s in sentence_ids]

        labels = [
            tuple(label_sentence(p, words)) for p, words in zip(predictors, word_lists)
        ]

    references = None
    if config.references:
        references = tuple(read_references(config.references))
        if len(references) != len(word_lists):
            raise PipelineConfigException(
                f"{len(references)} references for {len(word_lists)} sentences"
            )

    merge_table = None
    if config.merges:
        merge_table = load_merges(config.merges)
    elif config.num_merges is not None:
        merge_table = learn_bpe([w for words in word_lists for w in words], config.num_merges)

    logger.info("prepared %d sentences", len(word_lists))
    return PreparedCorpus(
        sentences=tuple(
            CorpusSentence(sentence_id=i, words=tuple(w), labels=l)
            for i, w, l in zip(sentence_ids, word_lists, labels)
        ),
        references=references,
        merge_table=merge_table,
    )


class RunResult(SimulSegModel):
    """
    The sessions and reports of a single policy run
    """

    policy: PolicyConfig
    logs: Tuple[SessionLog, ...]
    latency: LatencyReport
    quality: Optional[QualityReport] = None
    histogram: Dict[int, int] = {}
    boundary_count: int = 0

    @property
    def failure_count(self) -> int:
        return sum(1 for log in self.logs if log.failed)

    @property
    def all_failed(self) -> bool:
        return bool(self.logs) and self.failure_count == len(self.logs)


def run_policy(
    corpus: PreparedCorpus,
    policy: Union[WaitKPolicy, FixedSizePolicy, RuleBasedPolicy],
    translator_spec: TranslatorSpec,
    metrics_config: MetricsConfig = MetricsConfig(),
) -> RunResult:
    """
    Simulates every corpus sentence with a policy and scores the run.

    References default to the full-sentence translations of the translator.

    :param corpus: The prepared corpus
    :param policy: The policy
    :param translator_spec: The translator specification. A translator is created for the run.
    :param metrics_config: Metric options
    :return: The RunResult
    """
    logs: List[SessionLog] = []
    references = list(corpus.references) if corpus.references is not None else []

    with create_translator(translator_spec) as translator:
        for sentence in corpus.sentences:
            logs.append(
                run_session(
                    list(sentence.words),
                    policy,
                    translator,
                    labels=sentence.labels,
                    sentence_id=sentence.sentence_id,
                    merge_table=corpus.merge_table,
                )
            )
            if corpus.references is None:
                try:
                    references.append(" ".join(translator.translate(list(sentence.words))))
                except Exception as error:
                    logger.warning(
                        "no full-sentence reference for %s: %s", sentence.sentence_id, error
                    )
                    references.append("")

    return score_logs(logs, references, policy, metrics_config, corpus.merge_table)


def score_logs(
    logs: Sequence[SessionLog],
    references: Optional[Sequence[str]],
    policy: PolicyConfig,
    metrics_config: MetricsConfig = MetricsConfig(),
    merge_table: Optional[MergeTable] = None,
) -> RunResult:
    """
    Scores the session logs of a policy run. Failed sessions are excluded from BLEU and AL.

    :param logs: The session logs
    :param references: One reference per log, or None to skip BLEU
    :param policy: The policy which produced the logs
    :param metrics_config: Metric options
    :param merge_table: Converts word chunks to subword lengths for subword histograms
    :return: The RunResult
    """
    quality = None
    scored = [(log, ref) for log, ref in zip(logs, references or []) if not log.failed]
    if scored:
        try:
            quality = corpus_bleu(
                [log.target_text for log, _ in scored],
                [ref for _, ref in scored],
                tokenization=metrics_config.bleu_tokenization,
                smoothing=metrics_config.smoothing,
            )
        except ValueError as error:
            logger.warning("BLEU is not available for %s: %s", policy_name(policy), error)

    segment_unit = metrics_config.segment_unit
    if isinstance(policy, FixedSizePolicy) and policy.unit == SegmentUnit.SUBWORD:
        segment_unit = SegmentUnit.SUBWORD

    return RunResult(
        policy=policy,
        logs=tuple(logs),
        latency=latency_report(logs, metrics_config.target_unit),
        quality=quality,
        histogram=segment_length_distribution(logs, segment_unit, merge_table),
        boundary_count=sum(max(len(log.chunks) - 1, 0) for log in logs),
    )


def rescore_sessions(
    sessions_path: str,
    references_path: Optional[str] = None,
    metrics_config: MetricsConfig = MetricsConfig(),
    merge_table: Optional[MergeTable] = None,
) -> RunResult:
    """
    Recomputes the reports of a run from its session logs without running a translator.

    :param sessions_path: A sessions.jsonl file written by a run or a sweep
    :param references_path: One reference per session. BLEU is skipped when omitted.
    :param metrics_config: Metric options
    :param merge_table: Converts word chunks to subword lengths for subword histograms
    :return: The RunResult
    :raises: PipelineConfigException if the file holds no sessions, mixes policies or the reference count differs
    """
    logs = list(read_session_logs(sessions_path))
    if not logs:
        raise PipelineConfigException(f"{sessions_path} holds no sessions")
    policy = logs[0].policy
    if any(log.policy != policy for log in logs):
        raise PipelineConfigException(f"{sessions_path} mixes the sessions of several policies")

    references = None
    if references_path:
        references = read_references(references_path)
        if len(references) != len(logs):
            raise PipelineConfigException(
                f"{len(references)} references for {len(logs)} sessions"
            )

    logger.info("rescoring %d sessions from %s", len(logs), sessions_path)
    return score_logs(logs, references, policy, metrics_config, merge_table)


def write_run(result: RunResult, output_dir: str, prefix: str = "") -> None:
    """
    Writes a run's sessions.jsonl, report.txt, report.csv and histogram.csv.
    """
    os.makedirs(output_dir, exist_ok=True)
    name = f"{policy_name(result.policy)} {result.policy.hyperparameter}"

    write_session_logs(result.logs, os.path.join(output_dir, f"{prefix}sessions.jsonl"))
    with open(os.path.join(output_dir, f"{prefix}report.txt"), "w", encoding="utf-8") as f:
        f.write(format_report(result.latency, result.quality, title=name))
    write_report_csv(
        os.path.join(output_dir, f"{prefix}report.csv"), result.latency, result.quality
    )
    write_histogram_csv(os.path.join(output_dir, f"{prefix}histogram.csv"), result.histogram)


def run_pipeline(config: Union[PipelineConfig, str, Dict]) -> RunResult:
    """
    Runs the configured policy over the corpus and writes its outputs to the output directory.

    :param config: The PipelineConfig, a config path or a config dictionary
    :return: The RunResult
    :raises: PipelineConfigException if the config is invalid or inputs are missing
    """
    if not isinstance(config, PipelineConfig):
        config = load_pipeline_config(config)
    if config.policy is None:
        raise PipelineConfigException("a pipeline run requires a policy")
    check_inputs(config)

    corpus = prepare_corpus(config)
    result = run_policy(corpus, config.policy, config.translator, config.metrics)
    write_run(result, config.output_dir)

    if result.failure_count:
        logger.warning("%d of %d sessions failed", result.failure_count, len(result.logs))
    return result


class SweepRow(SimulSegModel):
    """
    One point of a quality/latency sweep. Failed runs carry an error and no scores.
    """

    policy: str
    hyperparameter: int
    bleu: Optional[float] = None
    al: Optional[float] = None
    length_ratio: Optional[float] = None
    sentences: int = 0
    failures: int = 0
    boundaries: int = 0
    error: Optional[str] = None


def _sweep_point(
    args: Tuple[PreparedCorpus, PolicyConfig, TranslatorSpec, MetricsConfig, Optional[str]]
) -> SweepRow:
    """Runs one sweep point. Exceptions are recorded in the row."""
    corpus, policy, translator_spec, metrics_config, runs_dir = args
    name = policy_name(policy)

    try:
        result = run_policy(corpus, policy, translator_spec, metrics_config)
    except Exception as error:
        logger.warning("sweep run %s %d failed: %s", name, policy.hyperparameter, error)
        return SweepRow(
            policy=name,
            hyperparameter=policy.hyperparameter,
            sentences=len(corpus.sentences),
            failures=len(corpus.sentences),
            error=f"{type(error).__name__}: {error}",
        )

    if runs_dir:
        write_session_logs(
            result.logs, os.path.join(runs_dir, f"{name}-{policy.hyperparameter}.jsonl")
        )

    scored = not result.all_failed and bool(result.latency.sentence_al)
    return SweepRow(
        policy=name,
        hyperparameter=policy.hyperparameter,
        bleu=result.quality.bleu if result.quality else None,
        al=result.latency.corpus_al if scored else None,
        length_ratio=result.quality.length_ratio if result.quality else None,
        sentences=len(result.logs),
        failures=result.failure_count,
        boundaries=result.boundary_count,
        error="every session failed" if result.all_failed else None,
    )


def _row_order(row: SweepRow) -> Tuple:
    """Sorts scored rows by AL, then failed rows, ties resolved by policy and hyperparameter"""
    return (row.al is None, row.al or 0.0, row.policy, row.hyperparameter)


def sweep(
    config: Union[PipelineConfig, str, Dict], workers: Optional[int] = None
) -> List[SweepRow]:
    """
    Runs every swept policy over a shared corpus and writes sweep.csv and scatter.csv (and scatter.svg when
    matplotlib is installed) to the output directory. Session logs of each run are written to output_dir/runs.

    Parallelism is across sweep points: each worker process runs one (policy, hyperparameter value) pair over the
    whole corpus. Sentences of a single run are simulated sequentially.

    :param config: The PipelineConfig, a config path or a config dictionary
    :param workers: Worker processes. Defaults to the config value, then SIMULSEG_WORKERS.
    :return: The sweep rows sorted by AL
    :raises: PipelineConfigException if the config is invalid, inputs are missing or a range is empty
    """
    if not isinstance(config, PipelineConfig):
        config = load_pipeline_config(config)
    if not config.sweep:
        raise PipelineConfigException("the config has no sweep section")
    check_inputs(config)

    policies = [p for spec in config.sweep for p in spec.policies()]
    corpus = prepare_corpus(config)
    runs_dir = os.path.join(config.output_dir, "runs")
    os.makedirs(runs_dir, exist_ok=True)

    tasks = [(corpus, p, config.translator, config.metrics, runs_dir) for p in policies]
    workers = workers or config.workers or get_config().simulseg_workers
    logger.info("sweeping %d runs with %d workers", len(tasks), workers)

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            rows = list(executor.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]

    rows.sort(key=_row_order)
    write_sweep(rows, config.output_dir)
    return rows


def write_sweep(rows: Sequence[SweepRow], output_dir: str) -> None:
    """
    Writes sweep.csv, scatter.csv and, when matplotlib is installed, scatter.svg.
    """
    os.makedirs(output_dir, exist_ok=True)
    frame = pd.DataFrame([row.dict() for row in rows], columns=list(SweepRow.__fields__))
    frame.to_csv(os.path.join(output_dir, "sweep.csv"), index=False, float_format="%.6f")

    points = frame[frame["al"].notna() & frame["bleu"].notna()]
    scatter = pd.DataFrame(
        {
            "x": points["al"],
            "y": points["bleu"],
            "series": points["policy"],
            "value": points["hyperparameter"],
        }
    )
    scatter.to_csv(os.path.join(output_dir, "scatter.csv"), index=False, float_format="%.6f")

    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        logger.warning("matplotlib is not installed, skipping scatter.svg")
        return

    # a fixed hash salt keeps svg element ids stable between runs; text stays searchable
    with plt.rc_context({"svg.hashsalt": "simulseg", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for series, group in scatter.groupby("series", sort=True):
            ax.plot(group["x"], group["y"], marker="o", label=series)
            for x, y, value in zip(group["x"], group["y"], group["value"]):
                ax.annotate(
                    str(value), (x, y), textcoords="offset points", xytext=(4, 4), fontsize=8
                )
        ax.set_xlabel("AL")
        ax.set_ylabel("BLEU")
        if not scatter.empty:
            ax.legend()
        fig.savefig(os.path.join(output_dir, "scatter.svg"), metadata={"Date": None})
        plt.close(fig)
