"""
metrics.py

Latency and quality metrics of simultaneous translation runs.

* Average Lagging (AL) over word or character target units
* corpus BLEU and the hypothesis/reference length ratio
* segment length distributions, where a chunk without output is concatenated to the next chunk
"""
import logging
from collections import Counter
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd
from pydantic import Field, validator
from sacrebleu.metrics import BLEU

from .models import SegmentUnit, SimulSegModel, TargetUnit
from .simulator import SessionLog
from .subword import MergeTable, count_subwords
from .support import expand_characters, expand_path, tokenize

logger = logging.getLogger(__name__)

DEFAULT_SMOOTHING_FLOOR = 0.1

_SACREBLEU_TOKENIZERS = {TargetUnit.WORD: "none", TargetUnit.CHARACTER: "char"}


def average_lagging(g: Sequence[int], source_length: int, target_length: Optional[int] = None) -> float:
    """
    Computes Average Lagging.

    gamma = |Y| / |X|
    tau = min{t : g(t) = |X|}
    AL = (1 / tau) * sum_{t=1..tau} [g(t) - (t - 1) / gamma]

    :param g: Read counts per target unit
    :param source_length: |X|
    :param target_length: |Y|. Defaults to len(g).
    :return: The AL value
    :raises: ValueError if |X| or |Y| is zero, or the source is never fully read
    """
    target_length = len(g) if target_length is None else target_length
    if source_length == 0 or target_length == 0:
        raise ValueError("AL is undefined for empty source or target")

    gamma = target_length / source_length
    lagging = 0.0
    for t, read_count in enumerate(g, start=1):
        lagging += read_count - (t - 1) / gamma
        if read_count >= source_length:
            return lagging / t

    raise ValueError(f"the source ({source_length} tokens) is never fully read in g")


def sentence_lagging(log: SessionLog, target_unit: TargetUnit = TargetUnit.WORD) -> float:
    """
    Computes the AL of a session. Character units give each target token one unit per character, each inheriting
    the token's read count.

    :param log: The session log
    :param target_unit: The target unit
    :return: The AL value
    """
    g = list(log.g)
    if target_unit == TargetUnit.CHARACTER:
        g = expand_characters(list(log.target_tokens), g)
    return average_lagging(g, log.source_length)


class LatencyReport(SimulSegModel):
    """
    Per-sentence and corpus AL. Failed sessions and sessions with an empty source or target are excluded and counted.
    sentence_al holds one (sentence id, AL) pair per scored session in input order; ids may repeat.
    """

    target_unit: TargetUnit
    sentence_al: Tuple[Tuple[str, float], ...]
    corpus_al: float
    failed_count: int = 0
    excluded_count: int = 0


def latency_report(
    logs: Sequence[SessionLog], target_unit: TargetUnit = TargetUnit.WORD
) -> LatencyReport:
    """
    Computes AL for every scorable session and their arithmetic mean.

    :param logs: The session logs
    :param target_unit: The target unit
    :return: The LatencyReport. The corpus AL is 0.0 when no session is scorable.
    """
    sentence_al: List[Tuple[str, float]] = []
    failed = excluded = 0

    for log in logs:
        if log.failed:
            failed += 1
            continue
        try:
            sentence_al.append((log.sentence_id, sentence_lagging(log, target_unit)))
        except ValueError as error:
            logger.warning("excluding sentence %s from AL: %s", log.sentence_id, error)
            excluded += 1

    corpus_al = sum(al for _, al in sentence_al) / len(sentence_al) if sentence_al else 0.0
    return LatencyReport(
        target_unit=target_unit,
        sentence_al=tuple(sentence_al),
        corpus_al=corpus_al,
        failed_count=failed,
        excluded_count=excluded,
    )


class QualityReport(SimulSegModel):
    """
    Corpus BLEU with its n-gram precisions (percentages) and brevity penalty.
    """

    bleu: float = Field(ge=0.0, le=100.0)
    precisions: Tuple[float, ...]
    brevity_penalty: float = Field(ge=0.0, le=1.0)
    length_ratio: float
    hypothesis_length: int
    reference_length: int
    tokenization: TargetUnit = TargetUnit.WORD
    smoothing: bool = False

    @validator("bleu", pre=True)
    def round_bleu(cls, v: float) -> float:
        """Clamps floating point drift above 100"""
        return min(v, 100.0)


def corpus_bleu(
    hypotheses: Sequence[str],
    references: Sequence[str],
    max_n: int = 4,
    tokenization: TargetUnit = TargetUnit.WORD,
    smoothing: bool = False,
    smoothing_floor: float = DEFAULT_SMOOTHING_FLOOR,
) -> QualityReport:
    """
    Computes single reference corpus BLEU with sacrebleu.

    Word BLEU splits the already tokenized text on whitespace. Character BLEU scores every non-space character.
    Without smoothing a zero precision gives BLEU 0. Floor smoothing replaces zero match counts with smoothing_floor;
    a corpus without any matching unigram still scores 0.

    :param hypotheses: The hypothesis sentences
    :param references: The reference sentences, one per hypothesis
    :param max_n: The largest n-gram order
    :param tokenization: Word or character tokenization
    :param smoothing: Set to True to enable floor smoothing
    :param smoothing_floor: The floor used for zero match counts
    :return: The QualityReport
    :raises: ValueError if the corpus is empty, counts differ or the references are empty
    """
    if len(hypotheses) != len(references):
        raise ValueError(f"{len(hypotheses)} hypotheses for {len(references)} references")
    if not hypotheses:
        raise ValueError("cannot compute BLEU over an empty corpus")

    metric = BLEU(
        tokenize=_SACREBLEU_TOKENIZERS[TargetUnit(tokenization)],
        smooth_method="floor" if smoothing else "none",
        smooth_value=smoothing_floor if smoothing else None,
        max_ngram_order=max_n,
    )
    score = metric.corpus_score(list(hypotheses), [list(references)])

    if score.ref_len == 0:
        raise ValueError("cannot compute BLEU against empty references")

    return QualityReport(
        bleu=score.score,
        precisions=tuple(score.precisions),
        brevity_penalty=score.bp,
        length_ratio=score.sys_len / score.ref_len,
        hypothesis_length=score.sys_len,
        reference_length=score.ref_len,
        tokenization=tokenization,
        smoothing=smoothing,
    )


def length_ratio(
    hypotheses: Sequence[str],
    references: Sequence[str],
    tokenization: TargetUnit = TargetUnit.WORD,
) -> float:
    """
    Returns total hypothesis units / total reference units.

    :raises: ValueError if the corpus is empty or the references have no units
    """
    if not hypotheses or len(hypotheses) != len(references):
        raise ValueError("length ratio requires a non-empty, aligned corpus")

    hypothesis_length = sum(len(tokenize(h, tokenization)) for h in hypotheses)
    reference_length = sum(len(tokenize(r, tokenization)) for r in references)
    if reference_length == 0:
        raise ValueError("references have zero length")
    return hypothesis_length / reference_length


def segment_lengths(
    log: SessionLog,
    unit: SegmentUnit = SegmentUnit.WORD,
    merge_table: Optional[MergeTable] = None,
) -> List[int]:
    """
    Returns the source lengths of a session's segments. A chunk without output is concatenated to the next chunk;
    trailing chunks without output form a final segment.

    :param log: The session log
    :param unit: The unit lengths are counted in
    :param merge_table: Converts word chunks to subword lengths when unit is subword
    :return: list of segment lengths
    :raises: ValueError if a requested conversion is not possible
    """
    if unit == log.unit:
        chunk_lengths = [c.unit_length for c in log.chunks]
    elif unit == SegmentUnit.SUBWORD:
        if merge_table is None:
            raise ValueError("subword lengths of word sessions require a merge table")
        subword_counts = count_subwords(merge_table, list(log.source_tokens))
        chunk_lengths = [
            sum(subword_counts[c.unit_start - 1 : c.unit_end]) for c in log.chunks
        ]
    else:
        raise ValueError("word lengths cannot be recovered from subword sessions")

    lengths: List[int] = []
    pending = 0
    for chunk, length in zip(log.chunks, chunk_lengths):
        pending += length
        if chunk.target_length:
            lengths.append(pending)
            pending = 0
    if pending:
        lengths.append(pending)
    return lengths


def segment_length_distribution(
    logs: Sequence[SessionLog],
    unit: SegmentUnit = SegmentUnit.WORD,
    merge_table: Optional[MergeTable] = None,
) -> Dict[int, int]:
    """
    Returns the histogram (length -> count) of segment lengths over all non-failed sessions.

    :param logs: The session logs of a single policy run
    :param unit: The unit lengths are counted in
    :param merge_table: Converts word chunks to subword lengths when unit is subword
    :return: The histogram, sorted by length
    """
    histogram: Counter = Counter()
    for log in logs:
        if not log.failed:
            histogram.update(segment_lengths(log, unit, merge_table))
    return dict(sorted(histogram.items()))


def format_report(
    latency: LatencyReport,
    quality: Optional[QualityReport] = None,
    title: str = "simultaneous translation report",
) -> str:
    """
    Formats latency and quality reports as human readable text.
    """
    lines = [
        title,
        f"sentences scored: {len(latency.sentence_al)}",
        f"failed sessions: {latency.failed_count}",
        f"excluded sentences: {latency.excluded_count}",
        f"AL ({latency.target_unit}): {latency.corpus_al:.4f}",
    ]
    if quality is not None:
        precisions = "/".join(f"{p:.1f}" for p in quality.precisions)
        lines.extend(
            [
                f"BLEU ({quality.tokenization}): {quality.bleu:.2f} {precisions}",
                f"brevity penalty: {quality.brevity_penalty:.4f}",
                f"length ratio: {quality.length_ratio:.4f}"
                f" (hyp {quality.hypothesis_length}, ref {quality.reference_length})",
            ]
        )
    return "\n".join(lines) + "\n"


def write_report_csv(
    path: str, latency: LatencyReport, quality: Optional[QualityReport] = None
) -> None:
    """
    Writes a single row report CSV.
    """
    row = {
        "target_unit": latency.target_unit,
        "al": latency.corpus_al,
        "sentences": len(latency.sentence_al),
        "failed": latency.failed_count,
        "excluded": latency.excluded_count,
    }
    if quality is not None:
        row.update(
            {
                "bleu": quality.bleu,
                "brevity_penalty": quality.brevity_penalty,
                "length_ratio": quality.length_ratio,
            }
        )
        for n, precision in enumerate(quality.precisions, start=1):
            row[f"p{n}"] = precision

    pd.DataFrame([row]).to_csv(expand_path(path), index=False, float_format="%.6f")


def write_histogram_csv(path: str, histogram: Dict[int, int]) -> None:
    """
    Writes a (length, count) histogram CSV, sorted by length.
    """
    frame = pd.DataFrame(
        sorted(histogram.items()), columns=["length", "count"]
    )
    frame.to_csv(expand_path(path), index=False)
