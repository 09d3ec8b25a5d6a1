"""
simulator.py

Streaming translation sessions. A session reads source words incrementally, translates under a forced prefix of the
already committed output, and records g(t), the number of source words read when target token t was emitted.

Chunk sessions translate at chunk boundaries. Rule based boundaries need one word of look-ahead: the decision to close
a chunk after w_{i-1} is made when w_i is read, so the chunk output is charged g = i.
Wait-k sessions read k words, then alternate one write with one read.
"""
import logging
from typing import Dict, List, Optional, Sequence, Tuple, Union

from pydantic import Field, root_validator

from .config import SESSION_LOG_SCHEMA_VERSION
from .models import SegmentUnit, SimulSegModel
from .segmenter import (
    FixedSizePolicy,
    PolicyConfig,
    RuleBasedPolicy,
    WaitKPolicy,
    segment_fixed,
    segment_rule_based,
)
from .subword import MergeTable, apply_bpe
from .support import field_validator
from .translator import Translator, TranslatorException
from .validators import validate_non_decreasing, validate_read_counts

logger = logging.getLogger(__name__)


class ChunkSpan(SimulSegModel):
    """
    A translated chunk.

    unit_start and unit_end are the 1-based inclusive source span, counted in the session's segmentation unit.
    read is the number of source words read when the chunk was translated.
    target_start and target_end delimit the chunk output as a 0-based half open span of the target tokens.
    """

    unit_start: int = Field(ge=1)
    unit_end: int = Field(ge=1)
    read: int = Field(ge=0)
    target_start: int = Field(ge=0)
    target_end: int = Field(ge=0)

    @root_validator(skip_on_failure=True)
    def validate_spans(cls, values: Dict) -> Dict:
        """Validates that spans are not reversed"""
        if values["unit_end"] < values["unit_start"]:
            raise ValueError("chunk source span is reversed")
        if values["target_end"] < values["target_start"]:
            raise ValueError("chunk target span is reversed")
        return values

    @property
    def unit_length(self) -> int:
        return self.unit_end - self.unit_start + 1

    @property
    def target_length(self) -> int:
        return self.target_end - self.target_start


class SessionLog(SimulSegModel):
    """
    The replayable record of a single sentence session.

    source_units holds the subword stream of subword sessions and is empty otherwise.
    Failed sessions keep the output committed before the failure.
    """

    schema_version: int = SESSION_LOG_SCHEMA_VERSION
    sentence_id: str
    source_tokens: Tuple[str, ...]
    source_units: Tuple[str, ...] = ()
    target_tokens: Tuple[str, ...] = ()
    g: Tuple[int, ...] = ()
    chunks: Tuple[ChunkSpan, ...] = ()
    policy: PolicyConfig
    unit: SegmentUnit = SegmentUnit.WORD
    forced_reads: int = Field(0, ge=0)
    failed: bool = False
    error: Optional[str] = None

    _validate_g = field_validator("g")(validate_non_decreasing)
    _validate_read_counts = root_validator(allow_reuse=True, skip_on_failure=True)(
        validate_read_counts
    )

    @property
    def source_length(self) -> int:
        return len(self.source_tokens)

    @property
    def target_text(self) -> str:
        return " ".join(self.target_tokens)


class SessionContext:
    """
    Stores session state while a sentence is simulated.
    Output is append-only; committed tokens are never revised.
    """

    def __init__(
        self,
        sentence_id: str,
        source: Sequence[str],
        policy: Union[WaitKPolicy, FixedSizePolicy, RuleBasedPolicy],
        unit: SegmentUnit = SegmentUnit.WORD,
        source_units: Sequence[str] = (),
    ) -> None:
        self.sentence_id = sentence_id
        self.source = list(source)
        self.policy = policy
        self.unit = unit
        self.source_units = list(source_units)

        self.target: List[str] = []
        self.g: List[int] = []
        self.chunks: List[ChunkSpan] = []
        self.forced_reads = 0
        self.error: Optional[str] = None

    def emit(self, tokens: Sequence[str], read: int, unit_start: int, unit_end: int) -> None:
        """
        Commits a chunk of output.

        :param tokens: The output tokens, possibly empty
        :param read: The number of source words read at emission
        :param unit_start: The first source unit of the chunk
        :param unit_end: The last source unit of the chunk
        """
        target_start = len(self.target)
        self.target.extend(tokens)
        self.g.extend([read] * len(tokens))
        self.chunks.append(
            ChunkSpan(
                unit_start=unit_start,
                unit_end=unit_end,
                read=read,
                target_start=target_start,
                target_end=len(self.target),
            )
        )

    def fail(self, error: Exception) -> None:
        """Marks the session as failed"""
        self.error = f"{type(error).__name__}: {error}"
        logger.warning("session %s failed: %s", self.sentence_id, self.error)

    def to_log(self) -> SessionLog:
        """Returns the SessionLog of the session"""
        return SessionLog(
            sentence_id=self.sentence_id,
            source_tokens=tuple(self.source),
            source_units=tuple(self.source_units),
            target_tokens=tuple(self.target),
            g=tuple(self.g),
            chunks=tuple(self.chunks),
            policy=self.policy,
            unit=self.unit,
            forced_reads=self.forced_reads,
            failed=self.error is not None,
            error=self.error,
        )


def _translate_chunk(
    context: SessionContext,
    translator: Translator,
    source_words: int,
    read: int,
    unit_start: int,
    unit_end: int,
) -> None:
    """Translates the first source_words words under the committed prefix and emits the continuation"""
    continuation = translator.translate(context.source[:source_words], context.target)
    context.emit(continuation, read, unit_start, unit_end)


def run_chunk_session(
    words: Sequence[str],
    policy: Union[FixedSizePolicy, RuleBasedPolicy],
    translator: Translator,
    labels: Optional[Sequence[str]] = None,
    sentence_id: str = "1",
    merge_table: Optional[MergeTable] = None,
) -> SessionLog:
    """
    Simulates a chunk based session.

    Rule based chunks closing after w_{i-1} are translated over w_1..w_{i-1} with g = i. The final chunk is translated
    over the full source with g = |X|. Fixed-size chunks ending at w_j are translated with g = j.
    Fixed-size subword chunks are translated over the complete words read so far; a chunk which completes no new word
    produces no output.

    :param words: The source words
    :param policy: A rule based or fixed-size policy
    :param translator: The translator
    :param labels: Next-constituent labels, required by rule based policies
    :param sentence_id: The sentence id recorded in the log
    :param merge_table: The BPE merge table, required by subword policies
    :return: The SessionLog. Translator errors produce a failed log.
    :raises: ValueError if required labels or merges are missing
    """
    if isinstance(policy, WaitKPolicy):
        raise ValueError("wait-k policies are simulated by run_waitk_session")

    if isinstance(policy, FixedSizePolicy) and policy.unit == SegmentUnit.SUBWORD:
        return _run_subword_session(words, policy, translator, sentence_id, merge_table)

    context = SessionContext(sentence_id, words, policy)
    n = len(words)

    if isinstance(policy, RuleBasedPolicy):
        if labels is None:
            raise ValueError("rule based sessions require next-constituent labels")
        segmentation = segment_rule_based(
            words, labels, policy.boundary_labels, policy.min_len
        )
    else:
        segmentation = segment_fixed(words, policy.f)

    try:
        for start, end in segmentation.spans:
            if end == n:
                read = n
            elif isinstance(policy, RuleBasedPolicy):
                read = end + 1
            else:
                read = end
            _translate_chunk(context, translator, end, read, start, end)
    except TranslatorException as error:
        context.fail(error)

    return context.to_log()


def _run_subword_session(
    words: Sequence[str],
    policy: FixedSizePolicy,
    translator: Translator,
    sentence_id: str,
    merge_table: Optional[MergeTable],
) -> SessionLog:
    """Simulates a fixed-size session over the BPE subword stream of the source"""
    if merge_table is None:
        raise ValueError("subword sessions require a BPE merge table")

    subwords = apply_bpe(merge_table, words)
    context = SessionContext(
        sentence_id,
        words,
        policy,
        unit=SegmentUnit.SUBWORD,
        source_units=[s.symbol(merge_table.end_of_word) for s in subwords],
    )
    segmentation = segment_fixed(subwords, policy.f)

    complete_words = 0
    try:
        for start, end in segmentation.spans:
            completed = complete_words + sum(
                1 for s in subwords[start - 1 : end] if s.end_of_word
            )
            if completed == complete_words:
                context.emit([], complete_words, start, end)
                continue

            complete_words = completed
            _translate_chunk(context, translator, complete_words, complete_words, start, end)
    except TranslatorException as error:
        context.fail(error)

    return context.to_log()


def run_waitk_session(
    words: Sequence[str], k: int, translator: Translator, sentence_id: str = "1"
) -> SessionLog:
    """
    Simulates a wait-k session.

    After reading k words, each write step translates the j words read so far under the committed prefix and emits
    the first translation unit of the continuation with g = j, then reads one more word. An empty continuation before
    the source is exhausted forces a read instead of a write. Once all words are read, the remaining continuation is
    emitted with g = |X|.

    :param words: The source words
    :param k: The number of words read before the first write
    :param translator: The translator
    :param sentence_id: The sentence id recorded in the log
    :return: The SessionLog. Translator errors produce a failed log.
    """
    policy = WaitKPolicy(k=k)
    context = SessionContext(sentence_id, words, policy)
    n = len(words)
    j = min(k, n)
    previous_read = 0

    try:
        while n:
            if j >= n:
                units = translator.continuation_units(words, context.target)
                tokens = [t for unit in units for t in unit]
                context.emit(tokens, n, previous_read + 1, n)
                break

            units = translator.continuation_units(words[:j], context.target)
            if not units:
                context.forced_reads += 1
                j += 1
                continue

            context.emit(units[0], j, previous_read + 1, j)
            previous_read = j
            j += 1
    except TranslatorException as error:
        context.fail(error)

    return context.to_log()


def run_session(
    words: Sequence[str],
    policy: Union[WaitKPolicy, FixedSizePolicy, RuleBasedPolicy],
    translator: Translator,
    labels: Optional[Sequence[str]] = None,
    sentence_id: str = "1",
    merge_table: Optional[MergeTable] = None,
) -> SessionLog:
    """
    Simulates a session with any policy.

    :param words: The source words
    :param policy: The policy
    :param translator: The translator
    :param labels: Next-constituent labels, required by rule based policies
    :param sentence_id: The sentence id recorded in the log
    :param merge_table: The BPE merge table, required by subword policies
    :return: The SessionLog
    """
    if isinstance(policy, WaitKPolicy):
        return run_waitk_session(words, policy.k, translator, sentence_id)
    return run_chunk_session(words, policy, translator, labels, sentence_id, merge_table)
