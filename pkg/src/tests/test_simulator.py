"""
test_simulator.py

Tests chunk based, subword and wait-k streaming sessions.
"""
import pytest
from pydantic import ValidationError

from linuxforhealth.simulseg.segmenter import FixedSizePolicy, RuleBasedPolicy, WaitKPolicy
from linuxforhealth.simulseg.simulator import (
    ChunkSpan,
    SessionContext,
    SessionLog,
    run_chunk_session,
    run_session,
    run_waitk_session,
)
from linuxforhealth.simulseg.subword import MergeTable
from linuxforhealth.simulseg.translator import EchoTranslator, Translator, TranslatorException


class FailingTranslator(Translator):
    """Translates normally until the source reaches fail_at words"""

    def __init__(self, fail_at: int) -> None:
        self.fail_at = fail_at

    def translate(self, source, forced_prefix=()):
        if len(source) >= self.fail_at:
            raise TranslatorException("translator unavailable")
        return list(source[len(forced_prefix) :])


def test_rule_session_pen_sentence(pen_words, pen_labels, sov_translator):
    policy = RuleBasedPolicy(boundary_labels={"VP"}, min_len=1)
    log = run_chunk_session(pen_words, policy, sov_translator, pen_labels)

    assert log.target_text == "watashi wa pen wo katta ."
    assert log.g == (2, 2, 5, 5, 5, 5)
    assert not log.failed
    assert [(c.unit_start, c.unit_end, c.read) for c in log.chunks] == [(1, 1, 2), (2, 5, 5)]
    assert [(c.target_start, c.target_end) for c in log.chunks] == [(0, 2), (2, 6)]


def test_rule_session_requires_labels(pen_words, sov_translator):
    with pytest.raises(ValueError):
        run_chunk_session(pen_words, RuleBasedPolicy(boundary_labels={"VP"}), sov_translator)


def test_waitk_session_pen_sentence(pen_words, sov_translator):
    log = run_waitk_session(pen_words, 2, sov_translator)
    assert log.target_text == "watashi wa katta pen wo ."
    assert log.g == (2, 2, 3, 4, 4, 5)
    assert log.policy == WaitKPolicy(k=2)


@pytest.mark.parametrize("k", [5, 6, 10])
def test_waitk_reads_everything_when_k_exceeds_length(pen_words, sov_translator, k):
    log = run_waitk_session(pen_words, k, sov_translator)
    assert log.target_text == "watashi wa pen wo katta ."
    assert set(log.g) == {5}
    assert len(log.chunks) == 1


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_echo_waitk_schedule(k):
    words = ["a", "b", "c", "d", "e", "f"]
    log = run_waitk_session(words, k, EchoTranslator())
    assert log.target_tokens == tuple(words)
    assert list(log.g) == [min(k + t - 1, len(words)) for t in range(1, len(words) + 1)]


def test_waitk_forces_reads_on_empty_continuation(sov_translator):
    # "a" glosses to nothing, so the first write has no unit to emit
    log = run_waitk_session(["a", "pen", "."], 1, sov_translator)
    assert log.forced_reads == 1
    assert log.target_text == "pen wo ."
    assert log.g == (2, 2, 3)


def test_fixed_session_full_length(pen_words, sov_translator):
    log = run_chunk_session(pen_words, FixedSizePolicy(f=5), sov_translator)
    assert log.g == (5,) * 6
    assert len(log.chunks) == 1


def test_fixed_session_reads_chunk_end(pen_words, sov_translator):
    log = run_chunk_session(pen_words, FixedSizePolicy(f=2), sov_translator)
    # chunk "I bought" | "a pen" | "."
    assert log.target_text == "watashi wa katta pen wo ."
    assert log.g == (2, 2, 2, 4, 4, 5)


def test_waitk_policy_is_rejected_by_chunk_sessions(pen_words, sov_translator):
    with pytest.raises(ValueError):
        run_chunk_session(pen_words, WaitKPolicy(k=2), sov_translator)


def test_failed_session_keeps_committed_output():
    words = ["a", "b", "c", "d"]
    log = run_chunk_session(words, FixedSizePolicy(f=2), FailingTranslator(fail_at=4))
    assert log.failed
    assert "translator unavailable" in log.error
    assert log.target_tokens == ("a", "b")
    assert log.g == (2, 2)


def test_failed_session_unknown_word(sov_translator):
    log = run_waitk_session(["I", "sold", "a", "pen"], 1, sov_translator)
    assert log.failed
    assert log.target_text == "watashi wa"
    assert "UnknownWordError" in log.error


def test_subword_session():
    table = MergeTable(merges=(("a", "b"), ("ab", "c</w>")), end_of_word="</w>")
    # "abc" -> [abc</w>], "xy" -> [x, y</w>]
    words = ["abc", "xy"]
    log = run_chunk_session(
        words, FixedSizePolicy(f=1, unit="subword"), EchoTranslator(), merge_table=table
    )

    assert log.unit == "subword"
    assert log.source_units == ("abc</w>", "x", "y</w>")
    assert log.target_tokens == ("abc", "xy")
    assert log.g == (1, 2)
    # the "x" chunk completes no word and emits nothing
    assert [c.target_length for c in log.chunks] == [1, 0, 1]


def test_subword_session_requires_merges(pen_words):
    with pytest.raises(ValueError):
        run_chunk_session(
            pen_words, FixedSizePolicy(f=2, unit="subword"), EchoTranslator()
        )


def test_run_session_dispatch(pen_words, pen_labels, sov_translator):
    rule = run_session(
        pen_words, RuleBasedPolicy(boundary_labels={"VP"}), sov_translator, pen_labels
    )
    assert rule.g == (2, 2, 5, 5, 5, 5)
    waitk = run_session(pen_words, WaitKPolicy(k=2), sov_translator, sentence_id="7")
    assert waitk.sentence_id == "7"
    assert waitk.g == (2, 2, 3, 4, 4, 5)


def test_empty_source():
    log = run_waitk_session([], 2, EchoTranslator())
    assert log.target_tokens == ()
    assert log.chunks == ()


def test_session_log_validates_read_counts():
    with pytest.raises(ValidationError):
        SessionLog(
            sentence_id="1",
            source_tokens=("a", "b"),
            target_tokens=("a", "b"),
            g=(2, 1),
            policy=WaitKPolicy(k=1),
        )
    with pytest.raises(ValidationError):
        SessionLog(
            sentence_id="1",
            source_tokens=("a",),
            target_tokens=("a",),
            g=(2,),
            policy={"variant": "waitk", "k": 1},
        )


def test_chunk_span_validation():
    with pytest.raises(ValidationError):
        ChunkSpan(unit_start=3, unit_end=2, read=3, target_start=0, target_end=1)


def test_session_context_round_trip():
    context = SessionContext("s1", ["a", "b"], FixedSizePolicy(f=1))
    context.emit(["x"], 1, 1, 1)
    context.emit([], 2, 2, 2)
    log = context.to_log()

    assert log.g == (1,)
    assert log.chunks[1].target_length == 0
    assert SessionLog.parse_raw(log.json()) == log
