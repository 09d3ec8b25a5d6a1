"""
test_io.py

Tests the streaming treebank reader and the instance, prediction and session log files.
"""
import os

import pytest

from linuxforhealth.simulseg.config import get_config
from linuxforhealth.simulseg.iclp import IclpFormatException, PredictionRecord, load_external_predictions
from linuxforhealth.simulseg.io import (
    TreebankReader,
    read_instances,
    read_references,
    read_sentences,
    read_session_logs,
    read_treebank,
    write_instances,
    write_predictions,
    write_session_logs,
)
from linuxforhealth.simulseg.segmenter import RuleBasedPolicy
from linuxforhealth.simulseg.simulator import run_chunk_session, run_waitk_session
from linuxforhealth.simulseg.treebank import TreebankParseException, extract_instances
from tests.support import resources_directory


@pytest.fixture
def small_buffer(monkeypatch):
    """Configures a reader buffer smaller than a single tree"""
    monkeypatch.setenv("SIMULSEG_READER_BUFFER_SIZE", "7")
    get_config.cache_clear()
    yield
    get_config.cache_clear()


def test_reader_file_input(nested_tree):
    trees = read_treebank(os.path.join(resources_directory, "nested.mrg"))
    assert trees == [nested_tree]


def test_reader_text_input(fixture_treebank_text, fixture_trees):
    assert len(fixture_trees) == 300
    with TreebankReader(fixture_treebank_text) as r:
        assert list(r.trees()) == fixture_trees
        assert r.skipped == 0


def test_reader_small_buffer(small_buffer, fixture_treebank_text, fixture_trees):
    assert get_config().simulseg_reader_buffer_size == 7
    assert read_treebank(fixture_treebank_text) == fixture_trees


def test_reader_small_buffer_multiline_tree(small_buffer, nested_tree_text, nested_tree):
    assert read_treebank(nested_tree_text + "\n" + nested_tree_text) == [nested_tree] * 2


def test_reader_error_offset_spans_trees(small_buffer):
    text = "(S (NN a))\n(S (NN b)))"
    with pytest.raises(TreebankParseException) as exc_info:
        read_treebank(text)
    assert exc_info.value.offset == 21


def test_reader_skips_empty_trees():
    with TreebankReader("(S (-NONE- *))\n(S (NN a))") as r:
        trees = list(r.trees())
        assert r.skipped == 1
    assert [t.words for t in trees] == [("a",)]


@pytest.mark.parametrize("treebank_input", ["not a treebank", "", None])
def test_reader_invalid_input(treebank_input):
    with pytest.raises(ValueError):
        with TreebankReader(treebank_input):
            pass


def test_instances_round_trip(tmpdir, nested_tree):
    instances = extract_instances(nested_tree, "s1")
    path = str(tmpdir.join("instances.tsv"))

    assert write_instances(instances, path) == 8
    assert read_instances(path) == instances


def test_read_instances_malformed(tmpdir):
    path = tmpdir.join("instances.tsv")
    path.write("1\t1\tNP\tI\n1\tx\tVP\tI ran\n")
    with pytest.raises(IclpFormatException) as exc_info:
        read_instances(str(path))
    assert exc_info.value.line_number == 2


def test_write_predictions(tmpdir):
    records = [
        PredictionRecord(sentence_id="1", word_index=1, predicted="NP", gold="NP"),
        PredictionRecord(sentence_id="1", word_index=2, predicted="VP"),
    ]
    path = str(tmpdir.join("predictions.tsv"))

    assert write_predictions(records, path) == 2
    with open(path, encoding="utf-8") as f:
        assert f.read() == "1\t1\tNP\tNP\n1\t2\tVP\n"
    assert load_external_predictions(path) == records


def test_session_logs_round_trip(tmpdir, pen_words, pen_labels, sov_translator):
    logs = [
        run_chunk_session(
            pen_words,
            RuleBasedPolicy(boundary_labels={"VP"}),
            sov_translator,
            pen_labels,
            sentence_id="1",
        ),
        run_waitk_session(pen_words, 2, sov_translator, sentence_id="2"),
        run_waitk_session(["I", "sold"], 1, sov_translator, sentence_id="3"),
    ]
    path = str(tmpdir.join("sessions.jsonl"))

    assert write_session_logs(logs, path) == 3
    loaded = list(read_session_logs(path))
    assert loaded == logs
    assert loaded[0].policy.boundary_labels == frozenset({"VP"})
    assert loaded[2].failed


def test_read_sentences_and_references(tmpdir):
    path = tmpdir.join("sentences.txt")
    path.write("I bought a pen .\n\nthank you\n")
    assert read_sentences(str(path)) == [["I", "bought", "a", "pen", "."], [], ["thank", "you"]]
    assert read_references(str(path)) == ["I bought a pen .", "", "thank you"]
