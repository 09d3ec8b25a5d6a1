"""
test_harness.py

Tests pipeline configuration, end to end runs and quality/latency sweeps.
"""
import os
import re

import pandas as pd
import pytest

from linuxforhealth.simulseg.harness import (
    PipelineConfigException,
    SweepSpec,
    check_inputs,
    load_pipeline_config,
    prepare_corpus,
    rescore_sessions,
    run_pipeline,
    sweep,
)
from linuxforhealth.simulseg.iclp import save_model, train
from linuxforhealth.simulseg.io import read_session_logs, read_treebank
from linuxforhealth.simulseg.segmenter import RuleBasedPolicy
from linuxforhealth.simulseg.treebank import extract_instances
from tests.support import resources_directory


@pytest.fixture
def echo_sentences(tmpdir) -> str:
    path = tmpdir.join("sentences.txt")
    path.write("a b c d e f\ng h i j\nk l m n o p q\n")
    return str(path)


def _read_bytes(path: str) -> bytes:
    with open(path, "rb") as f:
        return f.read()


def test_load_pipeline_config(pen_pipeline_config):
    config = load_pipeline_config(pen_pipeline_config)
    assert config.treebank == os.path.join(resources_directory, "pen.mrg")
    assert config.translator.dictionary == os.path.join(resources_directory, "pen_gloss.tsv")
    assert config.policy == RuleBasedPolicy(boundary_labels={"VP"}, min_len=1)
    assert config.labels.source == "oracle"


def test_load_pipeline_config_overrides(pen_pipeline_config, tmpdir):
    config = load_pipeline_config(
        pen_pipeline_config, {"policy.min_len": 2, "output_dir": str(tmpdir)}
    )
    assert config.policy.min_len == 2
    assert config.output_dir == str(tmpdir)


@pytest.mark.parametrize(
    "overrides",
    [
        {"policy": {"variant": "greedy"}},
        {"policy.min_len": 0},
        {"version": 2},
        {"labels.source": "model"},
        {"treebank": None},
        {"unknown_key": 1},
    ],
)
def test_invalid_pipeline_config(pen_pipeline_config, overrides):
    with pytest.raises(PipelineConfigException):
        load_pipeline_config(pen_pipeline_config, overrides)


def test_missing_config_file():
    with pytest.raises(PipelineConfigException):
        load_pipeline_config("/does/not/exist.yaml")


def test_check_inputs_missing_file(pen_pipeline_config):
    config = load_pipeline_config(pen_pipeline_config, {"references": "missing.txt"})
    with pytest.raises(PipelineConfigException):
        check_inputs(config)


def test_check_inputs_requires_merges_for_subwords(pen_pipeline_config):
    config = load_pipeline_config(
        pen_pipeline_config, {"policy": {"variant": "fixed", "f": 2, "unit": "subword"}}
    )
    with pytest.raises(PipelineConfigException):
        check_inputs(config)


def test_empty_sweep_range(pen_pipeline_config):
    config = load_pipeline_config(
        pen_pipeline_config,
        {"sweep": [{"policy": {"variant": "waitk"}, "range": {"start": 5, "stop": 2}}]},
    )
    with pytest.raises(PipelineConfigException):
        check_inputs(config)


def test_sweep_spec_requires_one_value_source():
    with pytest.raises(ValueError):
        SweepSpec(policy={"variant": "waitk"}, values=[1], range={"start": 1, "stop": 2})
    with pytest.raises(ValueError):
        SweepSpec(policy={"variant": "waitk"})
    with pytest.raises(ValueError):
        SweepSpec(policy={"variant": "greedy"}, values=[1])


def test_sweep_spec_policies():
    spec = SweepSpec(policy={"variant": "fixed"}, range={"start": 2, "stop": 6, "step": 2})
    assert [p.f for p in spec.policies()] == [2, 4, 6]


def test_prepare_corpus_oracle_labels(pen_pipeline_config, pen_labels):
    corpus = prepare_corpus(load_pipeline_config(pen_pipeline_config))
    assert len(corpus.sentences) == 1
    assert list(corpus.sentences[0].labels) == pen_labels
    assert corpus.references == ("watashi wa pen wo katta .",)


def test_run_pipeline_pen_sentence(pen_pipeline_config, tmpdir):
    config = load_pipeline_config(pen_pipeline_config, {"output_dir": str(tmpdir)})
    result = run_pipeline(config)

    assert result.quality.bleu == pytest.approx(100.0)
    assert result.latency.corpus_al == pytest.approx(13 / 6)
    assert result.histogram == {1: 1, 4: 1}
    assert result.boundary_count == 1

    for name in ("sessions.jsonl", "report.txt", "report.csv", "histogram.csv"):
        assert tmpdir.join(name).check()
    logs = list(read_session_logs(str(tmpdir.join("sessions.jsonl"))))
    assert logs == list(result.logs)


def test_run_pipeline_full_sentence_chunk(pen_pipeline_config, tmpdir):
    config = load_pipeline_config(
        pen_pipeline_config,
        {"policy": {"variant": "fixed", "f": 5}, "output_dir": str(tmpdir)},
    )
    result = run_pipeline(config)
    assert result.latency.corpus_al == pytest.approx(5.0)
    assert result.quality.bleu == pytest.approx(100.0)


def test_run_pipeline_all_failed(pen_pipeline_config, tmpdir):
    config = load_pipeline_config(
        pen_pipeline_config,
        {
            "translator": {"variant": "sov", "entries": {"I": {"gloss": ["watashi"]}}},
            "output_dir": str(tmpdir),
        },
    )
    result = run_pipeline(config)
    assert result.all_failed
    assert result.quality is None
    assert result.latency.failed_count == 1


def test_run_pipeline_requires_policy(echo_sentences, tmpdir):
    with pytest.raises(PipelineConfigException):
        run_pipeline({"sentences": echo_sentences, "output_dir": str(tmpdir)})


def test_run_pipeline_model_labels(fixture_treebank_text, tmpdir):
    treebank = tmpdir.join("corpus.mrg")
    treebank.write(fixture_treebank_text)

    trees = read_treebank(str(treebank))
    instances = [
        instance for i, t in enumerate(trees, start=1) for instance in extract_instances(t, str(i))
    ]
    model_path = str(tmpdir.join("iclp.model"))
    save_model(train(instances, epochs=2, seed=0), model_path)

    result = run_pipeline(
        {
            "treebank": str(treebank),
            "labels": {"source": "model", "model": model_path},
            "policy": {"variant": "rule", "boundary_labels": ["S", "VP"], "min_len": 2},
            "output_dir": str(tmpdir.join("out")),
        }
    )
    # the echo translator reproduces its full-sentence references
    assert result.quality.bleu == pytest.approx(100.0)
    assert result.failure_count == 0
    assert len(result.logs) == 300


def test_run_pipeline_subword_policy(echo_sentences, tmpdir):
    result = run_pipeline(
        {
            "sentences": echo_sentences,
            "policy": {"variant": "fixed", "f": 2, "unit": "subword"},
            "num_merges": 5,
            "output_dir": str(tmpdir.join("out")),
        }
    )
    assert result.failure_count == 0
    assert all(log.unit == "subword" for log in result.logs)


def test_sweep_rule_min_len(pen_pipeline_config, tmpdir):
    config = load_pipeline_config(
        pen_pipeline_config,
        {
            "sweep": [
                {"policy": {"variant": "rule", "boundary_labels": ["VP"]}, "values": [1, 2]}
            ],
            "output_dir": str(tmpdir),
        },
    )
    rows = sweep(config, workers=1)

    assert [(r.policy, r.hyperparameter) for r in rows] == [("rule-VP", 1), ("rule-VP", 2)]
    assert rows[0].al == pytest.approx(13 / 6)
    assert rows[1].al == pytest.approx(5.0)
    assert all(r.bleu == pytest.approx(100.0) for r in rows)
    assert tmpdir.join("runs", "rule-VP-1.jsonl").check()

    frame = pd.read_csv(str(tmpdir.join("sweep.csv")))
    assert list(frame["hyperparameter"]) == [1, 2]
    scatter = pd.read_csv(str(tmpdir.join("scatter.csv")))
    assert list(scatter.columns) == ["x", "y", "series", "value"]
    assert list(scatter["value"]) == [1, 2]


def test_sweep_waitk_echo(echo_sentences, tmpdir):
    rows = sweep(
        {
            "sentences": echo_sentences,
            "sweep": [{"policy": {"variant": "waitk"}, "values": [3, 1, 2]}],
            "output_dir": str(tmpdir),
        }
    )
    assert [r.hyperparameter for r in rows] == [1, 2, 3]
    for row in rows:
        assert row.al == pytest.approx(row.hyperparameter)
        assert row.bleu == pytest.approx(100.0)
        assert row.failures == 0


def test_sweep_is_deterministic(echo_sentences, tmpdir):
    config = {
        "sentences": echo_sentences,
        "sweep": [
            {"policy": {"variant": "waitk"}, "range": {"start": 1, "stop": 3}},
            {"policy": {"variant": "fixed"}, "values": [2, 4]},
        ],
    }
    first = str(tmpdir.join("first"))
    second = str(tmpdir.join("second"))
    sweep({**config, "output_dir": first}, workers=1)
    sweep({**config, "output_dir": second}, workers=2)

    for name in ("sweep.csv", "scatter.csv", os.path.join("runs", "waitk-2.jsonl")):
        assert _read_bytes(os.path.join(first, name)) == _read_bytes(os.path.join(second, name))


def test_sweep_without_sweep_section(pen_pipeline_config):
    with pytest.raises(PipelineConfigException):
        sweep(load_pipeline_config(pen_pipeline_config))


def test_sweep_plot_labels_points_with_values(pen_pipeline_config, tmpdir):
    pytest.importorskip("matplotlib")
    config = load_pipeline_config(
        pen_pipeline_config,
        {
            "sweep": [{"policy": {"variant": "waitk"}, "values": [1, 3]}],
            "output_dir": str(tmpdir),
        },
    )
    sweep(config, workers=1)

    svg = tmpdir.join("scatter.svg").read()
    texts = re.findall(r"<text[^>]*>([^<]*)</text>", svg)
    assert {"1", "3", "waitk"} <= set(texts)


@pytest.fixture
def fixture_treebank_file(tmpdir, fixture_treebank_text) -> str:
    treebank = tmpdir.join("corpus.mrg")
    treebank.write(fixture_treebank_text)
    return str(treebank)


def test_sweep_min_len_boundary_counts(fixture_treebank_file, tmpdir):
    rows = sweep(
        {
            "treebank": fixture_treebank_file,
            "sweep": [
                {
                    "policy": {"variant": "rule", "boundary_labels": ["S", "VP"]},
                    "range": {"start": 1, "stop": 5},
                }
            ],
            "output_dir": str(tmpdir.join("out")),
        },
        workers=1,
    )
    by_min_len = sorted(rows, key=lambda r: r.hyperparameter)
    assert [r.hyperparameter for r in by_min_len] == [1, 2, 3, 4, 5]

    counts = [r.boundaries for r in by_min_len]
    assert counts == sorted(counts, reverse=True)
    assert counts[0] > counts[-1]
    assert all(r.failures == 0 for r in rows)


def test_rule_histogram_has_mass_above_one(fixture_treebank_file, tmpdir):
    result = run_pipeline(
        {
            "treebank": fixture_treebank_file,
            "policy": {"variant": "rule", "boundary_labels": ["S", "VP"], "min_len": 2},
            "output_dir": str(tmpdir.join("out")),
        }
    )
    histogram = result.histogram
    assert sum(histogram.values()) >= len(result.logs)
    assert sum(count for length, count in histogram.items() if length > 1) > histogram.get(1, 0)

    frame = pd.read_csv(str(tmpdir.join("out", "histogram.csv")))
    assert frame["count"].sum() == sum(histogram.values())


def test_rescore_sessions_matches_run(pen_pipeline_config, tmpdir):
    config = load_pipeline_config(pen_pipeline_config, {"output_dir": str(tmpdir)})
    result = run_pipeline(config)

    rescored = rescore_sessions(
        str(tmpdir.join("sessions.jsonl")),
        os.path.join(resources_directory, "pen_references.txt"),
    )
    assert rescored.latency == result.latency
    assert rescored.quality == result.quality
    assert rescored.histogram == result.histogram
    assert rescored.boundary_count == result.boundary_count
    assert rescore_sessions(str(tmpdir.join("sessions.jsonl"))).quality is None


def test_rescore_sessions_errors(pen_pipeline_config, tmpdir):
    run_pipeline(load_pipeline_config(pen_pipeline_config, {"output_dir": str(tmpdir)}))
    references = tmpdir.join("references.txt")
    references.write("a\nb\n")

    with pytest.raises(PipelineConfigException):
        rescore_sessions(str(tmpdir.join("sessions.jsonl")), str(references))

    empty = tmpdir.join("empty.jsonl")
    empty.write("")
    with pytest.raises(PipelineConfigException):
        rescore_sessions(str(empty))
