"""
test_config.py

Tests environment driven SimulSeg settings.
"""
import pytest
from pydantic import ValidationError

from linuxforhealth.simulseg.config import (
    SimulSegConfig,
    get_api_config,
    get_config,
)
from linuxforhealth.simulseg.subword import learn_bpe


@pytest.fixture(autouse=True)
def clear_config_cache():
    get_config.cache_clear()
    get_api_config.cache_clear()
    yield
    get_config.cache_clear()
    get_api_config.cache_clear()


def test_defaults():
    config = get_config()
    assert config.simulseg_reader_buffer_size == 1024000
    assert config.simulseg_workers == 1
    assert config.simulseg_end_of_word == "</w>"
    assert get_api_config().simulseg_uvicorn_port == 5000


def test_environment_overrides(monkeypatch):
    monkeypatch.setenv("SIMULSEG_WORKERS", "3")
    monkeypatch.setenv("simulseg_external_timeout", "2.5")
    config = get_config()
    assert config.simulseg_workers == 3
    assert config.simulseg_external_timeout == 2.5


def test_end_of_word_marker_reaches_bpe(monkeypatch):
    monkeypatch.setenv("SIMULSEG_END_OF_WORD", "@@")
    table = learn_bpe(["ab", "ab"], 1)
    assert table.end_of_word == "@@"
    assert table.merges == (("a", "b@@"),)


@pytest.mark.parametrize(
    "name, value",
    [
        ("SIMULSEG_READER_BUFFER_SIZE", "0"),
        ("SIMULSEG_WORKERS", "0"),
        ("SIMULSEG_EXTERNAL_TIMEOUT", "-1"),
    ],
)
def test_invalid_settings(monkeypatch, name, value):
    monkeypatch.setenv(name, value)
    with pytest.raises(ValidationError):
        SimulSegConfig()
