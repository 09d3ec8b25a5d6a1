"""
conftest.py

Pytest Global Fixtures
"""
import os
from typing import List

import pytest

from linuxforhealth.simulseg.io import read_treebank
from linuxforhealth.simulseg.translator import (
    GlossDictionary,
    GlossEntry,
    SovToyTranslator,
)
from linuxforhealth.simulseg.treebank import ParseTree, parse_bracketed
from tests.support import generate_treebank, resources_directory


@pytest.fixture
def nested_tree_text() -> str:
    return "\n".join(
        [
            "( (S (NP-SBJ (PRP You))",
            "     (VP (MD can)",
            "         (VP (VB save)",
            "             (NP (NN time))",
            "             (PP (IN by)",
            "                 (S-NOM (VP (VBG doing)",
            "                            (NP (DT this)))))))",
            "     (. .)) )",
        ]
    )


@pytest.fixture
def nested_tree(nested_tree_text) -> ParseTree:
    return parse_bracketed(nested_tree_text)[0]


@pytest.fixture
def nested_labels() -> List[str]:
    return ["NP", "VP", "VP", "NP", "PP", "S", "NP", "."]


@pytest.fixture
def pen_tree() -> ParseTree:
    return parse_bracketed(
        "(S (NP (PRP I)) (VP (VBD bought) (NP (DT a) (NN pen))) (. .))"
    )[0]


@pytest.fixture
def pen_words() -> List[str]:
    return ["I", "bought", "a", "pen", "."]


@pytest.fixture
def pen_labels() -> List[str]:
    return ["NP", "VP", "NP", "NN", "."]


@pytest.fixture
def gloss_dictionary() -> GlossDictionary:
    return GlossDictionary(
        entries={
            "I": GlossEntry(gloss=("watashi", "wa"), category="other"),
            "bought": GlossEntry(gloss=("katta",), category="verb"),
            "a": GlossEntry(gloss=(), category="other"),
            "pen": GlossEntry(gloss=("pen", "wo"), category="other"),
            ".": GlossEntry(gloss=(".",), category="punct"),
        }
    )


@pytest.fixture
def sov_translator(gloss_dictionary) -> SovToyTranslator:
    return SovToyTranslator(gloss_dictionary)


@pytest.fixture(scope="session")
def fixture_treebank_text() -> str:
    """Generates a synthetic treebank of 300 sentences (well above 1,000 ICLP instances)"""
    return generate_treebank(300, seed=7)


@pytest.fixture(scope="session")
def fixture_trees(fixture_treebank_text) -> List[ParseTree]:
    return read_treebank(fixture_treebank_text)


@pytest.fixture
def pen_pipeline_config() -> str:
    return os.path.join(resources_directory, "pen_pipeline.yaml")
