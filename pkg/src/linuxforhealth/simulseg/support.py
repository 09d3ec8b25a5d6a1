"""
support.py

Convenience functions for SimulSeg Processing.
"""
import functools
import os
from typing import Iterator, List, Optional

from pydantic import validator

from .models import TargetUnit


def expand_path(file_path: str) -> str:
    """
    Expands environment and user variables within a file path.

    :param file_path: The file path to expand.
    :return: The expanded file path
    """
    return os.path.expandvars(os.path.expanduser(str(file_path)))


def is_bracketed_data(input_data: Optional[str]) -> bool:
    """
    Returns True if the input data appears to be bracketed (Penn Treebank style) tree text.

    :param input_data: Input data to evaluate
    :return: True if the input data starts with an opening bracket, otherwise False
    """

    return input_data.lstrip().startswith("(") if input_data else False


def is_file(file_path: Optional[str]) -> bool:
    """
    Returns True if the file path exists and is a regular file.
    Environment and user variables are expanded within the file path.

    :param file_path: The file path to test.
    :return: True if the file path is a file, otherwise False
    """
    if not file_path:
        return False

    try:
        expanded_path = expand_path(file_path)
    except TypeError:
        return False

    return os.path.exists(expanded_path) and not os.path.isdir(expanded_path)


def tokenize(text: str, unit: TargetUnit = TargetUnit.WORD) -> List[str]:
    """
    Splits text into scoring units.

    Word units split on whitespace. Character units drop whitespace and return every remaining character.

    :param text: The text to split.
    :param unit: The unit type, word or character.
    :return: list of units
    """
    if unit == TargetUnit.CHARACTER:
        return [c for c in text if not c.isspace()]
    return text.split()


def expand_characters(tokens: List[str], values: List) -> List:
    """
    Repeats each value once per character of its token.
    Used to carry per-token read counts onto character units.

    Example:
        expand_characters(["pen", "wo"], [2, 5])
        # [2, 2, 2, 5, 5]

    :param tokens: The tokens
    :param values: One value per token
    :return: One value per character
    """
    if len(tokens) != len(values):
        raise ValueError(f"token count {len(tokens)} != value count {len(values)}")

    expanded = []
    for token, value in zip(tokens, values):
        expanded.extend([value] * len(token))
    return expanded


def read_lines(file_path: str) -> Iterator[str]:
    """
    Streams stripped, non-empty lines from a UTF-8 text file.

    :param file_path: The path to the file
    :return: Iterator of lines
    """
    with open(expand_path(file_path), "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                yield line


# partial function used to "register" common field validator functions
# common validator functions have the signature (cls, v, values)
field_validator = functools.partial(validator, allow_reuse=True)
