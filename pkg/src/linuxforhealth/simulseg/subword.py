"""
subword.py

Byte pair encoding (BPE). Learns an ordered merge table from a word corpus and splits words into subwords.

Word final symbols carry an end-of-word marker while merges are learned and applied. Applied subwords expose the
marker as a flag, so the end-of-word subword of a word is a flag lookup.
"""
import logging
from collections import Counter
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from pydantic import Field, validator

from .config import get_config
from .models import SimulSegModel
from .support import expand_path

logger = logging.getLogger(__name__)

MERGES_VERSION_PREFIX = "#version"


class MergeTable(SimulSegModel):
    """
    An ordered list of symbol pair merges. Merges are applied in learned order.
    """

    merges: Tuple[Tuple[str, str], ...] = ()
    end_of_word: str = Field(default_factory=lambda: get_config().simulseg_end_of_word)

    @validator("merges", each_item=True)
    def validate_merge(cls, v: Tuple[str, str]) -> Tuple[str, str]:
        """Validates that merge symbols are non-empty and contain no whitespace"""
        for symbol in v:
            if not symbol or any(c.isspace() for c in symbol):
                raise ValueError(f"invalid merge symbol {symbol!r}")
        return v

    @property
    def vocabulary_size(self) -> int:
        """Returns the number of symbols created by merges"""
        return len({left + right for left, right in self.merges})

    def __len__(self) -> int:
        return len(self.merges)


class Subword(SimulSegModel):
    """
    A subword of a word. end_of_word is set on the last subword of each word.
    """

    text: str = Field(min_length=1)
    end_of_word: bool = False

    def symbol(self, end_of_word_marker: str) -> str:
        """Returns the subword in merges file form, with the marker appended to word final subwords"""
        return self.text + end_of_word_marker if self.end_of_word else self.text


def _word_symbols(word: str, end_of_word: str) -> List[str]:
    """Splits a word into characters, appending the end-of-word marker to the last one"""
    symbols = list(word)
    symbols[-1] = symbols[-1] + end_of_word
    return symbols


def _merge_pair(symbols: List[str], left: str, right: str) -> List[str]:
    """Merges every non-overlapping occurrence of (left, right), scanning left to right"""
    merged = []
    i = 0
    while i < len(symbols):
        if i < len(symbols) - 1 and symbols[i] == left and symbols[i + 1] == right:
            merged.append(left + right)
            i += 2
        else:
            merged.append(symbols[i])
            i += 1
    return merged


def learn_bpe(
    corpus: Iterable[str], num_merges: int, end_of_word: Optional[str] = None
) -> MergeTable:
    """
    Learns a merge table. Each iteration merges the most frequent adjacent symbol pair, ties resolving to the
    lexicographically smallest pair. Learning stops early when no pair remains.

    :param corpus: The word tokens of the corpus
    :param num_merges: The number of merges to learn. Zero returns an empty table.
    :param end_of_word: The end-of-word marker. Defaults to the configured marker.
    :return: The MergeTable
    :raises: ValueError if the corpus is empty or num_merges is negative
    """
    end_of_word = end_of_word or get_config().simulseg_end_of_word
    word_counts = Counter(w for w in corpus if w)
    if not word_counts:
        raise ValueError("cannot learn BPE merges from an empty corpus")
    if num_merges < 0:
        raise ValueError(f"invalid merge count {num_merges}")

    vocabulary: Dict[Tuple[str, ...], int] = {
        tuple(_word_symbols(w, end_of_word)): count for w, count in word_counts.items()
    }
    merges: List[Tuple[str, str]] = []

    for _ in range(num_merges):
        pair_counts: Counter = Counter()
        for symbols, count in vocabulary.items():
            for pair in zip(symbols, symbols[1:]):
                pair_counts[pair] += count

        if not pair_counts:
            logger.info("no pairs left after %d merges", len(merges))
            break

        best = min(pair_counts, key=lambda pair: (-pair_counts[pair], pair))
        merges.append(best)

        merged_vocabulary: Dict[Tuple[str, ...], int] = {}
        for symbols, count in vocabulary.items():
            key = tuple(_merge_pair(list(symbols), *best))
            merged_vocabulary[key] = merged_vocabulary.get(key, 0) + count
        vocabulary = merged_vocabulary

    return MergeTable(merges=tuple(merges), end_of_word=end_of_word)


def apply_bpe(table: MergeTable, words: Sequence[str]) -> List[Subword]:
    """
    Splits words into subwords by applying the merges in table order.

    :param table: The merge table
    :param words: The words to split
    :return: list of Subword, the last subword of every word flagged end_of_word
    """
    subwords: List[Subword] = []
    for word in words:
        symbols = _word_symbols(word, table.end_of_word)
        for left, right in table.merges:
            symbols = _merge_pair(symbols, left, right)

        for symbol in symbols[:-1]:
            subwords.append(Subword(text=symbol))
        subwords.append(
            Subword(text=symbols[-1][: -len(table.end_of_word)], end_of_word=True)
        )
    return subwords


def join_subwords(subwords: Sequence[Subword]) -> List[str]:
    """
    Joins subwords back into words at end-of-word flags.

    :param subwords: The subwords
    :return: The words
    :raises: ValueError if the last subword does not end a word
    """
    words: List[str] = []
    pending = ""
    for subword in subwords:
        pending += subword.text
        if subword.end_of_word:
            words.append(pending)
            pending = ""

    if pending:
        raise ValueError(f"subword sequence ends inside a word: {pending!r}")
    return words


def count_subwords(table: MergeTable, words: Sequence[str]) -> List[int]:
    """
    Returns the number of subwords of every word.
    """
    counts = []
    for word in words:
        counts.append(len(apply_bpe(table, [word])))
    return counts


def save_merges(table: MergeTable, path: str) -> None:
    """
    Writes a merges file: a version line, then one "left right" pair per line in merge order.
    """
    with open(expand_path(path), "w", encoding="utf-8") as f:
        f.write(f"{MERGES_VERSION_PREFIX}: 0.2\n")
        for left, right in table.merges:
            f.write(f"{left} {right}\n")


def load_merges(path: str, end_of_word: Optional[str] = None) -> MergeTable:
    """
    Reads a merges file. A leading "#version" line is ignored.

    :param path: The merges file path
    :param end_of_word: The end-of-word marker used by the merges. Defaults to the configured marker.
    :return: The MergeTable
    :raises: ValueError if a line does not hold exactly two symbols
    """
    merges = []
    with open(expand_path(path), "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            line = line.strip()
            if not line or (line_number == 1 and line.startswith(MERGES_VERSION_PREFIX)):
                continue

            symbols = line.split()
            if len(symbols) != 2:
                raise ValueError(f"{path} line {line_number}: expected two symbols")
            merges.append((symbols[0], symbols[1]))

    return MergeTable(
        merges=tuple(merges),
        end_of_word=end_of_word or get_config().simulseg_end_of_word,
    )
