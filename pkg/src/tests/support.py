"""
support.py

Reusable oracles, generators and utilities for SimulSeg test cases
"""
import math
import os
import random
from typing import List, Sequence, Tuple

# base resource directory for "file fixtures" (treebanks, dictionaries, configs)
resources_directory = os.path.join(
    os.path.dirname(os.path.realpath(__file__)),
    "resources",
)

# toy grammar vocabulary used by generate_treebank
_DETERMINERS = ["the", "a", "this"]
_NOUNS = ["dog", "pen", "book", "cat", "park", "letter", "table"]
_ADJECTIVES = ["big", "red", "old", "new"]
_PRONOUNS = ["I", "she", "he", "they"]
_NAMES = ["John", "Mary", "Tokyo"]
_PAST_VERBS = ["bought", "saw", "liked", "wrote", "found"]
_MODALS = ["can", "will", "should"]
_BASE_VERBS = ["see", "buy", "write", "find"]
_PREPOSITIONS = ["in", "with", "on", "by"]


def _noun_phrase(rng: random.Random) -> str:
    choice = rng.random()
    if choice < 0.3:
        return f"(NP (DT {rng.choice(_DETERMINERS)}) (NN {rng.choice(_NOUNS)}))"
    if choice < 0.5:
        return (
            f"(NP (DT {rng.choice(_DETERMINERS)}) (JJ {rng.choice(_ADJECTIVES)})"
            f" (NN {rng.choice(_NOUNS)}))"
        )
    if choice < 0.75:
        return f"(NP (PRP {rng.choice(_PRONOUNS)}))"
    return f"(NP (NNP {rng.choice(_NAMES)}))"


def _prepositional_phrase(rng: random.Random) -> str:
    return f"(PP (IN {rng.choice(_PREPOSITIONS)}) {_noun_phrase(rng)})"


def _verb_phrase(rng: random.Random) -> str:
    choice = rng.random()
    if choice < 0.35:
        return f"(VP (VBD {rng.choice(_PAST_VERBS)}) {_noun_phrase(rng)})"
    if choice < 0.6:
        return (
            f"(VP (VBD {rng.choice(_PAST_VERBS)}) {_noun_phrase(rng)}"
            f" {_prepositional_phrase(rng)})"
        )
    if choice < 0.75:
        return f"(VP (VBD {rng.choice(_PAST_VERBS)}) {_prepositional_phrase(rng)})"
    return (
        f"(VP (MD {rng.choice(_MODALS)})"
        f" (VP (VB {rng.choice(_BASE_VERBS)}) {_noun_phrase(rng)}))"
    )


def generate_tree(rng: random.Random) -> str:
    """
    Generates a bracketed sentence from a small grammar with optional fronted prepositional phrases and
    subordinate clauses.
    """
    clause = f"{_noun_phrase(rng)} {_verb_phrase(rng)}"
    if rng.random() < 0.2:
        clause = f"{_prepositional_phrase(rng)} (, ,) {clause}"
    if rng.random() < 0.15:
        clause = f"{clause} (SBAR (IN because) (S {_noun_phrase(rng)} {_verb_phrase(rng)}))"
    return f"(S {clause} (. .))"


def generate_treebank(count: int, seed: int) -> str:
    """
    Generates a treebank of `count` bracketed trees, one per line.

    :param count: The number of trees
    :param seed: The random seed
    :return: The bracketed treebank text
    """
    rng = random.Random(seed)
    return "\n".join(generate_tree(rng) for _ in range(count)) + "\n"


def random_labels(rng: random.Random, length: int, labels: Sequence[str]) -> List[str]:
    """Returns a random label sequence"""
    return [rng.choice(labels) for _ in range(length)]


def random_words(rng: random.Random, length: int, vocabulary_size: int = 50) -> List[str]:
    """Returns a random word sequence drawn from a synthetic vocabulary"""
    return [f"w{rng.randrange(vocabulary_size)}" for _ in range(length)]


def reference_bleu(
    hypotheses: Sequence[str], references: Sequence[str], max_n: int = 4
) -> Tuple[float, float]:
    """
    Brute force corpus BLEU: every hypothesis n-gram is matched against a list of unused reference n-grams.

    :return: tuple of (BLEU, length ratio)
    """
    matches = [0] * max_n
    totals = [0] * max_n
    hypothesis_length = reference_length = 0

    for hypothesis, reference in zip(hypotheses, references):
        h = hypothesis.split()
        r = reference.split()
        hypothesis_length += len(h)
        reference_length += len(r)

        for n in range(1, max_n + 1):
            available = [r[i : i + n] for i in range(len(r) - n + 1)]
            for i in range(len(h) - n + 1):
                totals[n - 1] += 1
                ngram = h[i : i + n]
                if ngram in available:
                    available.remove(ngram)
                    matches[n - 1] += 1

    ratio = hypothesis_length / reference_length
    if 0 in matches:
        return 0.0, ratio

    brevity_penalty = 1.0
    if hypothesis_length < reference_length:
        brevity_penalty = math.exp(1 - reference_length / hypothesis_length)

    log_precision = sum(math.log(m / t) for m, t in zip(matches, totals)) / max_n
    return 100.0 * brevity_penalty * math.exp(log_precision), ratio


def reference_bpe(
    words: Sequence[str], num_merges: int, end_of_word: str = "</w>"
) -> List[Tuple[str, str]]:
    """
    Step by step BPE oracle: pairs are recounted over every word occurrence before each merge.

    :return: the ordered merges
    """
    segmented = [list(w[:-1]) + [w[-1] + end_of_word] for w in words]
    merges: List[Tuple[str, str]] = []

    for _ in range(num_merges):
        counts = {}
        for symbols in segmented:
            for i in range(len(symbols) - 1):
                pair = (symbols[i], symbols[i + 1])
                counts[pair] = counts.get(pair, 0) + 1
        if not counts:
            break

        best_count = max(counts.values())
        best = sorted(p for p, c in counts.items() if c == best_count)[0]
        merges.append(best)

        for index, symbols in enumerate(segmented):
            merged = []
            i = 0
            while i < len(symbols):
                if symbols[i : i + 2] == list(best):
                    merged.append(best[0] + best[1])
                    i += 2
                else:
                    merged.append(symbols[i])
                    i += 1
            segmented[index] = merged

    return merges


def reference_segment(
    labels: Sequence[str], boundary_labels: Sequence[str], min_len: int
) -> List[int]:
    """
    Rule based segmentation oracle written from the rule statements.
    """
    boundaries = []
    chunk_length = 1
    for i in range(1, len(labels)):
        starts_boundary = labels[i] in boundary_labels
        follows_boundary = labels[i - 1] in boundary_labels
        if starts_boundary and not follows_boundary and chunk_length >= min_len:
            boundaries.append(i)
            chunk_length = 1
        else:
            chunk_length += 1
    if labels:
        boundaries.append(len(labels))
    return boundaries
