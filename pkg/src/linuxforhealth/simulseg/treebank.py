"""
treebank.py

Parses bracketed (Penn Treebank style) constituency trees, defines the pre-order "next constituent" of a sentence
prefix and generates incremental constituent label prediction (ICLP) instances.

Trees are parsed with a BracketedTreeParser:

parser = BracketedTreeParser()
for tree in parser.parse("(S (NP (PRP I)) (VP (VBD bought) (NP (DT a) (NN pen))) (. .))"):
    print(tree.words)

Each top level tree is read with nltk's Tree.fromstring. Label normalization strips function tags and coindexation
suffixes (NP-SBJ-1 -> NP, NP=2 -> NP). Empty elements, nodes labeled -NONE-, are pruned along with any node left
without children.
"""
import logging
import math
import random
import re
import sys
from typing import Dict, Iterator, List, Optional, Tuple

from nltk.tree import Tree
from pydantic import Field, root_validator

from .models import SimulSegModel
from .support import field_validator
from .validators import validate_non_empty_tokens

logger = logging.getLogger(__name__)

EMPTY_ELEMENT_LABEL = "-NONE-"

# labels which contain "-" but are not function tagged
ATOMIC_LABELS = frozenset({EMPTY_ELEMENT_LABEL, "-LRB-", "-RRB-"})

_LABEL_SUFFIX_PATTERN = re.compile(r"[-=]")


class TreebankParseException(Exception):
    """Raised when bracketed tree text is malformed"""

    def __init__(self, message: str, offset: int) -> None:
        """
        :param message: The error description
        :param offset: The byte offset of the offending token, or of the enclosing tree, within the input
        """
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def normalize_label(label: str) -> str:
    """
    Strips function tags and coindexation suffixes from a constituent label.

    Example:
        normalize_label("NP-SBJ-1") # NP
        normalize_label("NP=2") # NP
        normalize_label("-NONE-") # -NONE-

    :param label: The raw treebank label
    :return: The bare label
    """
    if label in ATOMIC_LABELS:
        return label

    bare_label = _LABEL_SUFFIX_PATTERN.split(label, maxsplit=1)[0]
    return bare_label or label


class ParseNode(SimulSegModel):
    """
    A constituent or preterminal (POS) node.
    Preterminals carry the word; every other node carries children.
    """

    label: str = Field(min_length=1)
    children: Tuple["ParseNode", ...] = ()
    word: Optional[str] = None

    @root_validator(skip_on_failure=True)
    def validate_word_or_children(cls, values: Dict) -> Dict:
        """
        Validates that a node has either children or a word, never both and never neither.

        :param values: The validated node values
        """
        has_children = bool(values.get("children"))
        word = values.get("word")

        if has_children and word is not None:
            raise ValueError(f"node {values.get('label')} has both children and a word")
        if not has_children and not word:
            raise ValueError(f"node {values.get('label')} has neither children nor a word")
        return values

    @property
    def is_terminal(self) -> bool:
        """Returns True if the node is a preterminal which carries a word"""
        return self.word is not None

    def to_nltk(self) -> Tree:
        """Converts the node to an nltk Tree"""
        if self.is_terminal:
            return Tree(self.label, [self.word])
        return Tree(self.label, [c.to_nltk() for c in self.children])

    def terminals(self) -> List[str]:
        """Returns the node's words in order"""
        return self.to_nltk().leaves()

    def to_bracketed(self) -> str:
        """
        Generates the single line bracketed representation of the node.

        :return: bracketed text such as "(NP (DT a) (NN pen))"
        """
        return self.to_nltk().pformat(margin=sys.maxsize)


ParseNode.update_forward_refs()


class ConstituentSpan(SimulSegModel):
    """
    The word span of a tree node. Word indices are 1-based and inclusive.
    """

    label: str
    start: int = Field(ge=1)
    end: int = Field(ge=1)


class ParseTree(SimulSegModel):
    """
    A labeled constituency tree over a tokenized sentence.

    `spans` lists every node in pre-order (root first). The start of the k-th span is the leftmost terminal index of
    the k-th node visited in pre-order.
    """

    root: ParseNode
    words: Tuple[str, ...]
    spans: Tuple[ConstituentSpan, ...]

    @root_validator(skip_on_failure=True)
    def validate_tree(cls, values: Dict) -> Dict:
        """
        Validates that words equal the in-order terminals of the root and that the root span covers the sentence.

        :param values: The validated tree values
        """
        root: ParseNode = values["root"]
        words = values["words"]
        spans = values["spans"]

        if tuple(root.terminals()) != tuple(words):
            raise ValueError("words do not match the terminals of the tree")
        if not spans or spans[0].start != 1 or spans[0].end != len(words):
            raise ValueError("the root span must cover the sentence")
        return values

    @classmethod
    def from_root(cls, root: ParseNode) -> "ParseTree":
        """
        Creates a ParseTree from a root node, computing words and pre-order spans.

        :param root: The root node
        :return: The ParseTree
        """
        tree = root.to_nltk()
        spans: List[ConstituentSpan] = []
        leaves_read = 0

        # pre-order visits a node before any of its leaves
        for position in tree.treepositions("preorder"):
            subtree = tree[position]
            if isinstance(subtree, str):
                leaves_read += 1
                continue
            start = leaves_read + 1
            spans.append(
                ConstituentSpan(
                    label=subtree.label(), start=start, end=start + len(subtree.leaves()) - 1
                )
            )

        return cls(root=root, words=tuple(tree.leaves()), spans=tuple(spans))

    @property
    def leftmost_leaf_index(self) -> Tuple[int, ...]:
        """Returns the 1-based index of the first terminal of every node, in pre-order"""
        return tuple(span.start for span in self.spans)

    def to_bracketed(self) -> str:
        """Generates the bracketed representation of the tree"""
        return self.root.to_bracketed()

    def __len__(self) -> int:
        return len(self.words)


class PrefixInstance(SimulSegModel):
    """
    An ICLP training/evaluation pair: a word prefix and the gold label of the next constituent.

    word_index is the 1-based index i of the label c_i. With one look-ahead the prefix is w_1..w_i, without look-ahead
    it is w_1..w_(i-1).
    """

    sentence_id: str = Field(min_length=1)
    word_index: int = Field(ge=1)
    prefix: Tuple[str, ...]
    label: str = Field(min_length=1)

    _validate_prefix_tokens = field_validator("prefix")(validate_non_empty_tokens)

    @root_validator(skip_on_failure=True)
    def validate_prefix(cls, values: Dict) -> Dict:
        """Validates that the prefix is non-empty"""
        if not values.get("prefix"):
            raise ValueError("instance prefix is empty")
        return values


def _byte_offset(text: str, position: int, base_offset: int) -> int:
    """Converts a character position within text to an absolute byte offset"""
    return base_offset + len(text[:position].encode("utf-8"))


def _top_level_trees(text: str, base_offset: int) -> Iterator[Tuple[str, int]]:
    """
    Splits text into its top level bracketed trees.

    :param text: The bracketed tree text
    :param base_offset: The byte offset of text within a larger input
    :return: Iterator of (tree text, byte offset of the tree)
    :raises: TreebankParseException if a bracket is unbalanced or text appears outside of a tree
    """
    depth = 0
    start = 0
    for position, character in enumerate(text):
        if character == "(":
            if depth == 0:
                start = position
            depth += 1
        elif character == ")":
            if depth == 0:
                raise TreebankParseException(
                    "unbalanced closing bracket", _byte_offset(text, position, base_offset)
                )
            depth -= 1
            if depth == 0:
                yield text[start : position + 1], _byte_offset(text, start, base_offset)
        elif depth == 0 and not character.isspace():
            raise TreebankParseException(
                f"text {character!r} outside of a bracketed tree",
                _byte_offset(text, position, base_offset),
            )

    if depth:
        raise TreebankParseException(
            "unclosed bracket", _byte_offset(text, start, base_offset)
        )


def _to_parse_node(tree: Tree, is_top_level: bool, offset: int) -> Optional[ParseNode]:
    """
    Prunes and validates an nltk Tree whose labels are already normalized.

    :param tree: The nltk Tree
    :param is_top_level: True if the tree is a complete top level tree
    :param offset: The byte offset of the top level tree, used in error messages
    :return: The ParseNode or None if the node was pruned
    :raises: TreebankParseException if a node is unlabeled, empty or mixes a word with children
    """
    label = tree.label()

    if not label:
        if not is_top_level:
            raise TreebankParseException("unlabeled constituent", offset)
        if not len(tree):
            return None
        if len(tree) > 1 or isinstance(tree[0], str):
            raise TreebankParseException("unlabeled root wraps more than one tree", offset)
        return _to_parse_node(tree[0], False, offset)

    if label == EMPTY_ELEMENT_LABEL:
        return None

    words = [child for child in tree if isinstance(child, str)]
    if words:
        if len(tree) > 1:
            raise TreebankParseException(
                f"constituent {label} must hold a single word or only children", offset
            )
        return ParseNode(label=label, word=words[0])

    if not len(tree):
        raise TreebankParseException(f"constituent {label} has no children or word", offset)

    children = [_to_parse_node(child, False, offset) for child in tree]
    children = [c for c in children if c is not None]
    # every child was pruned
    if not children:
        return None
    return ParseNode(label=label, children=tuple(children))


class BracketedTreeParser:
    """
    Parses bracketed constituency trees.

    The parser tracks the number of trees skipped because every leaf was pruned.
    """

    def __init__(self) -> None:
        self.skipped: int = 0
        self.parsed: int = 0

    def parse(self, text: str, base_offset: int = 0) -> List[ParseTree]:
        """
        Parses zero or more whitespace separated bracketed trees.

        Unbalanced brackets are reported at the offending bracket. Malformed nodes within a balanced tree are reported
        at the start of that tree.

        :param text: The bracketed tree text
        :param base_offset: The byte offset of text within a larger input, used in error messages
        :return: list of ParseTree
        :raises: TreebankParseException if the brackets are malformed
        """
        trees: List[ParseTree] = []

        for tree_text, offset in _top_level_trees(text, base_offset):
            try:
                tree = Tree.fromstring(tree_text, read_node=normalize_label)
            except ValueError as error:
                raise TreebankParseException(str(error).splitlines()[0], offset)

            root = _to_parse_node(tree, True, offset)
            if root is None:
                self.skipped += 1
                logger.warning(
                    "skipping tree at byte offset %d, every leaf was pruned", offset
                )
                continue

            trees.append(ParseTree.from_root(root))
            self.parsed += 1

        return trees


def parse_bracketed(text: str) -> List[ParseTree]:
    """
    Parses bracketed trees from text.

    :param text: Zero or more balanced bracketed trees
    :return: list of ParseTree. Trees whose every leaf is pruned are skipped.
    :raises: TreebankParseException if the brackets are malformed
    """
    return BracketedTreeParser().parse(text)


def _next_labels(tree: ParseTree) -> List[str]:
    """
    Returns c_1..c_n, the label of the first non-root node in pre-order starting at each word index.
    """
    labels: List[Optional[str]] = [None] * len(tree.words)
    for span, start in zip(tree.spans[1:], tree.leftmost_leaf_index[1:]):
        if labels[start - 1] is None:
            labels[start - 1] = span.label

    # a preterminal root has no non-root node
    root_label = tree.spans[0].label
    return [label if label is not None else root_label for label in labels]


def next_constituent_label(tree: ParseTree, i: int) -> str:
    """
    Returns the label of the next constituent at word index i.

    The next constituent is the first node visited in pre-order traversal, root excluded, whose leftmost terminal
    index equals i. When only the POS node starts at i the POS label is returned.

    :param tree: The parse tree
    :param i: 1-based word index
    :return: The constituent label c_i
    :raises: ValueError if i is outside 1..n
    """
    if not 1 <= i <= len(tree.words):
        raise ValueError(f"word index {i} is outside 1..{len(tree.words)}")
    return _next_labels(tree)[i - 1]


def extract_instances(
    tree: ParseTree, sentence_id: str = "1", lookahead: bool = True
) -> List[PrefixInstance]:
    """
    Generates ICLP instances from a parse tree.

    With one look-ahead (the default) instance i pairs w_1..w_i with c_i, producing exactly n instances.
    Without look-ahead instance i pairs w_1..w_(i-1) with c_i; i=1 has an empty prefix and is skipped.

    :param tree: The parse tree
    :param sentence_id: The sentence identifier carried by each instance
    :param lookahead: Set to False for the no-look-ahead variant
    :return: list of PrefixInstance
    """
    instances: List[PrefixInstance] = []
    for i, label in enumerate(_next_labels(tree), start=1):
        prefix = tree.words[:i] if lookahead else tree.words[: i - 1]
        if not prefix:
            continue
        instances.append(
            PrefixInstance(
                sentence_id=sentence_id, word_index=i, prefix=prefix, label=label
            )
        )
    return instances


def split_dev(
    trees: List[ParseTree], fraction: float, seed: int
) -> Tuple[List[ParseTree], List[ParseTree]]:
    """
    Randomly holds out a fraction of trees for development.
    Order is preserved within the train and dev parts.

    :param trees: The trees to split
    :param fraction: The held-out fraction in [0, 1)
    :param seed: The random seed
    :return: tuple of (train trees, dev trees)
    :raises: ValueError if fraction is outside [0, 1)
    """
    if not 0 <= fraction < 1:
        raise ValueError(f"dev fraction {fraction} is outside [0, 1)")

    dev_count = math.ceil(fraction * len(trees)) if fraction > 0 else 0
    if len(trees) > 1:
        dev_count = min(dev_count, len(trees) - 1)
    else:
        dev_count = 0

    dev_indices = set(random.Random(seed).sample(range(len(trees)), dev_count))
    train = [t for i, t in enumerate(trees) if i not in dev_indices]
    dev = [t for i, t in enumerate(trees) if i in dev_indices]

    logger.info("split %d trees into %d train and %d dev", len(trees), len(train), len(dev))
    return train, dev
