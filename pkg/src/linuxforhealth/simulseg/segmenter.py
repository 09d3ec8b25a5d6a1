"""
segmenter.py

Chunk segmentation policies. Rule based segmentation turns per-word next-constituent labels into chunk boundaries.
Wait-k and fixed-size segmentation are label free baselines.

A boundary b means "a chunk closes after word b". Boundaries are 1-based and the last boundary is always the
sentence length.
"""
import logging
from typing import (
    Annotated,
    Collection,
    Dict,
    FrozenSet,
    List,
    Literal,
    Optional,
    Sequence,
    Tuple,
    Union,
)

from pydantic import Field, parse_obj_as, root_validator, validator

from .models import PolicyVariant, SegmentUnit, SimulSegModel
from .support import field_validator
from .validators import validate_strictly_increasing

logger = logging.getLogger(__name__)


class WaitKPolicy(SimulSegModel):
    """
    Reads k source tokens, then alternates one write with one read.
    """

    variant: Literal["waitk"] = PolicyVariant.WAIT_K.value
    k: int = Field(ge=1)

    @property
    def hyperparameter(self) -> int:
        return self.k


class FixedSizePolicy(SimulSegModel):
    """
    Closes a chunk every f words or subwords.
    """

    variant: Literal["fixed"] = PolicyVariant.FIXED.value
    f: int = Field(ge=1)
    unit: SegmentUnit = SegmentUnit.WORD

    @property
    def hyperparameter(self) -> int:
        return self.f


class RuleBasedPolicy(SimulSegModel):
    """
    Segments before constituents whose label is in boundary_labels, subject to a minimum chunk length.
    """

    variant: Literal["rule"] = PolicyVariant.RULE.value
    boundary_labels: FrozenSet[str]
    min_len: int = Field(1, ge=1)

    @validator("boundary_labels")
    def validate_boundary_labels(cls, v: FrozenSet[str]) -> FrozenSet[str]:
        """Validates that at least one non-empty boundary label is configured"""
        if not v or any(not label for label in v):
            raise ValueError("boundary labels must be a non-empty set of labels")
        return v

    @property
    def hyperparameter(self) -> int:
        return self.min_len


PolicyConfig = Annotated[
    Union[WaitKPolicy, FixedSizePolicy, RuleBasedPolicy],
    Field(discriminator="variant"),
]


def parse_policy(data: Dict) -> Union[WaitKPolicy, FixedSizePolicy, RuleBasedPolicy]:
    """
    Parses a policy from its dictionary form, selecting the model by its "variant" key.

    :param data: The policy dictionary
    :return: The policy model
    :raises: pydantic.ValidationError if the variant is unknown or a field is invalid
    """
    return parse_obj_as(PolicyConfig, data)


def policy_name(policy: Union[WaitKPolicy, FixedSizePolicy, RuleBasedPolicy]) -> str:
    """
    Returns a stable display name for a policy, excluding its hyperparameter.

    Examples: "waitk", "fixed-word", "fixed-subword", "rule-S+VP"
    """
    if isinstance(policy, FixedSizePolicy):
        return f"fixed-{policy.unit}"
    if isinstance(policy, RuleBasedPolicy):
        return "rule-" + "+".join(sorted(policy.boundary_labels))
    return policy.variant


class Segmentation(SimulSegModel):
    """
    Chunk boundaries over a sentence of `length` tokens.
    """

    boundaries: Tuple[int, ...]
    length: int = Field(ge=0)

    _validate_boundaries = field_validator("boundaries")(validate_strictly_increasing)

    @root_validator(skip_on_failure=True)
    def validate_closed(cls, values: Dict) -> Dict:
        """
        Validates that the last boundary closes the sentence.

        :param values: The validated values
        """
        boundaries, length = values["boundaries"], values["length"]
        if length and (not boundaries or boundaries[-1] != length):
            raise ValueError(f"final boundary {boundaries} does not close length {length}")
        if not length and boundaries:
            raise ValueError("an empty sentence has no boundaries")
        return values

    @property
    def spans(self) -> List[Tuple[int, int]]:
        """Returns the chunk spans as (start, end) 1-based inclusive pairs"""
        spans = []
        start = 1
        for b in self.boundaries:
            spans.append((start, b))
            start = b + 1
        return spans

    def chunks(self, tokens: Sequence[str]) -> List[List[str]]:
        """
        Splits tokens into chunks.

        :param tokens: The segmented tokens
        :return: list of chunks
        """
        if len(tokens) != self.length:
            raise ValueError(f"token count {len(tokens)} != segmentation length {self.length}")
        return [list(tokens[start - 1 : end]) for start, end in self.spans]


def segment_rule_based(
    words: Sequence[str],
    labels: Sequence[str],
    boundary_labels: Collection[str],
    min_len: int = 1,
) -> Segmentation:
    """
    Segments a sentence with the constituent label rules.

    Scanning i = 2..n, a boundary is placed after w_{i-1} when
    * c_i is a boundary label
    * c_{i-1} is not a boundary label
    * the current chunk holds at least min_len words

    The chunk closes unconditionally after w_n.

    :param words: The sentence words
    :param labels: The next-constituent labels c_1..c_n
    :param boundary_labels: Labels which start a new chunk, e.g. {"S", "VP"}
    :param min_len: The minimum chunk length in words
    :return: The Segmentation
    :raises: ValueError if labels and words differ in length
    """
    if len(words) != len(labels):
        raise ValueError(f"{len(labels)} labels for {len(words)} words")
    if min_len < 1:
        raise ValueError(f"invalid minimum chunk length {min_len}")

    boundaries: List[int] = []
    last_boundary = 0
    for i in range(2, len(words) + 1):
        if (
            labels[i - 1] in boundary_labels
            and labels[i - 2] not in boundary_labels
            and (i - 1) - last_boundary >= min_len
        ):
            boundaries.append(i - 1)
            last_boundary = i - 1

    if words:
        boundaries.append(len(words))
    return Segmentation(boundaries=tuple(boundaries), length=len(words))


def segment_fixed(tokens: Sequence[str], f: int) -> Segmentation:
    """
    Closes a chunk after every f tokens. The final chunk may be shorter.

    :param tokens: The words or subwords to segment
    :param f: The chunk size
    :return: The Segmentation
    """
    if f < 1:
        raise ValueError(f"invalid chunk size {f}")

    boundaries = list(range(f, len(tokens), f))
    if tokens:
        boundaries.append(len(tokens))
    return Segmentation(boundaries=tuple(boundaries), length=len(tokens))


def segment_waitk(tokens: Sequence[str], k: int) -> Segmentation:
    """
    Returns the read points of a wait-k schedule as a segmentation: k, k+1, ..., n.

    :param tokens: The source tokens
    :param k: The number of tokens read before the first write
    :return: The Segmentation
    """
    if k < 1:
        raise ValueError(f"invalid wait-k lag {k}")

    boundaries = list(range(k, len(tokens)))
    if tokens:
        boundaries.append(len(tokens))
    return Segmentation(boundaries=tuple(boundaries), length=len(tokens))


def waitk_schedule(k: int, source_length: int, target_length: int) -> List[int]:
    """
    Returns the read counts of a wait-k schedule: g(t) = min(k + t - 1, |X|).

    :param k: The number of tokens read before the first write
    :param source_length: |X|
    :param target_length: |Y|
    :return: g(1)..g(|Y|)
    """
    if k < 1:
        raise ValueError(f"invalid wait-k lag {k}")
    return [min(k + t - 1, source_length) for t in range(1, target_length + 1)]


def segment(
    words: Sequence[str],
    policy: Union[WaitKPolicy, FixedSizePolicy, RuleBasedPolicy],
    labels: Optional[Sequence[str]] = None,
) -> Segmentation:
    """
    Segments words with any policy.

    :param words: The tokens to segment. Subword policies expect subword tokens.
    :param policy: The segmentation policy
    :param labels: Next-constituent labels, required by rule based policies
    :return: The Segmentation
    :raises: ValueError if a rule based policy has no labels
    """
    if isinstance(policy, RuleBasedPolicy):
        if labels is None:
            raise ValueError("rule based segmentation requires next-constituent labels")
        return segment_rule_based(words, labels, policy.boundary_labels, policy.min_len)
    if isinstance(policy, FixedSizePolicy):
        return segment_fixed(words, policy.f)
    return segment_waitk(words, policy.k)
