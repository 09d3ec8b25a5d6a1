"""
validators.py

The validator functions in this module are reused across SimulSeg models.

Root validators have the signature (cls, values).

Field validators support a varying signature:
    - (cls, v) - where "v" is the value to validate
    - (cls, v, values) - where "values" are previously validated fields (dict)
"""
from typing import Dict, List


def validate_non_empty_tokens(cls, v: List[str]) -> List[str]:
    """
    Validates that a token sequence does not contain empty or whitespace tokens.

    :param v: The token list
    :raises: ValueError if an empty token is found.
    """
    for index, token in enumerate(v):
        if not token or any(c.isspace() for c in token):
            raise ValueError(f"invalid token {token!r} at position {index}")
    return v


def validate_non_decreasing(cls, v: List[int]) -> List[int]:
    """
    Validates that a read-count sequence, g(t), is monotonic non-decreasing.

    :param v: The read counts
    :raises: ValueError if a read count decreases.
    """
    for t in range(1, len(v)):
        if v[t] < v[t - 1]:
            raise ValueError(f"g decreases at t={t + 1}: {v[t - 1]} > {v[t]}")
    return v


def validate_strictly_increasing(cls, v: List[int]) -> List[int]:
    """
    Validates that boundary positions are positive and strictly increasing.

    :param v: The boundary positions
    :raises: ValueError if positions repeat, decrease or are not positive.
    """
    previous = 0
    for b in v:
        if b <= previous:
            raise ValueError(f"boundaries must be positive and increasing, got {v}")
        previous = b
    return v


def validate_read_counts(cls, values: Dict) -> Dict:
    """
    Validates a session's g(t) against its source and target lengths.
    Failed sessions are not validated since their output is partial.

    :param values: The validated session values.
    :raises: ValueError if |g| != |Y| or a read count is outside [1, |X|]
    """
    if values.get("failed"):
        return values

    g = values.get("g") or []
    source = values.get("source_tokens") or []
    target = values.get("target_tokens") or []

    if len(g) != len(target):
        raise ValueError(f"|g| {len(g)} != target length {len(target)}")

    for t, read_count in enumerate(g, start=1):
        if not 1 <= read_count <= len(source):
            raise ValueError(
                f"g({t}) = {read_count} is outside [1, {len(source)}] source words"
            )
    return values
