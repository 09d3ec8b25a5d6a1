"""
models.py

Base models and shared enumerations for simultaneous translation segmentation.
"""
from enum import Enum

from pydantic import BaseModel


class SimulSegModel(BaseModel):
    """
    SimulSegModel serves as the base class for all SimulSeg value types.
    Instances are immutable and hashable once validated.
    """

    class Config:
        allow_mutation = False
        frozen = True
        extra = "forbid"
        use_enum_values = True


class SegmentUnit(str, Enum):
    """
    Units counted by a segmentation policy
    """

    WORD = "word"
    SUBWORD = "subword"


class TargetUnit(str, Enum):
    """
    Target side units used for latency and quality scoring
    """

    WORD = "word"
    CHARACTER = "character"


class TokenCategory(str, Enum):
    """
    Gloss dictionary categories. Drives the head-final reordering of the toy translator.
    """

    VERB = "verb"
    OTHER = "other"
    PUNCT = "punct"


class PolicyVariant(str, Enum):
    """
    Supported segmentation/read-write policies
    """

    WAIT_K = "waitk"
    FIXED = "fixed"
    RULE = "rule"


class LabelSource(str, Enum):
    """
    Where next-constituent labels come from when driving rule based segmentation
    """

    ORACLE = "oracle"
    MODEL = "model"
    EXTERNAL = "external"
