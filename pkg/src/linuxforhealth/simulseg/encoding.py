"""
encoding.py

Custom JSON Encoder used to support data types not included in the JSON Specification.
"""
from enum import Enum
from json import JSONEncoder
from pathlib import PurePath
from typing import Any

from pydantic import BaseModel


class SimulSegJsonEncoder(JSONEncoder):
    """
    Provides additional encoding support for the following types:
    - pydantic models
    - Enum members
    - set and frozenset values (sorted for stable output)
    - file system paths
    """

    def default(self, o: Any) -> Any:
        """
        Overridden to customize the encoding process.
        :param o: The current object to encode
        """
        if isinstance(o, BaseModel):
            return o.dict()
        elif isinstance(o, Enum):
            return o.value
        elif isinstance(o, (set, frozenset)):
            return sorted(o)
        elif isinstance(o, PurePath):
            return str(o)
        else:
            return super().default(o)
