"""
config.py

LinuxForHealth SimulSeg Configuration Settings and file format "constants"
"""
from enum import IntEnum
from functools import lru_cache
from pydantic import BaseSettings, Field


class InstanceColumns(IntEnum):
    """
    The column indices of an ICLP instance TSV row.
    """

    SENTENCE_ID = 0
    WORD_INDEX = 1
    LABEL = 2
    PREFIX = 3


class PredictionColumns(IntEnum):
    """
    The column indices of an external prediction TSV row.
    The gold column is optional.
    """

    SENTENCE_ID = 0
    WORD_INDEX = 1
    PREDICTED = 2
    GOLD = 3


class GlossColumns(IntEnum):
    """
    The column indices of a gloss dictionary TSV row.
    The gloss column may be empty (articles and other words without a translation).
    """

    SOURCE_WORD = 0
    CATEGORY = 1
    GLOSS = 2


class ExternalProtocolFields(IntEnum):
    """
    Tab separated fields used by the external translator line protocol.
    """

    REQUEST_ID = 0
    SOURCE = 1
    PREFIX = 2
    CONTINUATION = 1


# ICLP prefix length buckets, expressed as inclusive upper bounds
PREFIX_LENGTH_BUCKETS = (1, 2, 3, 6, 10)

# serialization versions
SESSION_LOG_SCHEMA_VERSION = 1
ICLP_MODEL_FORMAT_VERSION = 1
PIPELINE_CONFIG_VERSION = 1


class SimulSegConfig(BaseSettings):
    """
    SimulSeg Processing Configurations
    """

    simulseg_reader_buffer_size: int = Field(1024000, gt=0)
    simulseg_logging_config: str = Field(
        "logging.yaml", description="Path to a logging dictConfig YAML document"
    )
    simulseg_workers: int = Field(
        1, ge=1, description="Worker processes used by pipeline runs and sweeps"
    )
    simulseg_external_timeout: float = Field(
        30.0, gt=0, description="Seconds to wait for an external translator response"
    )
    simulseg_end_of_word: str = Field("</w>", min_length=1)

    class Config:
        case_sensitive = False


@lru_cache
def get_config() -> "SimulSegConfig":
    """Returns the SimulSegConfig"""
    return SimulSegConfig()


class SimulSegApiConfig(BaseSettings):
    """
    Settings for optional Fast API "server" components.
    """

    simulseg_uvicorn_app: str = Field(
        "linuxforhealth.simulseg.api:app", description="The path the ASGI app object"
    )
    simulseg_uvicorn_host: str = Field(
        "0.0.0.0", description="The ASGI listening address (host)"
    )
    simulseg_uvicorn_port: int = Field(
        5000, description="The ASGI listening port (host)"
    )
    simulseg_uvicorn_reload: bool = Field(
        False, description="Set to True to support hot reloads. Defaults to False"
    )


@lru_cache
def get_api_config() -> "SimulSegApiConfig":
    """Returns the SimulSegApiConfig"""
    return SimulSegApiConfig()
