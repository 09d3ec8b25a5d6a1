"""
api.py

Optional HTTP service for segmentation and session simulation. Requires the "api" extra.
"""
from typing import Dict, List, Optional

import uvicorn
from fastapi import FastAPI, HTTPException, Request, status
from fastapi.encoders import jsonable_encoder
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, ValidationError

from .config import SimulSegApiConfig, get_api_config
from .segmenter import parse_policy, segment
from .simulator import run_session
from .translator import EchoTranslator, GlossDictionary, GlossEntry, SovToyTranslator

app = FastAPI()


@app.exception_handler(RequestValidationError)
async def request_validation_handler(request: Request, exc: RequestValidationError):
    return JSONResponse(
        status_code=status.HTTP_400_BAD_REQUEST,
        content=jsonable_encoder(
            {"detail": "Invalid request. Expected {'words': [...], 'policy': {...}}"}
        ),
    )


class SegmentRequest(BaseModel):
    """
    The segmentation request object
    """

    words: List[str] = Field(description="The source words")
    labels: Optional[List[str]] = Field(
        None, description="Next-constituent labels, required by rule based policies"
    )
    policy: Dict = Field(description="The policy, selected by its 'variant' key")

    class Config:
        schema_extra = {
            "example": {
                "words": ["I", "bought", "a", "pen", "."],
                "labels": ["NP", "VP", "NP", "NN", "."],
                "policy": {"variant": "rule", "boundary_labels": ["VP"], "min_len": 1},
            }
        }


class SimulateRequest(SegmentRequest):
    """
    The simulation request object. Without a dictionary the echo translator is used.
    """

    dictionary: Optional[Dict[str, GlossEntry]] = Field(
        None, description="Inline gloss dictionary for the SOV toy translator"
    )


@app.post("/segment")
async def post_segment(segment_request: SegmentRequest) -> Dict:
    """
    Segments a sentence.

    :param segment_request: The segmentation request
    :return: The boundaries and chunks
    """
    try:
        policy = parse_policy(segment_request.policy)
        segmentation = segment(segment_request.words, policy, segment_request.labels)
    except (ValidationError, ValueError) as error:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(error))

    return {
        "boundaries": list(segmentation.boundaries),
        "chunks": segmentation.chunks(segment_request.words),
    }


@app.post("/simulate")
async def post_simulate(simulate_request: SimulateRequest) -> Dict:
    """
    Simulates a streaming translation session.

    :param simulate_request: The simulation request
    :return: The session log
    """
    if simulate_request.dictionary:
        translator = SovToyTranslator(GlossDictionary(entries=simulate_request.dictionary))
    else:
        translator = EchoTranslator()

    try:
        policy = parse_policy(simulate_request.policy)
        log = run_session(
            simulate_request.words, policy, translator, labels=simulate_request.labels
        )
    except (ValidationError, ValueError) as error:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(error))

    if log.failed:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=log.error)
    return jsonable_encoder(log)


def run_server():
    """Launches the API server"""
    config: SimulSegApiConfig = get_api_config()

    uvicorn_params = {
        "app": config.simulseg_uvicorn_app,
        "host": config.simulseg_uvicorn_host,
        "port": config.simulseg_uvicorn_port,
        "reload": config.simulseg_uvicorn_reload,
    }

    uvicorn.run(**uvicorn_params)


if __name__ == "__main__":
    run_server()
