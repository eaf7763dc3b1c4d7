"""FastAPI backend exposing the card catalog, layouts, SCM graph and paired-seed matches."""
from typing import Any, Dict, List, Optional, Union
import logging
import math

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel, Field

from actions import ACTION_DIM, layout_spec as action_layout
from cards import ARCHETYPES, deck_for, export_catalog, export_deck
from harness import MatchSpec, run_match, summarize_match
from observe import LAYOUT_VERSION, OBS_DIM, layout_spec as observation_layout
from scm import build_graph, export_dot, graph_to_dict

logger = logging.getLogger(__name__)

app = FastAPI(title="Causal Card-Game Arena")

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

MAX_API_EPISODES = 200


class MatchRequest(BaseModel):
    agent_a: Union[str, Dict[int, str]] = "heuristic"
    agent_b: Union[str, Dict[int, str]] = "heuristic"
    deck_a: str
    deck_b: str
    episodes: int = Field(10, ge=1, le=MAX_API_EPISODES)
    seeds: List[int] = [0]
    turn_cap: int = Field(30, ge=1)
    record_traces: bool = False


class MatchSummary(BaseModel):
    episodes: int
    wins: int
    losses: int
    draws: int
    win_rate: float
    ci_lo: float
    ci_hi: float
    decisive_win_rate: Optional[float] = None


class MatchResponse(BaseModel):
    summary: MatchSummary
    rows: List[Dict[str, Any]]


@app.get("/health")
def health():
    return {"status": "ok", "obs_dim": OBS_DIM, "action_dim": ACTION_DIM, "layout_version": LAYOUT_VERSION}


@app.get("/catalog")
def catalog():
    return export_catalog()


@app.get("/decks/{archetype}")
def deck(archetype: str):
    if archetype not in ARCHETYPES:
        raise HTTPException(status_code=404, detail=f"Unknown archetype '{archetype}'")
    return export_deck(deck_for(archetype))


@app.get("/layout/actions")
def actions_layout():
    return {"action_dim": ACTION_DIM, "blocks": action_layout()}


@app.get("/layout/observation")
def obs_layout():
    return {"obs_dim": OBS_DIM, "layout_version": LAYOUT_VERSION, "blocks": observation_layout()}


@app.get("/scm/graph")
def scm_graph():
    return graph_to_dict()


@app.get("/scm/graph.dot", response_class=PlainTextResponse)
def scm_graph_dot():
    return export_dot(build_graph())


@app.post("/match", response_model=MatchResponse)
def match(request: MatchRequest):
    """Play a paired-seed match; agents are 'random', 'heuristic' or checkpoint paths on the server."""
    try:
        spec = MatchSpec(**request.dict())
        rows = run_match(spec)
    except (ValueError, FileNotFoundError) as e:
        raise HTTPException(status_code=400, detail=str(e))
    summary = summarize_match(rows)
    if math.isnan(summary["decisive_win_rate"]):
        summary["decisive_win_rate"] = None
    logger.info("api match deck_a=%s deck_b=%s episodes=%d win_rate=%.3f",
                spec.deck_a, spec.deck_b, len(rows), summary["win_rate"])
    return MatchResponse(summary=MatchSummary(**summary), rows=rows)


if __name__ == "__main__":
    import uvicorn

    uvicorn.run(app, host="0.0.0.0", port=8000)
