"""HTTP review service over the candidate store (the manual filter step).

JSON API consumed by the browser review UI:

    GET  /api/candidates?status=pending&limit=50&offset=0
    GET  /api/candidates/{id}
    POST /api/candidates/{id}/decision   {"verdict", "reviewer", "note"?}
    GET  /api/stats

Every mutation is persisted by the store before the response is sent.
Errors are JSON ``{"error", "detail"}`` with 400/404/409 status codes.
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import HTMLResponse, JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .augmentation import ALL_STATUSES, CandidateStore
from .errors import CandidateStateError

_FALLBACK_PAGE = """<!doctype html>
<html><head><meta charset="utf-8"><title>paraphrase review</title></head>
<body><p>Review UI assets not found. Build the frontend and pass
<code>--ui-dir</code>, or use the JSON API under <code>/api/</code>.</p>
</body></html>"""


class DecisionBody(BaseModel):
    verdict: Literal["accept", "reject"]
    reviewer: str
    note: str | None = None


def create_app(store: CandidateStore, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="paraphrase review service")

    @app.exception_handler(RequestValidationError)
    async def bad_request(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"error": "bad_request", "detail": str(exc.errors()[:3])},
        )

    @app.exception_handler(CandidateStateError)
    async def conflict(request: Request, exc: CandidateStateError):
        return JSONResponse(status_code=409, content={"error": "conflict", "detail": str(exc)})

    @app.exception_handler(KeyError)
    async def not_found(request: Request, exc: KeyError):
        return JSONResponse(status_code=404, content={"error": "not_found", "detail": str(exc)})

    @app.get("/api/candidates")
    def list_candidates(status: str | None = "pending", limit: int = 50, offset: int = 0):
        if status in ("", "all"):
            status = None
        if status is not None and status not in ALL_STATUSES:
            return JSONResponse(
                status_code=400,
                content={"error": "bad_request", "detail": f"unknown status {status!r}"},
            )
        if limit < 1 or offset < 0:
            return JSONResponse(
                status_code=400,
                content={"error": "bad_request", "detail": "limit must be >=1, offset >=0"},
            )
        items = store.list(status=status)
        page = items[offset : offset + limit]
        return {
            "items": [c.to_json_dict() for c in page],
            "total": len(items),
            "limit": limit,
            "offset": offset,
        }

    @app.get("/api/candidates/{candidate_id}")
    def get_candidate(candidate_id: str):
        return store.get(candidate_id).to_json_dict()

    @app.post("/api/candidates/{candidate_id}/decision")
    def submit_decision(candidate_id: str, body: DecisionBody):
        updated = store.decide(
            candidate_id, verdict=body.verdict, reviewer=body.reviewer, note=body.note
        )
        return updated.to_json_dict()

    @app.get("/api/stats")
    def stats():
        return store.counts()

    ui_path = Path(ui_dir) if ui_dir else None
    if ui_path is not None and ui_path.is_dir():
        app.mount("/", StaticFiles(directory=ui_path, html=True), name="ui")
    else:
        @app.get("/")
        def index():
            return HTMLResponse(_FALLBACK_PAGE)

    return app


def serve(store: CandidateStore, port: int, ui_dir: str | Path | None = None,
          host: str = "127.0.0.1") -> None:
    import uvicorn

    uvicorn.run(create_app(store, ui_dir=ui_dir), host=host, port=port)
