"""HTTP+JSON API for the blinded rating protocol."""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Optional, Union

from fastapi import FastAPI, HTTPException, Query, Response
from fastapi.responses import StreamingResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from ..errors import ConflictError, ValidationError
from . import service, slices
from .store import RatingStore


class SessionCreateRequest(BaseModel):
    manifest: str = Field(description="path to a rating manifest JSON")
    rater: str
    seed: Optional[int] = None


class ScoreRequest(BaseModel):
    session: str
    case: str
    alias: str
    landmark: str
    value: Union[float, str]


class ScoreBatchRequest(BaseModel):
    scores: list[ScoreRequest]


def _http(exc: Exception) -> HTTPException:
    if isinstance(exc, ConflictError):
        return HTTPException(status_code=409, detail=str(exc))
    if isinstance(exc, ValidationError):
        return HTTPException(status_code=422, detail=str(exc))
    return HTTPException(status_code=500, detail=str(exc))


def create_app(db_path, static_dir=None) -> FastAPI:
    app = FastAPI(title="anatomy rating service")
    store = RatingStore(db_path)
    app.state.store = store

    def get_session_or_404(session_id: str) -> dict:
        session = store.get_session(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"no session {session_id}")
        return session

    @app.post("/sessions")
    def create_session(req: SessionCreateRequest):
        try:
            manifest = service.load_rating_manifest(req.manifest)
            return service.create_session(store, manifest, req.rater, req.seed)
        except (ValidationError, ConflictError) as exc:
            raise _http(exc)

    @app.get("/sessions")
    def list_sessions():
        return store.list_sessions()

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return service.blinded_view(get_session_or_404(session_id), store)

    @app.get("/sessions/{session_id}/next-item")
    def get_next_item(session_id: str):
        try:
            item = service.next_item(get_session_or_404(session_id), store)
        except (ValidationError, ConflictError) as exc:
            raise _http(exc)
        return {"done": item is None, "item": item}

    @app.put("/scores")
    def put_scores(req: Union[ScoreRequest, ScoreBatchRequest]):
        batch = req.scores if isinstance(req, ScoreBatchRequest) else [req]
        try:
            for score in batch:
                service.record_score(
                    store, score.session, score.case, score.alias,
                    score.landmark, score.value,
                )
        except (ValidationError, ConflictError) as exc:
            raise _http(exc)
        return {"ok": True, "recorded": len(batch)}

    @app.post("/sessions/{session_id}/complete")
    def complete(session_id: str):
        try:
            return service.complete_session(store, session_id)
        except (ValidationError, ConflictError) as exc:
            raise _http(exc)

    @app.post("/sessions/{session_id}/reveal")
    def post_reveal(session_id: str):
        try:
            return service.reveal(store, session_id)
        except (ValidationError, ConflictError) as exc:
            raise _http(exc)

    @app.get("/reports")
    def reports(sessions: str = Query(description="comma-separated session ids")):
        ids = [s for s in sessions.split(",") if s]
        try:
            return service.aggregate(store, ids)
        except (ValidationError, ConflictError) as exc:
            raise _http(exc)

    @app.get("/export.csv")
    def export(sessions: str = Query(description="comma-separated session ids")):
        ids = [s for s in sessions.split(",") if s]
        try:
            rows = service.export_csv_rows(store, ids)
        except (ValidationError, ConflictError) as exc:
            raise _http(exc)
        buf = io.StringIO()
        csv.writer(buf).writerows(rows)
        return StreamingResponse(
            iter([buf.getvalue()]),
            media_type="text/csv",
            headers={"Content-Disposition": "attachment; filename=scores.csv"},
        )

    @app.get("/sessions/{session_id}/cases/{case_id}/slices/{k}.png")
    def base_slice(session_id: str, case_id: str, k: int):
        session = get_session_or_404(session_id)
        try:
            image, _ = slices.resolve_case_paths(session["blob"], case_id, None)
            png = slices.render_slice(image, k)
        except ValidationError as exc:
            raise _http(exc)
        return Response(content=png, media_type="image/png")

    @app.get("/sessions/{session_id}/cases/{case_id}/aliases/{alias}/slices/{k}.png")
    def overlay_slice(session_id: str, case_id: str, alias: str, k: int,
                      overlay: int = 1):
        session = get_session_or_404(session_id)
        try:
            image, labels = slices.resolve_case_paths(session["blob"], case_id, alias)
            png = slices.render_slice(image, k, labels if overlay else None)
        except ValidationError as exc:
            raise _http(exc)
        return Response(content=png, media_type="image/png")

    @app.get("/sessions/{session_id}/cases/{case_id}/meta")
    def case_meta(session_id: str, case_id: str):
        session = get_session_or_404(session_id)
        try:
            image, _ = slices.resolve_case_paths(session["blob"], case_id, None)
            return {"n_slices": slices.n_axial_slices(image)}
        except ValidationError as exc:
            raise _http(exc)

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
