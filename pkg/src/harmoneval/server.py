"""HTTP front for the study engine (JSON bodies throughout)."""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Header, HTTPException, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .errors import (
    AlreadySubmittedError,
    IncompleteSessionError,
    InvalidResponseError,
    UnknownSessionError,
)
from .study import ParticipantRecord, StudyEngine, export_csv


class SessionRequest(BaseModel):
    consent: bool = False


class RankingRequest(BaseModel):
    page: int
    ordered_ids: list[str]


class FinalizeRequest(BaseModel):
    expertise: int = Field(ge=1, le=6)
    attention_answer: str
    age: Optional[int] = None
    gender: Optional[str] = None


def create_app(
    engine: StudyEngine,
    admin_token: Optional[str] = None,
    audio_dir: Optional[str] = None,
    ui_dir: Optional[str] = None,
) -> FastAPI:
    app = FastAPI(title="harmoneval study", docs_url=None, redoc_url=None)

    @app.post("/api/sessions")
    def create_session(body: SessionRequest):
        if not body.consent:
            raise HTTPException(status_code=403, detail="informed consent is required")
        session = engine.create_session()
        return {
            "session_id": session.id,
            "modality_order": [m.value for m in session.modality_order],
        }

    @app.get("/api/sessions/{session_id}/pages/{page}")
    def get_page(session_id: str, page: int):
        try:
            modality, items = engine.page_items(session_id, page)
        except UnknownSessionError:
            raise HTTPException(status_code=404, detail="unknown session") from None
        except InvalidResponseError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        return {"modality": modality.value, "items": items}

    @app.post("/api/sessions/{session_id}/rankings", status_code=204)
    def submit_ranking(session_id: str, body: RankingRequest):
        try:
            engine.submit_ranking(session_id, body.page, body.ordered_ids)
        except UnknownSessionError:
            raise HTTPException(status_code=404, detail="unknown session") from None
        except AlreadySubmittedError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from None
        except InvalidResponseError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        return Response(status_code=204)

    @app.post("/api/sessions/{session_id}/finalize")
    def finalize(session_id: str, body: FinalizeRequest):
        record = ParticipantRecord(
            expertise=body.expertise,
            attention_answer=body.attention_answer,
            age=body.age,
            gender=body.gender,
        )
        try:
            decision = engine.finalize(session_id, record)
        except UnknownSessionError:
            raise HTTPException(status_code=404, detail="unknown session") from None
        except IncompleteSessionError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from None
        except AlreadySubmittedError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from None
        payload = {"included": decision.included}
        if decision.reason is not None:
            payload["reason"] = decision.reason
        return payload

    @app.get("/api/study")
    def study_metadata():
        """Static study texts the UI needs (attention item, expertise labels)."""
        from .study import EXPERTISE_LABELS

        return {
            "attention_prompt": engine.config.attention_prompt,
            "attention_options": list(engine.config.attention_options),
            "expertise_labels": list(EXPERTISE_LABELS),
        }

    @app.get("/api/export")
    def export(x_admin_token: Optional[str] = Header(default=None)):
        if admin_token is None or x_admin_token != admin_token:
            raise HTTPException(status_code=403, detail="admin token required")
        return Response(content=export_csv(engine), media_type="text/csv")

    if audio_dir is not None and Path(audio_dir).is_dir():
        app.mount("/audio", StaticFiles(directory=audio_dir), name="audio")
    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
