"""HTTP service exposing the study engine and audio delivery.

All study mutations funnel through a single lock (the engine's single-writer
contract); participant-facing payloads never carry source or dataset labels.
"""

from __future__ import annotations

import threading
from typing import Optional

from fastapi import Depends, FastAPI, Header, HTTPException, Response

from ..errors import DuplicateResponse, UnissuedAssignment
from ..midi.audio import render_wav
from ..study.engine import (
    TURING_QUESTION,
    Participant,
    StudyEngine,
    questionnaire_for,
)
from .schemas import (
    AdminProgress,
    NextAssignment,
    PieceProgress,
    QuestionnaireItem,
    RegisterRequest,
    RegisterResponse,
    SessionProgress,
    SubmitAccepted,
    SubmitResponse,
)
from ..study.engine import Response as StudyResponse


def create_app(
    engine: StudyEngine,
    admin_key: str,
    sample_rate: int = 22050,
    precache_audio: bool = False,
) -> FastAPI:
    app = FastAPI(title="listening study service")
    lock = threading.Lock()
    audio_cache: dict[str, bytes] = {}

    def piece_wav(piece_id: str) -> bytes:
        if piece_id not in audio_cache:
            piece = engine.pieces[engine.piece_index[piece_id]]
            audio_cache[piece_id] = render_wav(piece.score, sample_rate)
        return audio_cache[piece_id]

    if precache_audio:
        for piece in engine.pieces:
            piece_wav(piece.id)

    def guard_snapshot() -> None:
        if engine.snapshotting:
            raise HTTPException(status_code=503, detail="snapshot in progress")

    def auth(authorization: Optional[str] = Header(default=None)) -> Participant:
        guard_snapshot()
        if not authorization or not authorization.startswith("Bearer "):
            raise HTTPException(status_code=401, detail="missing bearer token")
        participant = engine.participant_by_token(authorization.removeprefix("Bearer "))
        if participant is None:
            raise HTTPException(status_code=401, detail="unknown token")
        return participant

    def admin(x_admin_key: Optional[str] = Header(default=None)) -> None:
        guard_snapshot()
        if x_admin_key != admin_key:
            raise HTTPException(status_code=401, detail="bad admin key")

    @app.post("/participants", response_model=RegisterResponse)
    def register(body: RegisterRequest) -> RegisterResponse:
        guard_snapshot()
        try:
            with lock:
                participant = engine.register(body.group)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return RegisterResponse(token=participant.token)

    @app.get("/session/next", response_model=NextAssignment, response_model_exclude_none=True)
    def session_next(participant: Participant = Depends(auth)) -> NextAssignment:
        with lock:
            piece_id = engine.next_assignment(participant.id)
            progress = engine.participant_progress(participant.id)
        if piece_id is None:
            return NextAssignment(done=True)
        # the composer item is served without its answer words so that no
        # participant-facing byte ever matches a source label
        items = []
        for qid, text in questionnaire_for(participant.group):
            if qid == TURING_QUESTION[0]:
                items.append(
                    QuestionnaireItem(id=qid, text=text.split(" (")[0], kind="composer")
                )
            else:
                items.append(QuestionnaireItem(id=qid, text=text))
        return NextAssignment(
            done=False,
            piece_id=piece_id,
            questionnaire=items,
            progress=SessionProgress(**progress),
        )

    @app.get("/audio/{piece_id}")
    def audio(piece_id: str, participant: Participant = Depends(auth)) -> Response:
        # only pieces this participant was actually given are reachable
        reachable = participant.open_piece == piece_id or piece_id in participant.rated
        if piece_id not in engine.piece_index or not reachable:
            raise HTTPException(status_code=404, detail="unknown piece")
        payload = piece_wav(piece_id)
        return Response(
            content=payload,
            media_type="audio/wav",
            headers={"Content-Length": str(len(payload))},
        )

    @app.post("/responses", response_model=SubmitAccepted)
    def submit(
        body: SubmitResponse, participant: Participant = Depends(auth)
    ) -> SubmitAccepted:
        try:
            with lock:
                engine.record_response(
                    StudyResponse(
                        participant_id=participant.id,
                        piece_id=body.piece_id,
                        answers=body.answers,
                        turing_answer=body.turing_answer,
                    )
                )
        except DuplicateResponse as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except (UnissuedAssignment, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return SubmitAccepted()

    @app.get("/admin/progress", response_model=AdminProgress)
    def progress(_: None = Depends(admin)) -> AdminProgress:
        with lock:
            rows = engine.piece_progress()
            participants = {
                p.id: len(p.rated) for p in engine.participants.values()
            }
            n_responses = len(engine.responses)
            met = engine.quotas_met()
        return AdminProgress(
            pieces=[PieceProgress(**row) for row in rows],
            participants=participants,
            responses=n_responses,
            quotas_met=met,
        )

    @app.get("/admin/export")
    def export(_: None = Depends(admin)) -> Response:
        with lock:
            csv_text = engine.export_responses()
        return Response(content=csv_text, media_type="text/csv")

    return app
