"""Pydantic request/response bodies for the listening-study HTTP service."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class RegisterRequest(BaseModel):
    group: str


class RegisterResponse(BaseModel):
    token: str


class QuestionnaireItem(BaseModel):
    id: str
    text: str
    kind: str = "likert"  # "likert" or "composer"


class SessionProgress(BaseModel):
    completed: int
    cap: Optional[int] = None


class NextAssignment(BaseModel):
    done: bool = False
    piece_id: Optional[str] = None
    questionnaire: list[QuestionnaireItem] = Field(default_factory=list)
    progress: Optional[SessionProgress] = None


class SubmitResponse(BaseModel):
    piece_id: str
    answers: dict[str, int]
    turing_answer: str


class SubmitAccepted(BaseModel):
    accepted: bool = True


class PieceProgress(BaseModel):
    piece_id: str
    total: int
    normal: int
    amateur: int
    expert: int
    satisfied: bool


class AdminProgress(BaseModel):
    pieces: list[PieceProgress]
    participants: dict[str, int]
    responses: int
    quotas_met: bool
