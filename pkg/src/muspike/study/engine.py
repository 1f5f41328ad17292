"""Blind listening-study engine: curation, quota assignment, persistence.

State is the fold of an append-only line-delimited event log; every mutation
is an event (registered / assigned / responded / expired), so a crashed
process recovers by replaying the log.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from ..errors import (
    DuplicateResponse,
    InsufficientCatalog,
    UnissuedAssignment,
    UnknownParticipant,
)
from ..midi.score import Score, trim

SCHEMA_VERSION = 1

NORMAL = "Normal"
AMATEUR = "Amateur"
EXPERT = "Expert"
GROUPS = (NORMAL, AMATEUR, EXPERT)

HUMAN_SOURCE = "Human"
MODEL_SOURCES = ("S-Transformer", "S-LSTM", "S-RNN", "S-GAN", "S-CNN")
DATASETS = ("JSB", "POP909", "Lakh", "EMOPIA", "XMIDI")

QUESTIONS: tuple[tuple[str, str, tuple[str, ...]], ...] = (
    ("Q1", "The music sounds pleasant.", GROUPS),
    ("Q2", "The music sounds natural and fluent.", GROUPS),
    ("Q3", "The music conveys some emotion.", GROUPS),
    ("Q4", "The rhythm is consistent.", GROUPS),
    ("Q5", "The music has a clear structure or repeated segments.", (AMATEUR, EXPERT)),
    ("Q6", "The music shows a recognizable style.", (AMATEUR, EXPERT)),
    ("Q7", "The music exhibits tonal coherence.", (EXPERT,)),
    ("Q8", "The harmonic progression is natural.", (EXPERT,)),
    ("Q9", "The melody exhibits melodic motivation.", (EXPERT,)),
    ("Q10", "The music sounds novel or original.", GROUPS),
    ("Q11", "The music left a strong impression.", GROUPS),
    ("Q12", "The music reminded me of personal experiences.", GROUPS),
    ("Q13", "I like the music.", GROUPS),
)
TURING_QUESTION = ("Q14", "Who composed it (Human / AI / Uncertain)")
TURING_ANSWERS = ("Human", "AI", "Uncertain")


def questionnaire_for(group: str) -> list[tuple[str, str]]:
    """Ordered item list for a listener group (Likert items plus the final
    composer question): 9, 11 or 14 items."""
    if group not in GROUPS:
        raise ValueError(f"unknown listener group: {group}")
    items = [(qid, text) for qid, text, groups in QUESTIONS if group in groups]
    items.append(TURING_QUESTION)
    return items


def likert_ids_for(group: str) -> list[str]:
    return [qid for qid, text, groups in QUESTIONS if group in groups]


@dataclass(frozen=True)
class QuotaPlan:
    min_total: int = 24
    min_normal: int = 16
    min_amateur: int = 4
    min_expert: int = 4

    def min_for(self, group: str) -> int:
        return {
            NORMAL: self.min_normal,
            AMATEUR: self.min_amateur,
            EXPERT: self.min_expert,
        }[group]


@dataclass(frozen=True)
class Piece:
    id: str
    dataset: str
    source: str
    score: Score

    @property
    def is_human(self) -> bool:
        return self.source == HUMAN_SOURCE


@dataclass
class Participant:
    id: str
    group: str
    token: str
    rated: set[str] = field(default_factory=set)
    open_piece: Optional[str] = None
    open_expires: float = 0.0


@dataclass(frozen=True)
class Response:
    participant_id: str
    piece_id: str
    answers: dict[str, int]  # question id -> Likert 1..5
    turing_answer: str
    timestamp: float = 0.0


def curate(
    catalog: dict[tuple[str, str], Sequence[Score]],
    seed: int = 0,
    per_model: int = 30,
    human_per_dataset: int = 12,
    max_seconds: float = 30.0,
    datasets: Sequence[str] = DATASETS,
    models: Sequence[str] = MODEL_SOURCES,
) -> list[Piece]:
    """Uniformly sample the evaluation set (default 750 generated + 60 human),
    trim every piece, and assign opaque shuffled ids."""
    rng = random.Random(seed)
    selected: list[tuple[str, str, Score]] = []
    for dataset in datasets:
        for source in (*models, HUMAN_SOURCE):
            want = human_per_dataset if source == HUMAN_SOURCE else per_model
            pool = list(catalog.get((dataset, source), ()))
            if len(pool) < want:
                raise InsufficientCatalog(
                    f"cell ({dataset}, {source}) has {len(pool)} pieces, needs {want}"
                )
            for score in rng.sample(pool, want):
                selected.append((dataset, source, trim(score, max_seconds)))
    rng.shuffle(selected)
    width = len(str(len(selected)))
    return [
        Piece(id=f"p{i + 1:0{width}d}", dataset=d, source=s, score=sc)
        for i, (d, s, sc) in enumerate(selected)
    ]


class StudyEngine:
    """Single-writer study state over an append-only event log."""

    def __init__(
        self,
        pieces: Sequence[Piece],
        quota: QuotaPlan = QuotaPlan(),
        seed: int = 0,
        log_path: Optional[str] = None,
        lease_seconds: float = 1800.0,
        clock: Optional[Callable[[], float]] = None,
        workload_caps: Optional[dict[str, int]] = None,
    ):
        self.pieces = list(pieces)
        self.piece_index = {p.id: i for i, p in enumerate(self.pieces)}
        self.quota = quota
        self.seed = seed
        self.log_path = log_path
        self.lease_seconds = lease_seconds
        self.clock = clock or (lambda: 0.0)
        self.workload_caps = workload_caps or {}
        self.snapshotting = False

        n = len(self.pieces)
        self.counts = {g: np.zeros(n, dtype=int) for g in GROUPS}
        self.leases = {g: np.zeros(n, dtype=int) for g in GROUPS}
        self.participants: dict[str, Participant] = {}
        self.tokens: dict[str, str] = {}
        self.responses: list[Response] = []
        self._priorities: dict[str, np.ndarray] = {}
        self._log_fh = None
        if log_path is not None:
            self._log_fh = open(log_path, "a", encoding="utf-8")

    # --- event plumbing ----------------------------------------------------

    def _emit(self, event: dict) -> None:
        event["v"] = SCHEMA_VERSION
        if self._log_fh is not None:
            self._log_fh.write(json.dumps(event, sort_keys=True) + "\n")
            self._log_fh.flush()
        self._apply(event)

    def _apply(self, event: dict) -> None:
        kind = event["t"]
        if kind == "registered":
            p = Participant(id=event["pid"], group=event["group"], token=event["token"])
            self.participants[p.id] = p
            self.tokens[p.token] = p.id
            self._priorities[p.id] = self._priority_vector(p.id)
        elif kind == "assigned":
            p = self.participants[event["pid"]]
            idx = self.piece_index[event["piece"]]
            if p.open_piece is None:
                self.leases[p.group][idx] += 1
            p.open_piece = event["piece"]
            p.open_expires = event["expires"]
        elif kind == "expired":
            p = self.participants[event["pid"]]
            if p.open_piece == event["piece"]:
                self.leases[p.group][self.piece_index[event["piece"]]] -= 1
                p.open_piece = None
        elif kind == "responded":
            p = self.participants[event["pid"]]
            idx = self.piece_index[event["piece"]]
            if p.open_piece == event["piece"]:
                self.leases[p.group][idx] -= 1
                p.open_piece = None
            self.counts[p.group][idx] += 1
            p.rated.add(event["piece"])
            self.responses.append(
                Response(
                    participant_id=event["pid"],
                    piece_id=event["piece"],
                    answers={k: int(v) for k, v in event["answers"].items()},
                    turing_answer=event["turing"],
                    timestamp=event["ts"],
                )
            )
        else:
            raise ValueError(f"unknown event type: {kind}")

    @classmethod
    def replay(
        cls,
        pieces: Sequence[Piece],
        log_path: str,
        append: bool = True,
        **kwargs,
    ) -> "StudyEngine":
        """Rebuild state by folding the event log from empty."""
        engine = cls(pieces, log_path=None, **kwargs)
        with open(log_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                event = json.loads(line)
                if event.get("v") != SCHEMA_VERSION:
                    raise ValueError(f"unknown event schema version: {event.get('v')}")
                engine._apply(event)
        if append:
            engine.log_path = log_path
            engine._log_fh = open(log_path, "a", encoding="utf-8")
        return engine

    def close(self) -> None:
        if self._log_fh is not None:
            self._log_fh.close()
            self._log_fh = None

    # --- participants -------------------------------------------------------

    def register(self, group: str) -> Participant:
        if group not in GROUPS:
            raise ValueError(f"unknown listener group: {group}")
        pid = f"u{len(self.participants) + 1:04d}"
        token = hashlib.sha256(f"{self.seed}:{pid}".encode()).hexdigest()[:32]
        self._emit({"t": "registered", "pid": pid, "group": group, "token": token})
        return self.participants[pid]

    def participant_by_token(self, token: str) -> Optional[Participant]:
        pid = self.tokens.get(token)
        return self.participants.get(pid) if pid else None

    def _priority_vector(self, pid: str) -> np.ndarray:
        # stable seeded shuffle per participant, layered under deficit priority
        digest = hashlib.sha256(f"{self.seed}:{pid}:order".encode()).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        return rng.random(len(self.pieces))

    # --- assignment ---------------------------------------------------------

    def _expire_leases(self) -> None:
        now = self.clock()
        for p in self.participants.values():
            if p.open_piece is not None and p.open_expires <= now:
                self._emit({"t": "expired", "pid": p.id, "piece": p.open_piece})

    def _deficits(self, group: str) -> np.ndarray:
        need = self.quota.min_for(group)
        return np.maximum(0, need - self.counts[group] - self.leases[group])

    def next_assignment(self, participant_id: str) -> Optional[str]:
        """Piece id with the largest remaining quota deficit for this
        participant's group, or None when the participant is done."""
        p = self.participants.get(participant_id)
        if p is None:
            raise UnknownParticipant(participant_id)
        self._expire_leases()
        if p.open_piece is not None:
            return p.open_piece
        cap = self.workload_caps.get(p.group)
        if cap is not None and len(p.rated) >= cap:
            return None
        deficit = self._deficits(p.group)
        total_deficit = np.maximum(
            0,
            self.quota.min_total
            - sum(self.counts[g] + self.leases[g] for g in GROUPS),
        )
        mask = deficit > 0
        for piece_id in p.rated:
            mask[self.piece_index[piece_id]] = False
        if not mask.any():
            return None
        score = (
            deficit * 1e6 + total_deficit * 1e3 + self._priorities[p.id]
        )
        score[~mask] = -1.0
        idx = int(score.argmax())
        piece_id = self.pieces[idx].id
        self._emit(
            {
                "t": "assigned",
                "pid": p.id,
                "piece": piece_id,
                "expires": self.clock() + self.lease_seconds,
            }
        )
        return piece_id

    def resume(self, participant_id: str) -> Optional[str]:
        """The participant's open (assigned, unanswered) piece, if any."""
        p = self.participants.get(participant_id)
        if p is None:
            raise UnknownParticipant(participant_id)
        self._expire_leases()
        return p.open_piece

    # --- responses ----------------------------------------------------------

    def record_response(self, response: Response) -> None:
        p = self.participants.get(response.participant_id)
        if p is None:
            raise UnknownParticipant(response.participant_id)
        if response.piece_id in p.rated:
            raise DuplicateResponse(
                f"{p.id} already rated {response.piece_id}"
            )
        self._expire_leases()
        if p.open_piece != response.piece_id:
            raise UnissuedAssignment(
                f"{response.piece_id} was not issued to {p.id}"
            )
        expected = likert_ids_for(p.group)
        if sorted(response.answers) != sorted(expected):
            raise ValueError(
                f"answer set does not match the {p.group} questionnaire"
            )
        if any(not 1 <= v <= 5 for v in response.answers.values()):
            raise ValueError("Likert values must be in 1..5")
        if response.turing_answer not in TURING_ANSWERS:
            raise ValueError(f"invalid composer answer: {response.turing_answer}")
        self._emit(
            {
                "t": "responded",
                "pid": p.id,
                "piece": response.piece_id,
                "answers": response.answers,
                "turing": response.turing_answer,
                "ts": response.timestamp or self.clock(),
            }
        )

    # --- reporting ----------------------------------------------------------

    def piece_progress(self) -> list[dict]:
        rows = []
        for i, piece in enumerate(self.pieces):
            per_group = {g: int(self.counts[g][i]) for g in GROUPS}
            total = sum(per_group.values())
            rows.append(
                {
                    "piece_id": piece.id,
                    "total": total,
                    **{g.lower(): c for g, c in per_group.items()},
                    "satisfied": total >= self.quota.min_total
                    and all(
                        per_group[g] >= self.quota.min_for(g) for g in GROUPS
                    ),
                }
            )
        return rows

    def quotas_met(self) -> bool:
        return all(row["satisfied"] for row in self.piece_progress())

    def participant_progress(self, participant_id: str) -> dict:
        p = self.participants.get(participant_id)
        if p is None:
            raise UnknownParticipant(participant_id)
        cap = self.workload_caps.get(p.group)
        return {"completed": len(p.rated), "cap": cap}

    EXPORT_HEADER = (
        "participant_id,group,piece_id,dataset,source,"
        "question_id,value,turing_answer,timestamp"
    )

    def export_responses(self) -> str:
        """One row per (participant, piece, question), unblinded."""
        lines = [self.EXPORT_HEADER]
        for r in self.responses:
            p = self.participants[r.participant_id]
            piece = self.pieces[self.piece_index[r.piece_id]]
            for qid in likert_ids_for(p.group):
                lines.append(
                    f"{p.id},{p.group},{piece.id},{piece.dataset},{piece.source},"
                    f"{qid},{r.answers[qid]},,{r.timestamp:.3f}"
                )
            lines.append(
                f"{p.id},{p.group},{piece.id},{piece.dataset},{piece.source},"
                f"{TURING_QUESTION[0]},,{r.turing_answer},{r.timestamp:.3f}"
            )
        return "\n".join(lines) + "\n"


def default_workload_caps(
    n_pieces: int, quota: QuotaPlan, cohort: dict[str, int]
) -> dict[str, int]:
    """ceil(total group slots / group size) per listener group."""
    caps = {}
    for group, size in cohort.items():
        if size > 0:
            caps[group] = math.ceil(n_pieces * quota.min_for(group) / size)
    return caps
