"""Synthetic catalogs and full-cohort study simulation."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional

from ..midi.score import Note, Score
from .engine import (
    AMATEUR,
    DATASETS,
    EXPERT,
    GROUPS,
    HUMAN_SOURCE,
    MODEL_SOURCES,
    NORMAL,
    Response,
    StudyEngine,
    default_workload_caps,
    likert_ids_for,
)

TURING_CHOICES = ("Human", "AI", "Uncertain")


def random_score(rng: random.Random, n_notes: int = 8, bpm: float = 120.0) -> Score:
    notes = []
    onset = 0.0
    for _ in range(n_notes):
        notes.append(
            Note(
                pitch=rng.randint(48, 84),
                onset=onset,
                duration=rng.choice((0.25, 0.5, 1.0)),
                velocity=rng.randint(40, 110),
            )
        )
        onset += rng.choice((0.25, 0.5))
    return Score(notes=tuple(notes), tempo_map=((0.0, bpm),))


def make_synthetic_catalog(
    seed: int = 0,
    per_model: int = 30,
    human_per_dataset: int = 12,
    slack: int = 0,
) -> dict[tuple[str, str], list[Score]]:
    """A full catalog for every (dataset, source) cell, sized to the study
    defaults plus optional slack."""
    rng = random.Random(seed)
    catalog: dict[tuple[str, str], list[Score]] = {}
    for dataset in DATASETS:
        for source in (*MODEL_SOURCES, HUMAN_SOURCE):
            want = (human_per_dataset if source == HUMAN_SOURCE else per_model) + slack
            catalog[(dataset, source)] = [random_score(rng) for _ in range(want)]
    return catalog


@dataclass
class SimulationReport:
    responses: int
    participants: int
    quotas_met: bool
    stopped_early: bool
    per_group_counts: dict[str, int]


def synthetic_response(engine: StudyEngine, pid: str, piece_id: str, seed: int) -> Response:
    p = engine.participants[pid]
    rng = random.Random(f"{seed}:{pid}:{piece_id}")
    answers = {qid: rng.randint(1, 5) for qid in likert_ids_for(p.group)}
    return Response(
        participant_id=pid,
        piece_id=piece_id,
        answers=answers,
        turing_answer=rng.choice(TURING_CHOICES),
        timestamp=float(len(engine.responses) + 1),
    )


def ensure_cohort(
    engine: StudyEngine, cohort: dict[str, int], cap_slack: int = 0
) -> None:
    """Register however many participants each group is still short of.

    `cap_slack` raises every workload cap by that many pieces; with exactly
    tight capacity a greedy assignment can strand the last few quota slots,
    and a little slack absorbs that.
    """
    have = {g: 0 for g in GROUPS}
    for p in engine.participants.values():
        have[p.group] += 1
    for group, want in cohort.items():
        for _ in range(max(0, want - have.get(group, 0))):
            engine.register(group)
    caps = default_workload_caps(len(engine.pieces), engine.quota, cohort)
    engine.workload_caps = {g: cap + cap_slack for g, cap in caps.items()}


def simulate_study(
    engine: StudyEngine,
    cohort: Optional[dict[str, int]] = None,
    seed: int = 0,
    stop_after_responses: Optional[int] = None,
    cap_slack: int = 1,
) -> SimulationReport:
    """Run every participant to completion round-robin, with deterministic
    synthetic answers.  `stop_after_responses` models a crash mid-study; a
    later call on an engine replayed from the log resumes where it stopped.

    `cap_slack` defaults to one spare piece per participant: assignments only
    ever target quota-deficit pieces, so the slack never inflates the response
    count, but it guarantees the greedy endgame always finds an uncapped rater
    for the last few quota slots."""
    cohort = cohort or {NORMAL: 48, AMATEUR: 15, EXPERT: 13}
    ensure_cohort(engine, cohort, cap_slack=cap_slack)
    active = sorted(engine.participants)
    stopped_early = False
    while active and not stopped_early:
        still = []
        for pid in active:
            piece_id = engine.next_assignment(pid)
            if piece_id is None:
                continue
            engine.record_response(synthetic_response(engine, pid, piece_id, seed))
            if (
                stop_after_responses is not None
                and len(engine.responses) >= stop_after_responses
            ):
                stopped_early = True
                break
            still.append(pid)
        active = still
    per_group = {g: 0 for g in GROUPS}
    for r in engine.responses:
        per_group[engine.participants[r.participant_id].group] += 1
    return SimulationReport(
        responses=len(engine.responses),
        participants=len(engine.participants),
        quotas_met=engine.quotas_met(),
        stopped_early=stopped_early,
        per_group_counts=per_group,
    )
