"""On-disk study layout: study.json (pieces + config) and events.log."""

from __future__ import annotations

import json
import os
from typing import Callable, Optional

from ..midi.smf import parse_midi, write_midi
from .engine import Piece, QuotaPlan, StudyEngine

STUDY_FILE = "study.json"
EVENTS_FILE = "events.log"


def init_study(
    directory: str,
    pieces: list[Piece],
    quota: QuotaPlan = QuotaPlan(),
    seed: int = 0,
    lease_seconds: float = 1800.0,
) -> None:
    os.makedirs(directory, exist_ok=True)
    doc = {
        "version": 1,
        "seed": seed,
        "lease_seconds": lease_seconds,
        "quota": {
            "min_total": quota.min_total,
            "min_normal": quota.min_normal,
            "min_amateur": quota.min_amateur,
            "min_expert": quota.min_expert,
        },
        "pieces": [
            {
                "id": p.id,
                "dataset": p.dataset,
                "source": p.source,
                "midi": write_midi(p.score).hex(),
            }
            for p in pieces
        ],
    }
    with open(os.path.join(directory, STUDY_FILE), "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
    log = os.path.join(directory, EVENTS_FILE)
    if not os.path.exists(log):
        open(log, "w").close()


def load_study(
    directory: str,
    clock: Optional[Callable[[], float]] = None,
    workload_caps: Optional[dict[str, int]] = None,
    append: bool = True,
) -> StudyEngine:
    with open(os.path.join(directory, STUDY_FILE), "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != 1:
        raise ValueError(f"unknown study file version: {doc.get('version')}")
    pieces = [
        Piece(
            id=p["id"],
            dataset=p["dataset"],
            source=p["source"],
            score=parse_midi(bytes.fromhex(p["midi"])),
        )
        for p in doc["pieces"]
    ]
    quota = QuotaPlan(**doc["quota"])
    engine = StudyEngine.replay(
        pieces,
        os.path.join(directory, EVENTS_FILE),
        append=append,
        quota=quota,
        seed=doc["seed"],
        lease_seconds=doc["lease_seconds"],
        clock=clock,
        workload_caps=workload_caps,
    )
    return engine
