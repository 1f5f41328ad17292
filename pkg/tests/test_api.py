import json
import os
import random

import pytest
from fastapi.testclient import TestClient

from muspike.service import create_app
from muspike.study import (
    AMATEUR,
    EXPERT,
    GROUPS,
    NORMAL,
    QuotaPlan,
    StudyEngine,
    curate,
    init_study,
    load_study,
    make_synthetic_catalog,
)

SOURCE_LABELS = ("S-Transformer", "S-LSTM", "S-RNN", "S-GAN", "S-CNN", "Human", "Original")

ADMIN = {"X-Admin-Key": "secret"}


def make_engine(seed=3, per_model=1, human_per_dataset=1, **kwargs):
    catalog = make_synthetic_catalog(seed=seed, per_model=per_model, human_per_dataset=human_per_dataset)
    pieces = curate(catalog, seed=seed, per_model=per_model, human_per_dataset=human_per_dataset)
    return StudyEngine(pieces, QuotaPlan(), seed=seed, **kwargs)


@pytest.fixture
def client():
    return TestClient(create_app(make_engine(), admin_key="secret"))


def register(client, group=NORMAL):
    r = client.post("/participants", json={"group": group})
    assert r.status_code == 200
    return {"Authorization": f"Bearer {r.json()['token']}"}


def next_assignment(client, auth):
    r = client.get("/session/next", headers=auth)
    assert r.status_code == 200
    return r.json()


def submit(client, auth, payload):
    return client.post("/responses", headers=auth, json=payload)


def answer_payload(body):
    answers = {it["id"]: 3 for it in body["questionnaire"] if it["kind"] == "likert"}
    return {"piece_id": body["piece_id"], "answers": answers, "turing_answer": "Uncertain"}


# --- auth -------------------------------------------------------------------


def test_missing_and_bad_tokens_rejected(client):
    assert client.get("/session/next").status_code == 401
    bad = {"Authorization": "Bearer ffffffff"}
    assert client.get("/session/next", headers=bad).status_code == 401
    assert client.get("/audio/p01", headers=bad).status_code == 401


def test_bad_admin_key_rejected(client):
    assert client.get("/admin/progress").status_code == 401
    assert client.get("/admin/progress", headers={"X-Admin-Key": "wrong"}).status_code == 401
    assert client.get("/admin/export", headers={"X-Admin-Key": "wrong"}).status_code == 401


def test_unknown_group_rejected(client):
    assert client.post("/participants", json={"group": "Superfan"}).status_code == 400


# --- questionnaire shapes ---------------------------------------------------


@pytest.mark.parametrize("group,n_items", [(NORMAL, 9), (AMATEUR, 11), (EXPERT, 14)])
def test_questionnaire_item_counts(client, group, n_items):
    auth = register(client, group)
    body = next_assignment(client, auth)
    assert not body["done"]
    assert len(body["questionnaire"]) == n_items
    kinds = [it["kind"] for it in body["questionnaire"]]
    assert kinds.count("composer") == 1
    assert kinds[-1] == "composer"  # the composer item comes last
    assert kinds[:-1] == ["likert"] * (n_items - 1)


def test_session_progress_reported(client):
    auth = register(client)
    body = next_assignment(client, auth)
    assert body["progress"]["completed"] == 0
    submit(client, auth, answer_payload(body)).raise_for_status()
    body2 = next_assignment(client, auth)
    assert body2["progress"]["completed"] == 1


# --- audio delivery ---------------------------------------------------------


def test_audio_only_for_assigned_pieces(client):
    auth = register(client)
    body = next_assignment(client, auth)
    pid = body["piece_id"]
    r = client.get(f"/audio/{pid}", headers=auth)
    assert r.status_code == 200
    assert r.headers["content-type"] == "audio/wav"
    assert int(r.headers["content-length"]) == len(r.content)
    assert r.content[:4] == b"RIFF"
    # a piece this participant was never given is unreachable
    unseen = [p for p in ("p01", "p02", "p03", "p60") if p != pid][0]
    assert client.get(f"/audio/{unseen}", headers=auth).status_code == 404
    assert client.get("/audio/zzz", headers=auth).status_code == 404


def test_audio_remains_reachable_after_rating(client):
    auth = register(client)
    body = next_assignment(client, auth)
    submit(client, auth, answer_payload(body)).raise_for_status()
    assert client.get(f"/audio/{body['piece_id']}", headers=auth).status_code == 200


# --- submission rules -------------------------------------------------------


def test_duplicate_submission_conflict(client):
    auth = register(client)
    body = next_assignment(client, auth)
    payload = answer_payload(body)
    assert submit(client, auth, payload).status_code == 200
    # a fresh assignment is open now; resubmitting the old piece must 409
    next_assignment(client, auth)
    assert submit(client, auth, payload).status_code == 409


def test_unissued_submission_rejected(client):
    auth = register(client)
    body = next_assignment(client, auth)
    payload = answer_payload(body)
    payload["piece_id"] = next(
        p for p in ("p01", "p02", "p03") if p != body["piece_id"]
    )
    assert submit(client, auth, payload).status_code == 400


def test_wrong_answer_set_rejected(client):
    auth = register(client)
    body = next_assignment(client, auth)
    payload = answer_payload(body)
    payload["answers"].popitem()
    assert submit(client, auth, payload).status_code == 400
    payload = answer_payload(body)
    payload["answers"][next(iter(payload["answers"]))] = 11
    assert submit(client, auth, payload).status_code == 400
    payload = answer_payload(body)
    payload["turing_answer"] = "Alien"
    assert submit(client, auth, payload).status_code == 400


def test_done_when_capped():
    engine = make_engine(workload_caps={NORMAL: 1})
    client = TestClient(create_app(engine, admin_key="secret"))
    auth = register(client)
    body = next_assignment(client, auth)
    submit(client, auth, answer_payload(body)).raise_for_status()
    done = next_assignment(client, auth)
    assert done["done"] is True


# --- blindness --------------------------------------------------------------


def scan_for_labels(blob: bytes):
    return [label for label in SOURCE_LABELS if label.encode() in blob]


def test_blindness_byte_scan_over_many_payloads():
    """Byte-scan of 10,000+ recorded participant-facing payloads: no source
    or model label ever appears."""
    engine = make_engine(seed=8, per_model=2, human_per_dataset=2)
    client = TestClient(create_app(engine, admin_key="secret"))
    rng = random.Random(8)
    payloads = 0
    auths = [
        register(client, g)
        for g in (NORMAL,) * 12 + (AMATEUR,) * 4 + (EXPERT,) * 4
    ]
    while payloads < 10_000:
        auth = rng.choice(auths)
        r = client.get("/session/next", headers=auth)
        assert scan_for_labels(r.content) == []
        payloads += 1
        body = r.json()
        if body["done"]:
            continue
        a = client.get(f"/audio/{body['piece_id']}", headers=auth)
        assert scan_for_labels(a.content) == []
        payloads += 1
        s = submit(client, auth, answer_payload(body))
        assert scan_for_labels(s.content) == []
        payloads += 1
    reg = client.post("/participants", json={"group": NORMAL})
    assert scan_for_labels(reg.content) == []


def test_admin_export_is_unblinded():
    engine = make_engine()
    client = TestClient(create_app(engine, admin_key="secret"))
    auth = register(client)
    body = next_assignment(client, auth)
    submit(client, auth, answer_payload(body)).raise_for_status()
    export = client.get("/admin/export", headers=ADMIN)
    assert export.status_code == 200
    assert export.headers["content-type"].startswith("text/csv")
    # the admin view names the true source
    assert any(label in export.text for label in SOURCE_LABELS)


# --- admin progress ---------------------------------------------------------


def test_admin_progress_counts(client):
    auth = register(client)
    body = next_assignment(client, auth)
    submit(client, auth, answer_payload(body)).raise_for_status()
    prog = client.get("/admin/progress", headers=ADMIN).json()
    assert prog["responses"] == 1
    assert not prog["quotas_met"]
    assert sum(row["total"] for row in prog["pieces"]) == 1
    assert list(prog["participants"].values()) == [1]


# --- restart / persistence --------------------------------------------------


def test_server_restart_resumes_from_log(tmp_path):
    catalog = make_synthetic_catalog(seed=4, per_model=1, human_per_dataset=1)
    pieces = curate(catalog, seed=4, per_model=1, human_per_dataset=1)
    study_dir = os.path.join(tmp_path, "study")
    init_study(study_dir, pieces, seed=4)

    engine = load_study(study_dir)
    client = TestClient(create_app(engine, admin_key="secret"))
    auth = register(client)
    body = next_assignment(client, auth)
    submit(client, auth, answer_payload(body)).raise_for_status()
    open_body = next_assignment(client, auth)  # leave a lease open
    engine.close()

    engine2 = load_study(study_dir)
    client2 = TestClient(create_app(engine2, admin_key="secret"))
    # the same bearer token still works after restart
    resumed = next_assignment(client2, auth)
    assert resumed["piece_id"] == open_body["piece_id"]
    assert resumed["progress"]["completed"] == 1
    prog = client2.get("/admin/progress", headers=ADMIN).json()
    assert prog["responses"] == 1


# --- concurrency ------------------------------------------------------------


def test_fifty_interleaved_clients_quota_monotone():
    """50 participants interleaved at random never double-book beyond quota
    accounting: per-piece counts only grow and totals match responses."""
    engine = make_engine(seed=6, per_model=2, human_per_dataset=2)
    client = TestClient(create_app(engine, admin_key="secret"))
    rng = random.Random(6)
    auths = [
        register(client, rng.choice(GROUPS)) for _ in range(50)
    ]
    open_bodies: dict[int, dict] = {}
    prev_counts: dict[str, int] = {}
    submitted = 0
    for step in range(600):
        i = rng.randrange(len(auths))
        if i in open_bodies and rng.random() < 0.7:
            body = open_bodies.pop(i)
            r = submit(client, auths[i], answer_payload(body))
            assert r.status_code == 200
            submitted += 1
        else:
            body = next_assignment(client, auths[i])
            if not body["done"]:
                open_bodies[i] = body
        if step % 100 == 0:
            prog = client.get("/admin/progress", headers=ADMIN).json()
            counts = {row["piece_id"]: row["total"] for row in prog["pieces"]}
            for pid, c in counts.items():
                assert c >= prev_counts.get(pid, 0)  # monotone
            assert sum(counts.values()) == prog["responses"]
            prev_counts = counts
    assert submitted > 100
