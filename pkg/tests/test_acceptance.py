"""Acceptance gate: every primary guarantee of the suite, one pass/fail line
each, at the stated tolerance and runtime budget."""

import functools
import json
import math
import os
import random
import time

import numpy as np
import pytest
import torch

from muspike.midi import Note, Score, parse_midi, quantize, write_midi
from muspike import analysis as A
from muspike import metrics as M
from muspike import snn
from muspike import tokens as T
from muspike.study import (
    AMATEUR,
    EXPERT,
    GROUPS,
    HUMAN_SOURCE,
    NORMAL,
    QuotaPlan,
    StudyEngine,
    curate,
    init_study,
    load_study,
    make_synthetic_catalog,
    simulate_study,
)

from conftest import grid_score
import test_metrics as MO  # independent brute-force metric oracles
from test_smf import approx_scores_equal, has_same_pitch_overlap
from test_snn import _smooth_net_loss, _two_neuron_net, train_pattern


def criterion(name):
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            start = time.time()
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"FAIL [{time.time() - start:6.1f}s] {name}")
                raise
            print(f"PASS [{time.time() - start:6.1f}s] {name}")

        return wrapper

    return deco


@criterion("LIF correctness: first spike at step 2; zero-input decay monotone")
def test_lif_correctness():
    start = time.time()
    p = snn.LIFParams(tau_m=2.0, v_th=0.6, v_reset=0.0, r=1.0)
    st = snn.LIFState.zeros(1, p)
    st, s1 = snn.lif_step(st, np.array([1.0]), p)
    assert s1[0] == 0.0 and st.v[0] == pytest.approx(0.5, abs=1e-12)
    st, s2 = snn.lif_step(st, np.array([1.0]), p)
    assert s2[0] == 1.0  # first spike at step 2 of the Euler iteration
    quiet = snn.LIFParams(tau_m=2.0, v_th=5.0)
    st = snn.LIFState(v=np.array([1.0]), spiked=np.zeros(1))
    prev = st.v[0]
    for _ in range(100):
        st, _ = snn.lif_step(st, np.array([0.0]), quiet)
        assert st.v[0] < prev
        prev = st.v[0]
    assert time.time() - start < 1.0


@criterion("Surrogate-gradient fidelity: FD match within 1e-4 on 100 draws")
def test_surrogate_gradient_fidelity():
    start = time.time()
    for draw in range(100):
        w1, w2, x = _two_neuron_net(seed=5000 + draw)
        loss = _smooth_net_loss(w1, w2, x)
        loss.backward()
        h = 1e-6
        for w in (w1, w2):
            analytic = w.grad.detach().clone()
            fd = torch.zeros_like(analytic)
            with torch.no_grad():
                for i in range(w.shape[0]):
                    for j in range(w.shape[1]):
                        orig = w[i, j].item()
                        w[i, j] = orig + h
                        up = _smooth_net_loss(w1, w2, x).item()
                        w[i, j] = orig - h
                        down = _smooth_net_loss(w1, w2, x).item()
                        w[i, j] = orig
                        fd[i, j] = (up - down) / (2 * h)
            rel = float((analytic - fd).norm()) / max(float(fd.norm()), 1e-8)
            assert rel < 1e-4
    assert time.time() - start < 10.0


@criterion("Toy memorization: >=90% field accuracy in 500 epochs, bit-reproducible")
def test_toy_memorization():
    start = time.time()
    model_a, losses_a, seq = train_pattern(seed=3)
    assert snn.field_accuracy(model_a, seq) >= 0.90
    model_b, losses_b, _ = train_pattern(seed=3)
    assert losses_a == losses_b
    assert all(
        torch.equal(t1, t2)
        for t1, t2 in zip(model_a.state_dict().values(), model_b.state_dict().values())
    )
    assert time.time() - start < 120.0


@criterion("Metric oracle equivalence on 1000 random scores + analytic anchors")
def test_metric_oracle_equivalence():
    start = time.time()
    rng = random.Random(42)
    for i in range(1000):
        s = grid_score(rng, n_notes=rng.randint(2, 10), polyphonic=(i % 3 == 0))
        q = quantize(s, 4)
        chords = MO.random_chords(rng, s.duration_seconds)
        assert M.pitch_count(s) == len({n.pitch for n in s.notes})
        assert M.pitch_entropy(s) == pytest.approx(MO.oracle_pe(s), abs=1e-6)
        assert M.pitch_class_entropy(s) == pytest.approx(MO.oracle_pce(s), abs=1e-6)
        assert M.pitch_in_scale_rate(s) == pytest.approx(MO.oracle_psr(s), abs=1e-9)
        avg, rate = M.polyphony(q)
        o_avg, o_rate = MO.oracle_polyphony(q)
        assert avg == pytest.approx(o_avg, abs=1e-9)
        assert rate == pytest.approx(o_rate, abs=1e-9)
        if len({n.onset for n in s.notes}) >= 2:
            assert M.avg_ioi(s) == pytest.approx(MO.oracle_ioi(s), abs=1e-9)
        line = MO.oracle_melody(q)
        if len(line) >= 2:
            mat, scalar = M.nltm(q)
            o_mat, o_scalar = MO.oracle_nltm(q)
            assert np.allclose(mat, o_mat, atol=1e-9)
            assert scalar == pytest.approx(o_scalar, abs=1e-6)
        assert M.empty_beat_rate(q) == pytest.approx(MO.oracle_ebr(q), abs=1e-9)
        o_gc = MO.oracle_gc(q)
        if o_gc is not None:
            assert M.groove_consistency(q) == pytest.approx(o_gc, abs=1e-6)
        o_pcs = MO.oracle_pcs(q, chords)
        if o_pcs is not None:
            assert M.pitch_consonance_score(q, chords) == pytest.approx(o_pcs, abs=1e-9)
        o_ct = MO.oracle_ctnctr(q, chords)
        if o_ct is not None:
            assert M.ctnctr(q, chords) == pytest.approx(o_ct, abs=1e-9)

    # analytic anchors
    uni = Score(
        notes=tuple(Note(60 + i, i * 0.5, 0.5, 64) for i in range(12))
    )
    assert M.pitch_class_entropy(uni) == pytest.approx(3.5850, abs=1e-4)
    bars = tuple(
        Note(60, b * 2.0 + k * 0.5, 0.4, 64) for b in range(4) for k in range(4)
    )
    assert M.groove_consistency(quantize(Score(notes=bars), 4)) == pytest.approx(1.0)
    from muspike.midi import ChordAnnotation

    cmaj = [ChordAnnotation(0.0, 0, "maj")]
    triad = tuple(
        Note(p, i * 0.5, 0.5, 64) for i, p in enumerate((60, 64, 67, 72))
    )
    assert M.ctnctr(quantize(Score(notes=triad), 4), cmaj) == pytest.approx(1.0)
    f_over_c = quantize(Score(notes=(Note(65, 0.0, 1.0, 64),)), 4)
    assert M.pitch_consonance_score(f_over_c, cmaj) == pytest.approx(-0.667, abs=1e-3)
    assert time.time() - start < 30.0


@criterion("Metric invariances: transposition and time-scale suites, 500 each")
def test_metric_invariances():
    start = time.time()
    rng = random.Random(77)
    for _ in range(500):
        s = grid_score(rng, n_notes=rng.randint(2, 8))
        if any(n.pitch > 115 for n in s.notes):
            continue
        t = MO.transpose(s, 12)
        assert M.pitch_count(t) == M.pitch_count(s)
        assert M.pitch_range(t) == M.pitch_range(s)
        assert M.pitch_entropy(t) == pytest.approx(M.pitch_entropy(s), abs=1e-9)
        assert M.pitch_class_entropy(t) == pytest.approx(M.pitch_class_entropy(s), abs=1e-9)
        assert M.pitch_in_scale_rate(t) == pytest.approx(M.pitch_in_scale_rate(s), abs=1e-9)
    for _ in range(500):
        s = grid_score(rng, n_notes=rng.randint(2, 8), bpm=120.0)
        slow = Score(
            notes=tuple(
                Note(n.pitch, n.onset * 2, n.duration * 2, n.velocity) for n in s.notes
            ),
            tempo_map=((0.0, 60.0),),
        )
        q, qs = quantize(s, 4), quantize(slow, 4)
        assert [(n.onset_cell, n.duration_cells) for n in q.notes] == [
            (n.onset_cell, n.duration_cells) for n in qs.notes
        ]
        assert M.empty_beat_rate(qs) == pytest.approx(M.empty_beat_rate(q), abs=1e-12)
        if len({n.onset for n in s.notes}) >= 2:
            assert M.avg_ioi(slow) == pytest.approx(2 * M.avg_ioi(s), abs=1e-9)
    assert time.time() - start < 30.0


@criterion("Tukey HSD: hand q=1.7321, q^2=2F, CDF monotone, -1.1313 gap")
def test_tukey_hsd():
    start = time.time()
    (r,) = A.tukey_hsd([[1, 2, 3], [2, 3, 4]], labels=["A", "B"])
    assert r.mean_diff == pytest.approx(1.0, abs=1e-9)
    assert r.q == pytest.approx(math.sqrt(3.0), abs=1e-6)  # 1.7321 at 4 dp
    assert round(r.q, 4) == 1.7321

    rng = random.Random(5)
    for _ in range(200):
        n = rng.randint(3, 12)
        a = [rng.gauss(0, 1) for _ in range(n)]
        b = [rng.gauss(0.4, 1) for _ in range(n)]
        f, _, _, _ = A.anova_oneway([a, b])
        (res,) = A.tukey_hsd([a, b])
        assert res.q**2 == pytest.approx(2 * f, abs=1e-9, rel=1e-9)

    for _ in range(1000):
        k = rng.randint(2, 8)
        df = rng.randint(2, 120)
        q1 = rng.uniform(0, 8)
        q2 = q1 + rng.uniform(0.01, 2)
        assert A.studentized_range_cdf(q2, k, df) >= A.studentized_range_cdf(q1, k, df) - 1e-12

    gap = -1.1313
    noise = [rng.gauss(0, 0.5) for _ in range(40)]
    noise = [v - float(np.mean(noise)) for v in noise]
    labels = ["Reference", "S-Transformer", "M2", "M3", "M4", "M5"]
    offsets = [4.2, 4.2 + gap, 3.4, 3.1, 2.9, 2.6]
    groups = [[v + off for v in noise] for off in offsets]
    lookup = {r.pair: r for r in A.tukey_hsd(groups, labels=labels)}
    assert lookup[("Reference", "S-Transformer")].mean_diff == pytest.approx(gap, abs=1e-9)
    assert time.time() - start < 60.0


@criterion("Study protocol: 48/15/13 over 810 pieces meets quotas; replay + crash-safe")
def test_study_protocol(tmp_path):
    start = time.time()
    catalog = make_synthetic_catalog(seed=0)
    pieces = curate(catalog, seed=0)
    study_dir = os.path.join(tmp_path, "study")
    init_study(study_dir, pieces, seed=0)

    # crash after 50% of the full run, reload from the log, resume
    engine = load_study(study_dir)
    target = 19440
    half = simulate_study(engine, seed=0, stop_after_responses=target // 2)
    assert half.stopped_early and half.responses == target // 2
    engine.close()

    resumed = load_study(study_dir)
    assert len(resumed.responses) == target // 2  # zero accepted responses lost
    final = simulate_study(resumed, seed=0)
    assert final.quotas_met
    for row in resumed.piece_progress():
        assert row["total"] >= 24
        assert row["normal"] >= 16 and row["amateur"] >= 4 and row["expert"] >= 4
    resumed.close()

    # log replay reproduces the final state bit-exactly
    replayed = load_study(study_dir, append=False)
    assert replayed.export_responses() == resumed.export_responses()
    for g in GROUPS:
        assert (replayed.counts[g] == resumed.counts[g]).all()
    assert time.time() - start < 120.0


@criterion("Curation: exactly 750 AI + 60 human pieces, all <= 30 s after trim")
def test_curation():
    catalog = make_synthetic_catalog(seed=13)
    pieces = curate(catalog, seed=13)
    ai = sum(1 for p in pieces if p.source != HUMAN_SOURCE)
    human = sum(1 for p in pieces if p.source == HUMAN_SOURCE)
    assert (ai, human) == (750, 60)
    assert all(p.score.duration_seconds <= 30.0 + 1e-9 for p in pieces)


@criterion("Blindness: 10,000 participant-facing payloads contain no source label")
def test_blindness():
    from fastapi.testclient import TestClient

    from muspike.service import create_app

    labels = [
        b"S-Transformer", b"S-LSTM", b"S-RNN", b"S-GAN", b"S-CNN",
        b"Human", b"Original",
    ]
    catalog = make_synthetic_catalog(seed=21, per_model=2, human_per_dataset=2)
    pieces = curate(catalog, seed=21, per_model=2, human_per_dataset=2)
    engine = StudyEngine(pieces, QuotaPlan(), seed=21)
    client = TestClient(create_app(engine, admin_key="k"))
    rng = random.Random(21)
    auths = []
    for g in (NORMAL,) * 12 + (AMATEUR,) * 4 + (EXPERT,) * 4:
        r = client.post("/participants", json={"group": g})
        assert not any(l in r.content for l in labels)
        auths.append({"Authorization": f"Bearer {r.json()['token']}"})
    scanned = len(auths)
    while scanned < 10_000:
        auth = rng.choice(auths)
        r = client.get("/session/next", headers=auth)
        assert not any(l in r.content for l in labels)
        scanned += 1
        body = r.json()
        if body["done"]:
            continue
        a = client.get(f"/audio/{body['piece_id']}", headers=auth)
        assert not any(l in a.content for l in labels)
        scanned += 1
        answers = {
            it["id"]: 3 for it in body["questionnaire"] if it["kind"] == "likert"
        }
        s = client.post(
            "/responses",
            headers=auth,
            json={
                "piece_id": body["piece_id"],
                "answers": answers,
                "turing_answer": "Uncertain",
            },
        )
        assert not any(l in s.content for l in labels)
        scanned += 1
    assert scanned >= 10_000


@criterion("Parser round-trip: fixed point on 500 scores; hand varlen fixture")
def test_parser_round_trip():
    import struct

    rng = random.Random(31)
    for _ in range(500):
        s = grid_score(rng, n_notes=rng.randint(1, 14), bpm=rng.choice((60, 90, 120)))
        once = parse_midi(write_midi(s))
        twice = parse_midi(write_midi(once))
        assert approx_scores_equal(once, twice, tol=1e-9)
        if not has_same_pitch_overlap(s):
            assert approx_scores_equal(s, once)

    # hand-decoded byte-level oracle: delta 0x81 0x48 = 200 ticks
    body = bytes([0x00, 0x90, 0x3C, 0x40, 0x81, 0x48, 0x3C, 0x00, 0x00, 0xFF, 0x2F, 0x00])
    data = (
        b"MThd" + struct.pack(">IHHH", 6, 0, 1, 480)
        + b"MTrk" + struct.pack(">I", len(body)) + body
    )
    score = parse_midi(data)
    assert len(score.notes) == 1
    assert score.notes[0].duration == pytest.approx(200 * 500_000 / 480 / 1e6)
