"""Command-line entry point tying every capability together.

Progress notes go to stderr; data goes to files or stdout so commands stay
pipeable.  Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import functools
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import click

from .errors import MuspikeError
from .midi import parse_chord_sidecar, parse_midi, quantize, with_chords, write_midi
from . import metrics as M
from . import tokens as T
from . import analysis as A
from . import snn
from .study import (
    GROUPS,
    Piece,
    QuotaPlan,
    curate,
    init_study,
    load_study,
    make_synthetic_catalog,
    simulate_study,
)


def note(msg: str) -> None:
    click.echo(msg, err=True)


def domain_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except MuspikeError as exc:
            click.echo(f"{type(exc).__name__}: {exc}", err=True)
            sys.exit(1)

    return wrapper


def midi_files(directory: str) -> list[str]:
    out = []
    for root, _, files in os.walk(directory):
        for name in sorted(files):
            if name.lower().endswith((".mid", ".midi")):
                out.append(os.path.join(root, name))
    return sorted(out)


def read_score(path: str):
    with open(path, "rb") as fh:
        return parse_midi(fh.read())


@click.group()
def main() -> None:
    """Benchmark and evaluation toolkit for spiking symbolic music models."""


@main.command()
@click.argument("directory", type=click.Path(exists=True, file_okay=False))
@domain_errors
def ingest(directory: str) -> None:
    """Parse and validate every MIDI file under DIRECTORY."""
    paths = midi_files(directory)
    failures = 0
    for path in paths:
        try:
            score = read_score(path)
            click.echo(f"{path},ok,{len(score.notes)}")
        except MuspikeError as exc:
            failures += 1
            click.echo(f"{path},error,{type(exc).__name__}")
    note(f"parsed {len(paths) - failures}/{len(paths)} files")


@main.command()
@click.argument("directory", type=click.Path(exists=True, file_okay=False))
@click.option("--vocab", "vocab_path", required=True, type=click.Path())
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--resolution", default=4, show_default=True)
@domain_errors
def tokenize(directory: str, vocab_path: str, out_dir: str, resolution: int) -> None:
    """Tokenize a MIDI corpus; writes the vocab and one token dump per file."""
    paths = midi_files(directory)
    quantized = [quantize(read_score(p), resolution) for p in paths]
    vocab = T.build_vocab(quantized)
    with open(vocab_path, "w", encoding="utf-8") as fh:
        fh.write(vocab.dump())
    note(f"vocab written to {vocab_path}")
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        for path, q in zip(paths, quantized):
            name = os.path.splitext(os.path.basename(path))[0] + ".tokens"
            with open(os.path.join(out_dir, name), "w", encoding="utf-8") as fh:
                fh.write(T.dump_tokens(T.encode(q), vocab))
        note(f"{len(paths)} token dumps written to {out_dir}")


@main.command("train-toy")
@click.option("--corpus", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--epochs", required=True, type=int)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--vocab", "vocab_path", required=True, type=click.Path())
@click.option("--hidden", default=64, show_default=True)
@click.option("--lr", default=0.05, show_default=True)
@click.option("--resolution", default=4, show_default=True)
@domain_errors
def train_toy_cmd(
    corpus: str, epochs: int, seed: int, out_path: str, vocab_path: str,
    hidden: int, lr: float, resolution: int,
) -> None:
    """Train the toy spiking RNN on a MIDI corpus."""
    paths = midi_files(corpus)
    quantized = [quantize(read_score(p), resolution) for p in paths]
    vocab = T.build_vocab(quantized)
    with open(vocab_path, "w", encoding="utf-8") as fh:
        fh.write(vocab.dump())
    sequences = [
        [vocab.encode_token(tok) for tok in T.encode(q)] for q in quantized
    ]
    sizes = [vocab.size(f) for f in T.FIELD_NAMES]
    model = snn.ToySRNN(field_sizes=sizes, hidden=hidden, seed=seed)
    model, losses = snn.train_toy(model, sequences, epochs=epochs, lr=lr)
    snn.save_checkpoint(model, out_path)
    note(f"final loss {losses[-1]:.4f}" if losses else "no epochs run")
    note(f"checkpoint written to {out_path}")


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True))
@click.option("--length", required=True, type=int)
@click.option("--seed", default=0, show_default=True)
@click.option("--temperature", default=1.0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@domain_errors
def generate(model_path, vocab_path, length, seed, temperature, out_path) -> None:
    """Sample a token sequence from a trained model and write it as MIDI."""
    model = snn.load_checkpoint(model_path)
    with open(vocab_path, "r", encoding="utf-8") as fh:
        vocab = T.Vocab.load(fh.read())
    metric_idx = vocab.index_of("ttype", T.METRIC)
    tempo_idx = 1 if vocab.size("tempo") > 1 else 0
    beat_idx = 1 if vocab.size("bar_beat") > 1 else 0
    prompt = [(metric_idx, tempo_idx, 0, beat_idx, 0, 0, 0)]
    rows = snn.generate(
        model, vocab, prompt, length=length, temperature=temperature, seed=seed
    )
    tokens = snn.tokens_from_indices(rows, vocab)
    score = T.decode(tokens, vocab)
    with open(out_path, "wb") as fh:
        fh.write(write_midi(score))
    note(f"{len(rows)} tokens -> {len(score.notes)} notes -> {out_path}")


def _eval_one(path: str, chords_dir: str | None):
    score = read_score(path)
    if chords_dir:
        sidecar = os.path.join(
            chords_dir, os.path.splitext(os.path.basename(path))[0] + ".chords"
        )
        if os.path.exists(sidecar):
            with open(sidecar, "r", encoding="utf-8") as fh:
                score = with_chords(score, parse_chord_sidecar(fh.read()))
    return M.evaluate_all(score)


@main.command("eval-objective")
@click.argument("directory", type=click.Path(exists=True, file_okay=False))
@click.option("--chords", "chords_dir", type=click.Path(file_okay=False), default=None)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--jobs", default=4, show_default=True)
@domain_errors
def eval_objective(directory, chords_dir, out_path, jobs) -> None:
    """Compute the objective metric battery for every MIDI file."""
    paths = midi_files(directory)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        reports = list(pool.map(lambda p: _eval_one(p, chords_dir), paths))
    rows = [(os.path.basename(p), r) for p, r in zip(paths, reports)]
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(M.report_csv(rows))
    note(f"{len(rows)} rows written to {out_path}")


@main.command()
@click.argument("directory", type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--aggregate", "do_aggregate", is_flag=True)
@click.option("--heatmaps", "do_heatmaps", is_flag=True)
@domain_errors
def report(directory, out_dir, do_aggregate, do_heatmaps) -> None:
    """Aggregate metrics over a <dataset>/<source>/*.mid corpus layout."""
    os.makedirs(out_dir, exist_ok=True)
    grouped = []
    nltm_sums: dict[tuple[str, str], list] = {}
    for path in midi_files(directory):
        rel = os.path.relpath(path, directory).split(os.sep)
        if len(rel) < 3:
            note(f"skipping {path}: expected <dataset>/<source>/file.mid")
            continue
        dataset, source = rel[0], rel[1]
        rep = M.evaluate_all(read_score(path))
        grouped.append(((dataset, source), rep))
        if rep.nltm is not None:
            nltm_sums.setdefault((dataset, source), []).append(rep.nltm)
    if do_aggregate:
        table = M.aggregate(grouped)
        with open(os.path.join(out_dir, "aggregate.csv"), "w", encoding="utf-8") as fh:
            fh.write(M.aggregate_csv(table))
        note(f"aggregate table: {len(table.rows)} rows")
    if do_heatmaps:
        import numpy as np

        for (dataset, source), mats in sorted(nltm_sums.items()):
            mean = np.mean(mats, axis=0)
            base = os.path.join(out_dir, f"nltm_{dataset}_{source}")
            with open(base + ".pgm", "w", encoding="utf-8") as fh:
                fh.write(M.nltm_pgm(mean))
            with open(base + ".csv", "w", encoding="utf-8") as fh:
                fh.write(M.nltm_csv(mean))
        note(f"{len(nltm_sums)} heatmaps written")


@main.group()
def study() -> None:
    """Listening-study management."""


@study.command("init")
@click.argument("catalog_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--out", "study_dir", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
@click.option("--per-model", default=30, show_default=True)
@click.option("--human-per-dataset", default=12, show_default=True)
@domain_errors
def study_init(catalog_dir, study_dir, seed, per_model, human_per_dataset) -> None:
    """Curate the evaluation set from a <dataset>/<source>/*.mid catalog."""
    catalog: dict[tuple[str, str], list] = {}
    datasets, sources = set(), set()
    for path in midi_files(catalog_dir):
        rel = os.path.relpath(path, catalog_dir).split(os.sep)
        if len(rel) < 3:
            continue
        dataset, source = rel[0], rel[1]
        datasets.add(dataset)
        sources.add(source)
        catalog.setdefault((dataset, source), []).append(read_score(path))
    models = sorted(s for s in sources if s != "Human")
    pieces = curate(
        catalog,
        seed=seed,
        per_model=per_model,
        human_per_dataset=human_per_dataset,
        datasets=sorted(datasets),
        models=models,
    )
    init_study(study_dir, pieces, seed=seed)
    note(f"study initialized with {len(pieces)} pieces at {study_dir}")


@study.command("serve")
@click.option("--study", "study_dir", envvar="MUSPIKE_STUDY", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--addr", envvar="MUSPIKE_ADDR", default="127.0.0.1:8000",
              show_default=True)
@click.option("--admin-key", required=True)
@domain_errors
def study_serve(study_dir, addr, admin_key) -> None:
    """Serve the study over HTTP."""
    import time

    import uvicorn

    from .service import create_app

    engine = load_study(study_dir, clock=time.time)
    app = create_app(engine, admin_key=admin_key, precache_audio=True)
    host, _, port = addr.partition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8000))


@study.command("simulate")
@click.option("--participants", default="48,15,13", show_default=True,
              help="Normal,Amateur,Expert cohort sizes")
@click.option("--study", "study_dir", type=click.Path(file_okay=False), default=None,
              help="existing study directory; a synthetic study is used if omitted")
@click.option("--seed", default=0, show_default=True)
@domain_errors
def study_simulate(participants, study_dir, seed) -> None:
    """Run a synthetic cohort through the whole study and check quotas."""
    sizes = [int(x) for x in participants.split(",")]
    if len(sizes) != 3:
        raise click.UsageError("--participants needs three comma-separated sizes")
    cohort = dict(zip(GROUPS, sizes))
    if study_dir:
        engine = load_study(study_dir)
    else:
        from .study.engine import StudyEngine

        pieces = curate(make_synthetic_catalog(seed), seed=seed)
        engine = StudyEngine(pieces, QuotaPlan(), seed=seed)
    rep = simulate_study(engine, cohort=cohort, seed=seed)
    click.echo(json.dumps({
        "responses": rep.responses,
        "participants": rep.participants,
        "quotas_met": rep.quotas_met,
        "per_group": rep.per_group_counts,
    }))
    if not rep.quotas_met:
        sys.exit(1)


@study.command("export")
@click.option("--study", "study_dir", envvar="MUSPIKE_STUDY", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_path", type=click.Path(), default=None)
@domain_errors
def study_export(study_dir, out_path) -> None:
    """Export all recorded responses as CSV."""
    engine = load_study(study_dir, append=False)
    csv_text = engine.export_responses()
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(csv_text)
        note(f"export written to {out_path}")
    else:
        click.echo(csv_text, nl=False)


@main.command()
@click.option("--responses", "responses_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--alpha", default=0.05, show_default=True)
@click.option("--per-participant", is_flag=True,
              help="average ratings per participant before testing")
@domain_errors
def analyze(responses_path, out_dir, alpha, per_participant) -> None:
    """Means, Tukey HSD tables and Turing accuracy from a response export."""
    with open(responses_path, "r", encoding="utf-8") as fh:
        rows = A.parse_response_export(fh.read())
    result = A.analyze_responses(rows, alpha=alpha, per_participant=per_participant)
    outputs = {
        "means.csv": A.means_csv(result),
        "tukey.csv": A.tukey_csv(result),
        "turing.csv": A.turing_csv(result.turing),
    }
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        for name, text in outputs.items():
            with open(os.path.join(out_dir, name), "w", encoding="utf-8") as fh:
                fh.write(text)
        note(f"analysis written to {out_dir}")
    else:
        for name, text in outputs.items():
            click.echo(f"# {name}")
            click.echo(text, nl=False)


if __name__ == "__main__":
    main()
