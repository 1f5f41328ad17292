"""Descriptive stats, one-way ANOVA, Tukey HSD and Turing-test aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.special import betainc, gammaln, ndtr

from .errors import DegenerateGroups, EmptyResponses

HUMAN = "Human"
AI = "AI"
UNCERTAIN = "Uncertain"


def describe(samples: Sequence[float]) -> tuple[float, float]:
    """(arithmetic mean, population standard deviation)."""
    arr = np.asarray(samples, dtype=float)
    if arr.size == 0:
        raise ValueError("cannot describe an empty sample")
    return float(arr.mean()), float(arr.std())


def anova_oneway(groups: Sequence[Sequence[float]]) -> tuple[float, float, int, int]:
    """Returns (F, p, df_between, df_within)."""
    if len(groups) < 2:
        raise ValueError("need at least two groups")
    arrs = [np.asarray(g, dtype=float) for g in groups]
    if any(a.size < 2 for a in arrs):
        raise ValueError("each group needs at least two values")
    all_vals = np.concatenate(arrs)
    grand = all_vals.mean()
    ssb = sum(a.size * (a.mean() - grand) ** 2 for a in arrs)
    ssw = sum(((a - a.mean()) ** 2).sum() for a in arrs)
    df_b = len(arrs) - 1
    df_w = all_vals.size - len(arrs)
    if ssw == 0 and ssb == 0:
        raise DegenerateGroups("all values identical; F is undefined")
    if ssw == 0:
        raise DegenerateGroups("zero within-group variance; F is unbounded")
    f = (ssb / df_b) / (ssw / df_w)
    p = f_sf(f, df_b, df_w)
    return float(f), float(p), df_b, df_w


def f_sf(f: float, df1: int, df2: int) -> float:
    """Upper tail of the F distribution via the regularized incomplete beta."""
    if f <= 0:
        return 1.0
    x = df2 / (df2 + df1 * f)
    return float(betainc(df2 / 2.0, df1 / 2.0, x))


def _range_cdf_given_scale(x: np.ndarray, k: int, z: np.ndarray, wz: np.ndarray) -> np.ndarray:
    """P(range of k standard normals <= x) for each x, by Gauss-Legendre in z."""
    phi = np.exp(-0.5 * z**2) / math.sqrt(2 * math.pi)
    # inner[i, j] = (Phi(z_j) - Phi(z_j - x_i)) ** (k - 1)
    diff = ndtr(z[None, :]) - ndtr(z[None, :] - x[:, None])
    diff = np.clip(diff, 0.0, 1.0)
    inner = diff ** (k - 1)
    return k * (inner * (phi * wz)[None, :]).sum(axis=1)


def studentized_range_cdf(q: float, k: int, df: int, n_nodes: int = 160) -> float:
    """CDF of the studentized range by double numerical integration.

    Outer integral over the chi scale factor s (density of sqrt(chi2_df/df)),
    inner Gauss-Legendre integral over the normal range.  Absolute accuracy
    is well inside 1e-7 for the df/k ranges used here.
    """
    if q <= 0:
        return 0.0
    if k < 2 or df < 1:
        raise ValueError("need k >= 2 groups and df >= 1")
    zs, wz = np.polynomial.legendre.leggauss(n_nodes)
    z_lo, z_hi = -12.0, 12.0
    z = 0.5 * (z_hi - z_lo) * zs + 0.5 * (z_hi + z_lo)
    wzs = 0.5 * (z_hi - z_lo) * wz

    s_hi = 1.0 + 12.0 / math.sqrt(df)
    s_hi = max(s_hi, 6.0 / math.sqrt(df))
    ss, ws = np.polynomial.legendre.leggauss(n_nodes)
    s = 0.5 * s_hi * ss + 0.5 * s_hi
    wss = 0.5 * s_hi * ws

    log_norm = (df / 2.0) * math.log(df) - gammaln(df / 2.0) - (df / 2.0 - 1.0) * math.log(2.0)
    with np.errstate(divide="ignore"):
        log_dens = log_norm + (df - 1) * np.log(s) - df * s**2 / 2.0
    dens = np.exp(log_dens)
    inner = _range_cdf_given_scale(q * s, k, z, wzs)
    return float(min(1.0, max(0.0, (dens * inner * wss).sum())))


def studentized_range_sf(q: float, k: int, df: int) -> float:
    return 1.0 - studentized_range_cdf(q, k, df)


@dataclass(frozen=True)
class TukeyResult:
    pair: tuple[str, str]
    mean_diff: float
    q: float
    p: float
    significant: bool


def tukey_hsd(
    groups: Sequence[Sequence[float]],
    alpha: float = 0.05,
    labels: Optional[Sequence[str]] = None,
) -> list[TukeyResult]:
    """All pairwise comparisons via the studentized range distribution."""
    if len(groups) < 2:
        raise ValueError("need at least two groups")
    arrs = [np.asarray(g, dtype=float) for g in groups]
    if any(a.size < 2 for a in arrs):
        raise ValueError("each group needs at least two values")
    if labels is None:
        labels = [str(i) for i in range(len(arrs))]
    ssw = sum(((a - a.mean()) ** 2).sum() for a in arrs)
    df_w = sum(a.size for a in arrs) - len(arrs)
    if ssw == 0:
        raise DegenerateGroups("zero within-group variance")
    mse = ssw / df_w
    k = len(arrs)
    results = []
    for i in range(k):
        for j in range(i + 1, k):
            a, b = arrs[i], arrs[j]
            diff = float(b.mean() - a.mean())
            se = math.sqrt(mse * (1.0 / a.size + 1.0 / b.size) / 2.0)
            q = abs(diff) / se
            p = studentized_range_sf(q, k, df_w)
            results.append(
                TukeyResult(
                    pair=(labels[i], labels[j]),
                    mean_diff=diff,
                    q=q,
                    p=p,
                    significant=p < alpha,
                )
            )
    return results


@dataclass(frozen=True)
class TuringResponse:
    listener_group: str
    true_source: str  # HUMAN or a model name
    answer: str  # HUMAN, AI or UNCERTAIN


@dataclass(frozen=True)
class TuringAccuracy:
    overall: float
    by_group: dict[str, float]
    by_source: dict[str, float]
    n: int


def turing_accuracy(responses: Iterable[TuringResponse]) -> TuringAccuracy:
    """Accuracy of Human/AI judgments; Uncertain counts as incorrect."""
    responses = list(responses)
    if not responses:
        raise EmptyResponses("no Turing responses")

    def correct(r: TuringResponse) -> bool:
        if r.true_source == HUMAN:
            return r.answer == HUMAN
        return r.answer == AI

    def rate(rs: list[TuringResponse]) -> float:
        return sum(1 for r in rs if correct(r)) / len(rs)

    groups: dict[str, list[TuringResponse]] = {}
    sources: dict[str, list[TuringResponse]] = {}
    for r in responses:
        groups.setdefault(r.listener_group, []).append(r)
        sources.setdefault(r.true_source, []).append(r)
    return TuringAccuracy(
        overall=rate(responses),
        by_group={g: rate(rs) for g, rs in sorted(groups.items())},
        by_source={s: rate(rs) for s, rs in sorted(sources.items())},
        n=len(responses),
    )


# --- study-export analysis -------------------------------------------------


@dataclass(frozen=True)
class ResponseRow:
    participant_id: str
    group: str
    piece_id: str
    dataset: str
    source: str
    question_id: str
    value: Optional[int]  # Likert 1..5, None for the Turing item
    turing_answer: Optional[str]


def parse_response_export(text: str) -> list[ResponseRow]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise EmptyResponses("empty export")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        pid, group, piece, dataset, source, qid, value, turing, _ts = parts
        rows.append(
            ResponseRow(
                participant_id=pid,
                group=group,
                piece_id=piece,
                dataset=dataset,
                source=source,
                question_id=qid,
                value=int(value) if value else None,
                turing_answer=turing or None,
            )
        )
    return rows


@dataclass(frozen=True)
class StudyAnalysis:
    means: dict[tuple[str, str], tuple[float, float]]  # (question, source) -> mean/std
    tukey: dict[tuple[str, str], list[TukeyResult]]  # (listener group, question)
    turing: TuringAccuracy


def analyze_responses(
    rows: Sequence[ResponseRow],
    alpha: float = 0.05,
    per_participant: bool = False,
) -> StudyAnalysis:
    """Full subjective analysis of a response export.

    `per_participant` averages each participant's ratings per (question,
    source) before testing; the default pools raw responses.
    """
    if not rows:
        raise EmptyResponses("no responses to analyze")
    likert = [r for r in rows if r.value is not None]
    means = {}
    by_qs: dict[tuple[str, str], list[float]] = {}
    for r in likert:
        by_qs.setdefault((r.question_id, r.source), []).append(float(r.value))
    for key, vals in by_qs.items():
        means[key] = describe(vals)

    tukey_tables: dict[tuple[str, str], list[TukeyResult]] = {}
    by_gq: dict[tuple[str, str], dict[str, list[float]]] = {}
    if per_participant:
        per: dict[tuple[str, str, str, str], list[float]] = {}
        for r in likert:
            per.setdefault((r.group, r.question_id, r.source, r.participant_id), []).append(
                float(r.value)
            )
        for (group, qid, source, _pid), vals in per.items():
            by_gq.setdefault((group, qid), {}).setdefault(source, []).append(
                float(np.mean(vals))
            )
    else:
        for r in likert:
            by_gq.setdefault((r.group, r.question_id), {}).setdefault(r.source, []).append(
                float(r.value)
            )
    for key, src_groups in by_gq.items():
        labels = sorted(src_groups)
        groups = [src_groups[s] for s in labels]
        if len(groups) < 2 or any(len(g) < 2 for g in groups):
            continue
        try:
            tukey_tables[key] = tukey_hsd(groups, alpha=alpha, labels=labels)
        except DegenerateGroups:
            continue

    turing_rows = [
        TuringResponse(r.group, r.source, r.turing_answer)
        for r in rows
        if r.turing_answer is not None
    ]
    return StudyAnalysis(
        means=means,
        tukey=tukey_tables,
        turing=turing_accuracy(turing_rows),
    )


def tukey_csv(analysis: StudyAnalysis) -> str:
    """Pairwise-comparison table: one row per (group, question, pair)."""
    lines = ["listener_group,question_id,source_a,source_b,mean_diff,q,p,significant"]
    for (group, qid), results in sorted(analysis.tukey.items()):
        for r in results:
            lines.append(
                f"{group},{qid},{r.pair[0]},{r.pair[1]},"
                f"{r.mean_diff:.6f},{r.q:.6f},{r.p:.6g},{int(r.significant)}"
            )
    return "\n".join(lines) + "\n"


def means_csv(analysis: StudyAnalysis) -> str:
    lines = ["question_id,source,mean,std"]
    for (qid, source), (mean, std) in sorted(analysis.means.items()):
        lines.append(f"{qid},{source},{mean:.6f},{std:.6f}")
    return "\n".join(lines) + "\n"


def turing_csv(acc: TuringAccuracy) -> str:
    lines = ["scope,key,accuracy"]
    lines.append(f"overall,,{acc.overall:.6f}")
    for g, v in acc.by_group.items():
        lines.append(f"group,{g},{v:.6f}")
    for s, v in acc.by_source.items():
        lines.append(f"source,{s},{v:.6f}")
    return "\n".join(lines) + "\n"
