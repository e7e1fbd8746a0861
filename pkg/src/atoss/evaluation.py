"""Plug-and-play inference and corpus scoring."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .backends import AbsaBackend, BackendUnavailable, memoized
from .complexity import ComplexityLabel, classify, classify_text
from .data import AnnotatedExample, Quadruplet, Task
from .metrics import PRF, Counts, match_counts, prf, sentence_f1
from .splitter.core import split as split_text
from .teacher.filtering import SplitCandidate, segment_text

__all__ = [
    "BackendUnavailable", "EvalReport", "IdMismatch", "OracleCurve", "aspect_level_f1", "corpus_oracle_curve",
    "evaluate", "format_report_table", "oracle_vote", "plug_and_play", "plug_and_play_predict", "predict_corpus", "project_to_triplet",
    "report_record", "reports_to_csv",
]


class IdMismatch(ValueError):
    pass


@dataclass
class EvalReport:
    precision: float
    recall: float
    f1: float
    per_complexity: dict = field(default_factory=dict)
    aspect_f1: float = 0.0
    n_examples: int = 0

    @property
    def accuracy(self) -> dict:
        # per-complexity "accuracy" is recall
        return {label: scores.recall for label, scores in self.per_complexity.items()}


@dataclass
class OracleCurve:
    points: list = field(default_factory=list)
    pool: str = ""

    def f1_at(self, m: int) -> float:
        return dict(self.points)[m]

    def is_monotone(self) -> bool:
        f = [p[1] for p in self.points]
        return all(b >= a for a, b in zip(f, f[1:]))


# -- inference ---------------------------------------------------------------------

def _dedup(quads):
    out = []
    for q in quads:
        if q not in out:
            out.append(q)
    return out


def plug_and_play(splitter, backend: AbsaBackend, example, task=None, mode: str = "concat",
                  width: int = 1) -> tuple[str, list[Quadruplet]]:
    """Gate, split, then let the backend read the split text; returns (split text, tuples).

    ``example`` is an annotated example (gated on its text and tuple count) or
    raw text (gated on text alone).  ``mode="segments"`` instead calls the
    backend once per segment and unions the results.
    """
    if isinstance(example, AnnotatedExample):
        gate = classify(example)
        task = task or example.task
    else:
        gate = classify_text(example)
    task = Task.parse(task or "ASQP")
    text = split_text(splitter, example, gate=gate, width=width)
    if mode not in ("concat", "segments"):
        raise ValueError(f"unknown plug-and-play mode {mode!r}")
    try:
        if mode == "concat":
            return text, _dedup(backend.predict(text, task))
        return text, _dedup(q for seg in segment_text(text) for q in backend.predict(seg, task))
    except BackendUnavailable:
        raise
    except Exception as exc:
        raise BackendUnavailable(str(exc)) from exc


def plug_and_play_predict(splitter, backend: AbsaBackend, example, task=None, mode: str = "concat",
                          width: int = 1) -> list[Quadruplet]:
    return plug_and_play(splitter, backend, example, task, mode, width)[1]


def predict_corpus(splitter, backend, examples: Sequence[AnnotatedExample], mode="concat", width=1,
                   parallelism: int = 1) -> dict:
    backend = memoized(backend, parallelism)
    return {ex.id: plug_and_play_predict(splitter, backend, ex, mode=mode, width=width) for ex in examples}


# -- scoring -----------------------------------------------------------------------

def _check_ids(predictions: Mapping, golds: Mapping):
    if set(predictions) != set(golds):
        missing = sorted(set(golds) - set(predictions))[:5]
        extra = sorted(set(predictions) - set(golds))[:5]
        raise IdMismatch(f"prediction/gold ids differ (missing {missing}, extra {extra})")


def _micro(predictions, golds, ids) -> PRF:
    total = Counts(0, 0, 0)
    for i in ids:
        c = match_counts(predictions[i], golds[i])
        total = Counts(*(a + b for a, b in zip(total, c)))
    return prf(*total)


def _gold_quads(value):
    return value.quads if isinstance(value, AnnotatedExample) else value


def evaluate(predictions: Mapping[str, Sequence], golds: Mapping) -> EvalReport:
    """Micro P/R/F1 over tuple instances.

    ``golds`` maps id to an :class:`AnnotatedExample` (enables the Simple /
    Compound breakdown) or directly to a tuple list.
    """
    _check_ids(predictions, golds)
    gold_quads = {i: _gold_quads(v) for i, v in golds.items()}
    ids = sorted(golds)
    overall = _micro(predictions, gold_quads, ids)
    per = {}
    labelled = {i: classify(v) for i, v in golds.items() if isinstance(v, AnnotatedExample)}
    for label in ComplexityLabel:
        subset = [i for i in ids if labelled.get(i) is label]
        if subset:
            per[label] = _micro(predictions, gold_quads, subset)
    return EvalReport(overall.precision, overall.recall, overall.f1, per,
                      aspect_level_f1(predictions, gold_quads), len(ids))


def _aspect(q):
    return q.aspect if isinstance(q, Quadruplet) else q[0]


def aspect_level_f1(predictions: Mapping, golds: Mapping) -> float:
    _check_ids(predictions, golds)
    proj_p = {i: {_aspect(q) for q in predictions[i]} for i in golds}
    proj_g = {i: {_aspect(q) for q in _gold_quads(golds[i])} for i in golds}
    return _micro(proj_p, proj_g, sorted(golds)).f1


def project_to_triplet(quads: Sequence, task) -> list[tuple]:
    task = Task.parse(task)
    if task is Task.TASD:
        key = lambda q: (q.aspect, q.category, q.polarity)  # noqa: E731
    elif task is Task.ASTE:
        key = lambda q: (q.aspect, q.opinion, q.polarity)  # noqa: E731
    else:
        raise ValueError(f"triplet projection is defined for TASD and ASTE, not {task.value}")
    return _dedup(key(q) for q in quads)


# -- oracle voting -----------------------------------------------------------------

def oracle_vote(example: AnnotatedExample, candidates: Sequence, backend: AbsaBackend, max_m: int = 10,
                pool: str = "") -> OracleCurve:
    """Best sentence F1 over the original plus the first m candidates, for m = 0..max_m."""
    texts = [c.text if isinstance(c, SplitCandidate) else c for c in candidates]

    def f1(text):
        return sentence_f1(backend.predict(text, example.task), example.quads).f1

    best = f1(example.text)
    points = [(0, best)]
    for m in range(1, max_m + 1):
        if m <= len(texts):
            best = max(best, f1(texts[m - 1]))
        points.append((m, best))
    return OracleCurve(points, pool)


def corpus_oracle_curve(examples: Sequence[AnnotatedExample], candidates: Mapping[str, Sequence], backend,
                        max_m: int = 10, pool: str = "") -> OracleCurve:
    """Mean over examples of the per-example oracle curves."""
    backend = memoized(backend)
    curves = [oracle_vote(ex, candidates.get(ex.id, ()), backend, max_m) for ex in examples]
    if not curves:
        return OracleCurve([(m, 0.0) for m in range(max_m + 1)], pool)
    points = [(m, sum(c.points[m][1] for c in curves) / len(curves)) for m in range(max_m + 1)]
    return OracleCurve(points, pool)


# -- reports -----------------------------------------------------------------------

def _prf_dict(s: PRF | None) -> dict:
    if s is None:
        return {}
    return {"precision": s.precision, "recall": s.recall, "f1": s.f1}


def report_record(report: EvalReport, task="", dataset="", backend="", splitter="") -> dict:
    return {
        "task": str(task), "dataset": dataset, "backend": backend, "splitter": splitter,
        "precision": report.precision, "recall": report.recall, "f1": report.f1,
        "aspect_f1": report.aspect_f1, "n_examples": report.n_examples,
        "simple": _prf_dict(report.per_complexity.get(ComplexityLabel.SIMPLE)),
        "compound": _prf_dict(report.per_complexity.get(ComplexityLabel.COMPOUND)),
    }


_COLUMNS = ("splitter", "backend", "precision", "recall", "f1", "aspect_f1", "simple_acc", "compound_acc")


def _row(rec: dict) -> dict:
    return {"splitter": rec["splitter"], "backend": rec["backend"], "precision": rec["precision"],
            "recall": rec["recall"], "f1": rec["f1"], "aspect_f1": rec["aspect_f1"],
            "simple_acc": rec["simple"].get("recall", ""), "compound_acc": rec["compound"].get("recall", "")}


def format_report_table(records: Sequence[dict]) -> str:
    """Percent-scaled text table, one row per (backend, splitter) run."""
    head = f"{'Backend':<14}{'Splitter':<16}{'Pre':>8}{'Rec':>8}{'F1':>8}{'AspF1':>8}{'Simple':>8}{'Compound':>10}"
    lines = [head, "-" * len(head)]
    for rec in records:
        r = _row(rec)
        pct = lambda v: f"{100 * v:.2f}" if v != "" else "-"  # noqa: E731
        lines.append(f"{r['backend']:<14}{r['splitter']:<16}{pct(r['precision']):>8}{pct(r['recall']):>8}"
                     f"{pct(r['f1']):>8}{pct(r['aspect_f1']):>8}{pct(r['simple_acc']):>8}"
                     f"{pct(r['compound_acc']):>10}")
    return "\n".join(lines)


def reports_to_csv(records: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for rec in records:
        writer.writerow(_row(rec))
    return buf.getvalue()


def curve_to_csv(curves: Mapping[str, OracleCurve]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["pool", "num_candidates", "f1"])
    for name, curve in curves.items():
        for m, f in curve.points:
            writer.writerow([name or curve.pool, m, f])
    return buf.getvalue()
