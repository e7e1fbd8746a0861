"""Simple / compound sentence categorization."""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .data import AnnotatedExample

CONJUNCTIONS = ("and", "or", "but")
_CONJ_RE = re.compile(r"(?<![\w'])(?:%s)(?![\w'])" % "|".join(CONJUNCTIONS))


class ComplexityLabel(str, Enum):
    SIMPLE = "Simple"
    COMPOUND = "Compound"


class EmptyDataset(ValueError):
    pass


def has_clause_joiner(text: str) -> bool:
    """True when the text contains a comma or a whole-token and/or/but."""
    return "," in text or _CONJ_RE.search(text.lower()) is not None


def classify_text(text: str, n_quads: int | None = None) -> ComplexityLabel:
    """Categorize raw text; ``n_quads`` is unknown for unannotated input."""
    if n_quads is not None and n_quads != 1:
        return ComplexityLabel.COMPOUND
    return ComplexityLabel.COMPOUND if has_clause_joiner(text) else ComplexityLabel.SIMPLE


def classify(example: AnnotatedExample) -> ComplexityLabel:
    return classify_text(example.text, len(example.quads))


@dataclass(frozen=True)
class RatioReport:
    simple_pct: float
    compound_pct: float
    n_examples: int
    split: str = ""
    dataset: str = ""

    def as_record(self) -> dict:
        return {"dataset": self.dataset, "split": self.split, "n_examples": self.n_examples,
                "simple_pct": self.simple_pct, "compound_pct": self.compound_pct}


def ratio_report(examples: Sequence[AnnotatedExample], split: str = "", dataset: str = "") -> RatioReport:
    if not examples:
        raise EmptyDataset("ratio_report needs at least one example")
    n_simple = sum(classify(e) is ComplexityLabel.SIMPLE for e in examples)
    simple = 100.0 * n_simple / len(examples)
    return RatioReport(simple, 100.0 - simple, len(examples), split, dataset)


def format_ratio_table(reports: Sequence[RatioReport]) -> str:
    lines = [f"{'dataset':<24} {'split':<8} {'n':>6}  S / C"]
    for r in reports:
        lines.append(f"{r.dataset:<24} {r.split:<8} {r.n_examples:>6}  "
                     f"{r.simple_pct:.2f} / {r.compound_pct:.2f}")
    return "\n".join(lines)
