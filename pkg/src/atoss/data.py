"""ABSA annotation data: types, the ``sentence####annotations`` line format,
JSON-lines records and dataset statistics.

Quad tasks (ASQP, ACOS) carry ``[aspect, category, polarity, opinion]``
element lists, triplet tasks carry three items: TASD drops the opinion,
ASTE drops the category.  ASTE releases that store token indices
(``[([3, 4], [6], 'POS')]``) are also understood.
"""

from __future__ import annotations

import ast
import json
import os
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

NULL = "null"
SEPARATOR = "####"


class Task(str, Enum):
    ASQP = "ASQP"
    ACOS = "ACOS"
    TASD = "TASD"
    ASTE = "ASTE"

    @classmethod
    def parse(cls, value) -> "Task":
        if isinstance(value, Task):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ValueError(f"unknown task {value!r}") from None

    @property
    def arity(self) -> int:
        return 4 if self in (Task.ASQP, Task.ACOS) else 3

    @property
    def default_order(self) -> tuple[str, ...]:
        if self is Task.TASD:
            return ("aspect", "category", "polarity")
        if self is Task.ASTE:
            return ("aspect", "opinion", "polarity")
        return ("aspect", "category", "polarity", "opinion")


class Polarity(str, Enum):
    POSITIVE = "positive"
    NEUTRAL = "neutral"
    NEGATIVE = "negative"

    @classmethod
    def parse(cls, value) -> "Polarity":
        if isinstance(value, Polarity):
            return value
        key = str(value).strip().lower()
        key = _POLARITY_ABBREV.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise UnknownPolarity(f"unknown polarity {value!r}") from None

    @property
    def abbrev(self) -> str:
        return self.value[:3].upper()

    def __str__(self) -> str:
        return self.value


_POLARITY_ABBREV = {"pos": "positive", "neu": "neutral", "neg": "negative"}


class AnnotationError(ValueError):
    """Base class for malformed annotation input."""


class MalformedLine(AnnotationError):
    pass


class ArityMismatch(AnnotationError):
    pass


class TermNotInSentence(AnnotationError):
    pass


class UnknownPolarity(AnnotationError):
    pass


class UnknownCategory(AnnotationError):
    pass


@dataclass(frozen=True)
class Quadruplet:
    """One sentiment tuple.

    ``category`` is None for ASTE triplets and ``opinion`` is None for TASD
    triplets.  Implicit terms use the :data:`NULL` sentinel.  Token spans are
    only kept to re-serialize index-style ASTE files and never take part in
    equality.
    """

    aspect: str | None
    category: str | None
    polarity: Polarity
    opinion: str | None
    aspect_span: tuple[int, ...] | None = field(default=None, compare=False, repr=False)
    opinion_span: tuple[int, ...] | None = field(default=None, compare=False, repr=False)

    def as_tuple(self) -> tuple:
        return (self.aspect, self.category, self.polarity.value, self.opinion)

    def elements(self, order: Sequence[str]) -> list:
        return [self.polarity.value if name == "polarity" else getattr(self, name) for name in order]


@dataclass(frozen=True)
class AnnotatedExample:
    id: str
    text: str
    quads: tuple[Quadruplet, ...]
    task: Task = Task.ASQP

    def __post_init__(self):
        object.__setattr__(self, "quads", tuple(self.quads))
        object.__setattr__(self, "task", Task.parse(self.task))


@dataclass
class DatasetStats:
    sentence_count: int = 0
    quad_counts_by_polarity: dict = field(
        default_factory=lambda: {p: 0 for p in Polarity}
    )
    category_set_size: int = 0

    @property
    def quad_count(self) -> int:
        return sum(self.quad_counts_by_polarity.values())

    def as_row(self) -> str:
        c = self.quad_counts_by_polarity
        return (f"{self.sentence_count} sentences; "
                f"{c[Polarity.POSITIVE]} / {c[Polarity.NEUTRAL]} / {c[Polarity.NEGATIVE]} "
                f"(POS/NEU/NEG); #C={self.category_set_size}")


@dataclass(frozen=True)
class FormatStyle:
    """Surface details of an annotation list that parsing normalizes away."""

    null_token: str = NULL
    index_spans: bool = False
    abbreviated_polarity: bool = False

    @classmethod
    def detect(cls, line: str) -> "FormatStyle":
        _, _, ann = line.rstrip("\n").rpartition(SEPARATOR)
        m = re.search(r"""['"](null)['"]""", ann, flags=re.IGNORECASE)
        index_spans = bool(re.match(r"\s*\[\s*\(\s*\[", ann))
        abbreviated = bool(re.search(r"""['"](POS|NEU|NEG)['"]""", ann, flags=re.IGNORECASE))
        return cls(m.group(1) if m else NULL, index_spans, abbreviated)


def normalize_ws(text: str) -> str:
    return " ".join(text.lower().split())


def is_null(term) -> bool:
    return isinstance(term, str) and term.strip().lower() == NULL


def check_term(term: str | None, text: str) -> None:
    if term is None or term == NULL:
        return
    if normalize_ws(term) not in normalize_ws(text):
        raise TermNotInSentence(f"term {term!r} is not a substring of {text!r}")


def validate_example(example: AnnotatedExample, categories: Iterable[str] | None = None) -> None:
    if not example.quads:
        raise MalformedLine(f"example {example.id!r} has no annotations")
    cats = set(categories) if categories is not None else None
    for q in example.quads:
        check_term(q.aspect, example.text)
        check_term(q.opinion, example.text)
        if cats is not None and q.category is not None and q.category not in cats:
            raise UnknownCategory(f"category {q.category!r} not in declared set")
        if example.task is Task.TASD and q.opinion is not None:
            raise ArityMismatch("TASD tuples carry no opinion term")
        if example.task is Task.ASTE and q.category is not None:
            raise ArityMismatch("ASTE tuples carry no aspect category")


def _canonical_term(value) -> str:
    if not isinstance(value, str):
        raise MalformedLine(f"expected a string term, got {value!r}")
    return NULL if is_null(value) else value


def _span_text(indices, tokens: list[str]) -> tuple[str, tuple[int, ...]]:
    idx = tuple(int(i) for i in indices)
    if not idx:
        return NULL, idx
    try:
        return " ".join(tokens[i] for i in idx), idx
    except IndexError:
        raise TermNotInSentence(f"token index out of range in {list(idx)}") from None


def parse_line(line: str, task="ASQP", order: Sequence[str] | None = None,
               categories: Iterable[str] | None = None, id: str = "") -> AnnotatedExample:
    """Parse one ``<sentence>####<annotations>`` line.

    ``order`` overrides the element order of each annotation list, e.g.
    ``("aspect", "category", "opinion", "polarity")`` for releases that put
    the polarity last.
    """
    task = Task.parse(task)
    raw = line.rstrip("\r\n")
    if SEPARATOR not in raw:
        raise MalformedLine(f"missing {SEPARATOR!r} separator: {raw[:80]!r}")
    text, _, ann = raw.rpartition(SEPARATOR)
    try:
        items = ast.literal_eval(ann.strip())
    except (ValueError, SyntaxError) as exc:
        raise MalformedLine(f"cannot parse annotation list {ann[:80]!r}: {exc}") from None
    if not isinstance(items, (list, tuple)) or not items:
        raise MalformedLine(f"annotation must be a non-empty list: {ann[:80]!r}")

    order = tuple(order) if order is not None else task.default_order
    if len(order) != task.arity or set(order) != set(task.default_order):
        raise ArityMismatch(f"element order {order} does not fit task {task.value}")

    tokens = text.split(" ")
    quads = []
    for item in items:
        if not isinstance(item, (list, tuple)):
            raise MalformedLine(f"annotation element is not a list: {item!r}")
        if len(item) != task.arity:
            raise ArityMismatch(f"{task.value} expects {task.arity} elements, got {len(item)}: {item!r}")
        values = dict(zip(order, item))
        spans = {}
        for name in ("aspect", "opinion"):
            if name not in values:
                continue
            if isinstance(values[name], (list, tuple)):
                values[name], spans[name] = _span_text(values[name], tokens)
            else:
                values[name] = _canonical_term(values[name])
        category = values.get("category")
        if category is not None and not isinstance(category, str):
            raise MalformedLine(f"category must be a string: {category!r}")
        quads.append(Quadruplet(
            aspect=values["aspect"],
            category=category,
            polarity=Polarity.parse(values["polarity"]),
            opinion=values.get("opinion"),
            aspect_span=spans.get("aspect"),
            opinion_span=spans.get("opinion"),
        ))
    example = AnnotatedExample(id=id, text=text, quads=tuple(quads), task=task)
    validate_example(example, categories)
    return example


def serialize_example(example: AnnotatedExample, order: Sequence[str] | None = None,
                      style: FormatStyle | None = None) -> str:
    """Inverse of :func:`parse_line` (without the trailing newline)."""
    style = style or FormatStyle()
    order = tuple(order) if order is not None else example.task.default_order
    if style.index_spans:
        items = []
        for q in example.quads:
            if q.aspect_span is None or q.opinion_span is None:
                raise ValueError("index-style output needs token spans on every tuple")
            pol = q.polarity.abbrev if style.abbreviated_polarity else q.polarity.value
            items.append((list(q.aspect_span), list(q.opinion_span), pol))
        return f"{example.text}{SEPARATOR}{items!r}"
    items = []
    for q in example.quads:
        row = []
        for name, value in zip(order, q.elements(order)):
            if name == "polarity" and style.abbreviated_polarity:
                value = q.polarity.abbrev
            elif name in ("aspect", "opinion") and value == NULL:
                value = style.null_token
            row.append(value)
        items.append(row)
    return f"{example.text}{SEPARATOR}{items!r}"


def read_dataset(path, task="ASQP", order=None, categories=None) -> list[AnnotatedExample]:
    """Read a ``####`` dataset file.  Blank lines are skipped."""
    path = Path(path)
    examples = []
    with open(path, encoding="utf-8") as f:
        for i, line in enumerate(f):
            if not line.strip():
                continue
            try:
                examples.append(parse_line(line, task, order, categories, id=f"{path.stem}-{i}"))
            except AnnotationError as exc:
                raise type(exc)(f"{path}:{i + 1}: {exc}") from None
    return examples


def write_dataset(path, examples: Iterable[AnnotatedExample], order=None, style=None) -> None:
    lines = [serialize_example(e, order, style) + "\n" for e in examples]
    atomic_write_text(path, "".join(lines))


def roundtrip_file(path, task="ASQP", order=None) -> tuple[int, list[int]]:
    """Parse and re-serialize every line; return (line count, mismatching line numbers)."""
    bad = []
    n = 0
    with open(path, encoding="utf-8") as f:
        for i, line in enumerate(f):
            raw = line.rstrip("\r\n")
            if not raw.strip():
                continue
            n += 1
            example = parse_line(raw, task, order)
            if serialize_example(example, order, FormatStyle.detect(raw)) != raw:
                bad.append(i + 1)
    return n, bad


def dataset_stats(examples: Sequence[AnnotatedExample], categories: Iterable[str] | None = None) -> DatasetStats:
    counts = Counter(q.polarity for e in examples for q in e.quads)
    if categories is not None:
        n_cats = len(set(categories))
    else:
        n_cats = len({q.category for e in examples for q in e.quads if q.category is not None})
    return DatasetStats(
        sentence_count=len(examples),
        quad_counts_by_polarity={p: counts.get(p, 0) for p in Polarity},
        category_set_size=n_cats,
    )


def project(quad: Quadruplet, task) -> Quadruplet:
    """Drop the elements ``task`` does not annotate (opinion for TASD, category for ASTE)."""
    task = Task.parse(task)
    if task is Task.TASD:
        return Quadruplet(quad.aspect, quad.category, quad.polarity, None)
    if task is Task.ASTE:
        return Quadruplet(quad.aspect, None, quad.polarity, quad.opinion)
    return quad


# -- JSON-lines records -----------------------------------------------------

def quad_to_list(q: Quadruplet) -> list:
    return [q.aspect, q.category, q.polarity.value, q.opinion]


def quad_from_list(item) -> Quadruplet:
    aspect, category, polarity, opinion = item
    return Quadruplet(aspect, category, Polarity.parse(polarity), opinion)


def example_to_record(example: AnnotatedExample) -> dict:
    return {
        "id": example.id,
        "text": example.text,
        "quads": [quad_to_list(q) for q in example.quads],
        "task": example.task.value,
    }


def example_from_record(record: dict) -> AnnotatedExample:
    return AnnotatedExample(
        id=str(record["id"]),
        text=record["text"],
        quads=tuple(quad_from_list(q) for q in record["quads"]),
        task=record.get("task", "ASQP"),
    )


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to a sibling temp file, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    os.replace(tmp, path)


def write_records(path, records: Iterable[dict]) -> None:
    text = "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in records)
    atomic_write_text(path, text)


def read_records(path) -> list[dict]:
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def load_examples(path, task="ASQP") -> list[AnnotatedExample]:
    """Load either a ``####`` dataset file or a JSON-lines record file."""
    path = Path(path)
    if path.suffix in (".jsonl", ".json"):
        return [example_from_record(r) for r in read_records(path)]
    return read_dataset(path, task)
