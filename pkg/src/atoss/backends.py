"""ABSA model backends: anything that maps text to predicted tuples."""

from __future__ import annotations

import ast
import json
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Protocol, runtime_checkable

from .data import NULL, Polarity, Quadruplet, Task, normalize_ws, project
from .teacher.clients import TeacherUnavailable
from .teacher.filtering import segment_text


class BackendUnavailable(RuntimeError):
    pass


@runtime_checkable
class AbsaBackend(Protocol):
    def predict(self, text: str, task="ASQP") -> list[Quadruplet]:
        ...


class LexiconBackend:
    """Deterministic dictionary tagger standing in for a trained ABSA model.

    Each sentence segment is tagged independently.  A segment with a single
    aspect term pairs it with every opinion term; a segment with no aspect
    term yields implicit-aspect tuples; a segment holding several aspect terms
    pairs all of them with its first opinion term.  That last rule is the
    fused-clause failure that splitting is meant to remove.
    """

    name = "lexicon"

    def __init__(self, aspects: dict[str, str], opinions: dict[str, str],
                 default_category: str = "restaurant general"):
        self.aspects = {normalize_ws(k): v for k, v in aspects.items()}
        self.opinions = {normalize_ws(k): Polarity.parse(v) for k, v in opinions.items()}
        self.default_category = default_category
        self._max_len = max([len(t.split()) for t in list(self.aspects) + list(self.opinions)] or [1])

    @classmethod
    def from_file(cls, path) -> "LexiconBackend":
        spec = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(spec["aspects"], spec["opinions"], spec.get("default_category", "restaurant general"))

    def to_dict(self) -> dict:
        return {"aspects": self.aspects, "opinions": {k: v.value for k, v in self.opinions.items()},
                "default_category": self.default_category}

    def _tag(self, segment: str):
        words = re.findall(r"[\w']+", segment.lower())
        aspects, opinions = [], []
        i = 0
        while i < len(words):
            for n in range(min(self._max_len, len(words) - i), 0, -1):
                phrase = " ".join(words[i:i + n])
                if phrase in self.aspects:
                    aspects.append(phrase)
                elif phrase in self.opinions:
                    opinions.append(phrase)
                else:
                    continue
                i += n
                break
            else:
                i += 1
        return aspects, opinions

    def predict(self, text, task="ASQP"):
        out = []
        for segment in segment_text(text):
            aspects, opinions = self._tag(segment)
            if not opinions:
                continue
            if not aspects:
                pairs = [(NULL, self.default_category, op) for op in opinions]
            elif len(aspects) == 1:
                pairs = [(aspects[0], self.aspects[aspects[0]], op) for op in opinions]
            else:
                pairs = [(a, self.aspects[a], opinions[0]) for a in aspects]
            for aspect, category, op in pairs:
                q = project(Quadruplet(aspect, category, self.opinions[op], op), task)
                if q not in out:
                    out.append(q)
        return out


class CallableBackend:
    """Adapter for a fine-tuned model exposed as ``fn(text, task) -> iterable of 4-tuples``."""

    def __init__(self, fn: Callable[[str, str], Iterable], name: str = "callable"):
        self.fn = fn
        self.name = name

    def predict(self, text, task="ASQP"):
        task = Task.parse(task)
        out = []
        for at, ac, sp, ot in self.fn(text, task.value):
            q = project(Quadruplet(at, ac, Polarity.parse(sp), ot), task)
            if q not in out:
                out.append(q)
        return out


class RemoteLLMBackend:
    """Zero-shot prompted LLM extracting tuples, through any teacher-style client."""

    name = "remote-llm"
    TEMPLATE = (
        "Extract all [aspect, category, sentiment, opinion] quadruplets from the review sentence. "
        "Use 'null' for implicit aspects or opinions; sentiment is one of positive, neutral, negative. "
        "Answer only with a Python list of lists.\nSentence: {text}\nQuadruplets:"
    )

    def __init__(self, client):
        self.client = client

    def predict(self, text, task="ASQP"):
        task = Task.parse(task)
        try:
            reply = self.client.generate(self.TEMPLATE.format(text=text), 1, 0.0)[0]
        except TeacherUnavailable as exc:
            raise BackendUnavailable(str(exc)) from exc
        return [project(q, task) for q in parse_quad_reply(reply, text)]


def parse_quad_reply(reply: str, text: str) -> list[Quadruplet]:
    """Lenient parse of an LLM's list-of-lists answer; invalid items are dropped."""
    m = re.search(r"\[.*\]", reply, flags=re.DOTALL)
    if not m:
        return []
    try:
        items = ast.literal_eval(m.group())
    except (ValueError, SyntaxError):
        return []
    norm_text = normalize_ws(text)
    out = []
    for item in items if isinstance(items, (list, tuple)) else []:
        if not isinstance(item, (list, tuple)) or len(item) != 4:
            continue
        at, ac, sp, ot = (str(x).strip() for x in item)
        at = NULL if at.lower() == NULL else at
        ot = NULL if ot.lower() == NULL else ot
        if any(t != NULL and normalize_ws(t) not in norm_text for t in (at, ot)):
            continue
        try:
            q = Quadruplet(at, ac, Polarity.parse(sp), ot)
        except ValueError:
            continue
        if q not in out:
            out.append(q)
    return out


class MemoBackend:
    """Per-text memoization plus bounded-parallel batch prediction."""

    def __init__(self, backend: AbsaBackend, parallelism: int = 1):
        self.backend = backend
        self.parallelism = parallelism
        self.name = getattr(backend, "name", type(backend).__name__)
        self._cache: dict[tuple[str, str], tuple] = {}
        self._lock = threading.Lock()
        self.calls = 0

    def predict(self, text, task="ASQP"):
        key = (text, Task.parse(task).value)
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return list(hit)
        try:
            result = tuple(self.backend.predict(text, task))
        except BackendUnavailable:
            raise
        except Exception as exc:
            raise BackendUnavailable(f"backend {self.name} failed: {exc}") from exc
        with self._lock:
            self.calls += 1
            self._cache[key] = result
        return list(result)

    def predict_many(self, texts, task="ASQP") -> list[list[Quadruplet]]:
        if self.parallelism <= 1:
            return [self.predict(t, task) for t in texts]
        with ThreadPoolExecutor(max_workers=self.parallelism) as pool:
            return list(pool.map(lambda t: self.predict(t, task), texts))


def memoized(backend, parallelism: int = 1) -> MemoBackend:
    return backend if isinstance(backend, MemoBackend) else MemoBackend(backend, parallelism)
