"""Split candidates: generation through a teacher, criteria scoring, top-K filtering."""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Sequence

from ..data import NULL, AnnotatedExample
from .clients import TeacherClient
from .prompts import DEFAULT_DEMOS, FEW_SHOT, ZERO_SHOT, render_prompt

ORIGINS = (ZERO_SHOT, FEW_SHOT, "beam")

_SEGMENT_RE = re.compile(r"(?<=[.!?])\s+")

STOPWORDS = frozenset("""
a an the and or but if of to in on at for with from by as is are was were be been being am
i me my we our you your he him his she her it its they them their this that these those
there here so too very just not no nor do does did done have has had having will would can could
should shall may might must s t ve ll re d m also than then what which who whom when where why how
""".split())


class NoCandidates(ValueError):
    pass


def segment_text(text: str) -> list[str]:
    """Split at '.', '!' or '?' followed by whitespace or end of text."""
    parts = [p for p in _SEGMENT_RE.split(text.strip()) if p]
    return parts or [text.strip()]


@dataclass(frozen=True)
class SplitCandidate:
    source_id: str
    text: str
    origin: str = ZERO_SHOT
    criteria_score: float = 0.0
    model_score: float | None = None

    def __post_init__(self):
        if self.origin not in ORIGINS:
            raise ValueError(f"unknown candidate origin {self.origin!r}")
        if not 0.0 <= self.criteria_score <= 1.0:
            raise ValueError(f"criteria_score out of [0, 1]: {self.criteria_score}")

    @property
    def segments(self) -> list[str]:
        return segment_text(self.text)


@dataclass
class FilterConfig:
    k: int = 2
    n_candidates: int = 10

    def __post_init__(self):
        if not 1 <= self.k <= self.n_candidates:
            raise ValueError(f"need 1 <= k <= n_candidates, got k={self.k}, n={self.n_candidates}")


def _words(text: str) -> list[str]:
    return re.findall(r"\w+", text.lower())


def _term_re(term: str) -> re.Pattern:
    words = term.lower().split()
    return re.compile(r"(?<!\w)" + r"\s*".join(re.escape(w) for w in words) + r"(?!\w)")


def _occurs(term: str, text: str) -> bool:
    return _term_re(term).search(" ".join(text.lower().split())) is not None


def criteria_subscores(candidate: SplitCandidate, example: AnnotatedExample) -> tuple[float, float, float, float]:
    """(aspect isolation, opinion retention, spelling retention, segment-count sanity)."""
    segments = candidate.segments
    aspects = sorted({q.aspect for q in example.quads if q.aspect not in (None, NULL)})
    opinions = sorted({q.opinion for q in example.quads if q.opinion not in (None, NULL)})

    if aspects:
        a = sum(sum(_occurs(t, s) for s in segments) == 1 for t in aspects) / len(aspects)
    else:
        a = 1.0
    if opinions:
        b = sum(any(_occurs(t, s) for s in segments) for t in opinions) / len(opinions)
    else:
        b = 1.0
    content = {w for w in _words(example.text) if w not in STOPWORDS}
    kept = set(_words(candidate.text))
    c = len(content & kept) / len(content) if content else 1.0
    n_seg, n_quad = len(segments), len(example.quads)
    d = 1.0 if n_seg <= n_quad else n_quad / n_seg
    return a, b, c, d


def score_candidate(candidate: SplitCandidate, example: AnnotatedExample) -> float:
    return sum(criteria_subscores(candidate, example)) / 4.0


def clean_completion(text: str) -> str:
    text = text.strip()
    if text.lower().startswith("split sentence:"):
        text = text[len("split sentence:"):].strip()
    return text.splitlines()[0].strip() if text else text


def generate_candidates(client: TeacherClient, example: AnnotatedExample, mode: str = ZERO_SHOT,
                        config: FilterConfig | None = None, demos=None, temperature: float = 1.0,
                        scorer: Callable[[SplitCandidate, AnnotatedExample], float] = score_candidate,
                        ) -> list[SplitCandidate]:
    """Prompt the teacher for ``config.n_candidates`` splits of one example.

    Candidates come back in teacher order, duplicates included, each carrying
    its criteria score.
    """
    config = config or FilterConfig()
    if mode == FEW_SHOT and demos is None:
        demos = DEFAULT_DEMOS
    prompt = render_prompt(mode, example, demos)
    completions = client.generate(prompt, config.n_candidates, temperature)
    out = []
    for c in completions:
        cand = SplitCandidate(example.id, clean_completion(c), mode)
        out.append(replace(cand, criteria_score=scorer(cand, example)))
    return out


def generate_for_examples(client, examples: Sequence[AnnotatedExample], mode=ZERO_SHOT, config=None,
                          demos=None, temperature=1.0, parallelism: int = 1) -> dict[str, list[SplitCandidate]]:
    def one(e):
        return generate_candidates(client, e, mode, config, demos, temperature)

    if parallelism <= 1:
        results = [one(e) for e in examples]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(one, examples))
    return {e.id: r for e, r in zip(examples, results)}


def filter_top_k(candidates: Sequence[SplitCandidate], example: AnnotatedExample | None = None,
                 config: FilterConfig | None = None) -> list[SplitCandidate]:
    """Deduplicate by text and keep the k best by criteria score.

    Ties go to fewer segments, then to the lexicographically smaller text.
    """
    config = config or FilterConfig()
    if not candidates:
        raise NoCandidates("nothing to filter" + (f" for {example.id!r}" if example else ""))
    best: dict[str, SplitCandidate] = {}
    for c in candidates:
        if c.text not in best or c.criteria_score > best[c.text].criteria_score:
            best[c.text] = c
    ranked = sorted(best.values(), key=lambda c: (-c.criteria_score, len(c.segments), c.text))
    return ranked[:config.k]


class LLMJudge:
    """Criteria scoring delegated to an LLM; a drop-in for :func:`score_candidate`.

    The judge answers with a 0-10 rating which is mapped to [0, 1].
    """

    TEMPLATE = (
        "Rate from 0 to 10 how well the split sentence follows these rules: each short sentence "
        "contains one aspect term; the original spellings are kept exactly; no content is added or "
        "dropped.\nAspect terms: {aspects}\nOriginal sentence: {source}\nSplit sentence: {split}\n"
        "Answer with a single number."
    )

    def __init__(self, client: TeacherClient):
        self.client = client

    def __call__(self, candidate: SplitCandidate, example: AnnotatedExample) -> float:
        aspects = sorted({q.aspect for q in example.quads if q.aspect})
        prompt = self.TEMPLATE.format(aspects=aspects, source=example.text, split=candidate.text)
        reply = self.client.generate(prompt, 1, 0.0)[0]
        m = re.search(r"\d+(?:\.\d+)?", reply)
        return min(max(float(m.group()) / 10.0, 0.0), 1.0) if m else 0.0
