"""Synthetic restaurant-review corpus with a matching lexicon and a fake teacher.

Compound sentences join clauses about different aspects with "and"/"but".
:class:`~atoss.backends.LexiconBackend` pairs every aspect of a fused clause
with the first opinion it sees, so it mislabels those sentences unless they
are split at clause boundaries.  Single-clause sentences that stack two
opinions ("the fish was fresh and delicious") must *not* be split: the
trailing "and delicious ." segment would lose its aspect.
"""

from __future__ import annotations

import ast
import hashlib
import random
from dataclasses import dataclass

from .backends import LexiconBackend
from .data import NULL, AnnotatedExample, Polarity, Quadruplet
from .teacher.prompts import parse_target_block

ASPECTS = {
    "pizza": "food quality", "pasta": "food quality", "fish": "food quality",
    "steak": "food quality", "sushi": "food quality", "dessert": "food quality",
    "service": "service general", "waiter": "service general", "staff": "service general",
    "ambience": "ambience general", "decor": "ambience general", "music": "ambience general",
    "prices": "restaurant prices", "wine": "drinks quality", "coffee": "drinks quality",
    "cocktails": "drinks quality",
}

OPINIONS = {
    "great": "positive", "delicious": "positive", "fresh": "positive", "friendly": "positive",
    "amazing": "positive", "cozy": "positive", "excellent": "positive", "tasty": "positive",
    "attentive": "positive", "charming": "positive", "reasonable": "positive",
    "bland": "negative", "slow": "negative", "rude": "negative", "cold": "negative",
    "noisy": "negative", "awful": "negative", "overpriced": "negative", "greasy": "negative",
    "stale": "negative",
    "okay": "neutral", "average": "neutral", "ordinary": "neutral",
}

NULL_CATEGORY = "restaurant general"
CLAUSE_STARTERS = ("the", "it")


def lexicon_backend() -> LexiconBackend:
    return LexiconBackend(ASPECTS, OPINIONS, NULL_CATEGORY)


@dataclass(frozen=True)
class _Clause:
    text: str
    quads: tuple


def _clause(rng: random.Random, aspect: str | None, opinions: list[str]) -> _Clause:
    verb = rng.choice(("was", "is")) if aspect not in ("prices", "cocktails") else rng.choice(("were", "are"))
    adj = " and ".join(opinions)
    if aspect is None:
        text = f"it was {adj}"
        quads = tuple(Quadruplet(NULL, NULL_CATEGORY, Polarity.parse(OPINIONS[o]), o) for o in opinions)
    else:
        text = f"the {aspect} {verb} {adj}"
        quads = tuple(Quadruplet(aspect, ASPECTS[aspect], Polarity.parse(OPINIONS[o]), o) for o in opinions)
    return _Clause(text, quads)


def make_corpus(n: int = 300, seed: int = 0, prefix: str = "syn"):
    """Return ``(examples, gold_splits)`` with ``gold_splits[id]`` the clause-level split."""
    rng = random.Random(seed)
    opinion_words = sorted(OPINIONS)
    aspect_words = sorted(ASPECTS)
    examples, gold = [], {}
    for i in range(n):
        kind = rng.random()
        if kind < 0.3:
            n_clauses, stacked = 1, False
        elif kind < 0.45:
            n_clauses, stacked = 1, True
        else:
            n_clauses, stacked = rng.choice((2, 2, 3)), rng.random() < 0.25
        aspects = rng.sample(aspect_words, n_clauses)
        if n_clauses > 1 and rng.random() < 0.15:
            aspects[-1] = None
        used = rng.sample(opinion_words, n_clauses + 1)
        clauses = []
        for j, aspect in enumerate(aspects):
            ops = [used[j]]
            if stacked and j == 0:
                ops.append(used[-1])
            clauses.append(_clause(rng, aspect, ops))
        text = clauses[0].text
        split = clauses[0].text
        for prev, clause in zip(clauses, clauses[1:]):
            pols = {q.polarity for q in prev.quads} | {q.polarity for q in clause.quads}
            conj = "but" if len(pols) > 1 else "and"
            text += f" {conj} {clause.text}"
            split += f" . {conj} {clause.text}"
        ex = AnnotatedExample(f"{prefix}-{i}", text + " .", tuple(q for c in clauses for q in c.quads))
        examples.append(ex)
        gold[ex.id] = split + " ."
    return examples, gold


# -- fake teacher ----------------------------------------------------------------

def _insert_breaks(tokens: list[str], positions, drop_conj: bool = False) -> str:
    out = []
    for i, tok in enumerate(tokens):
        if i in positions:
            out.append(".")
            if drop_conj:
                continue
        out.append(tok)
    return " ".join(out)


def split_variants(sentence: str, rng: random.Random) -> dict[str, str]:
    """Rule-based split styles a teacher LLM might produce for one sentence."""
    tokens = sentence.split()
    conj = [i for i, t in enumerate(tokens) if t in ("and", "but")]
    clause = [i for i in conj if i + 1 < len(tokens) and tokens[i + 1] in CLAUSE_STARTERS]
    variants = {
        "clause": _insert_breaks(tokens, set(clause)),
        "clause_noconj": _insert_breaks(tokens, set(clause), drop_conj=True),
        "over": _insert_breaks(tokens, set(conj)),
        "none": sentence,
        "partial": _insert_breaks(tokens, set(clause[:1])),
    }
    content = [i for i, t in enumerate(tokens) if t in ASPECTS or t in OPINIONS]
    drop = rng.choice(content) if content else None
    variants["drop"] = " ".join(t for i, t in enumerate(_insert_breaks(tokens, set(clause)).split())
                                if not (drop is not None and t == tokens[drop]))
    return variants


ZERO_SHOT_WEIGHTS = {"clause": 3, "clause_noconj": 2, "over": 2, "none": 1, "partial": 1, "drop": 1}
FEW_SHOT_WEIGHTS = {"clause": 5, "clause_noconj": 2, "over": 1, "none": 1, "partial": 1, "drop": 0}


class SyntheticTeacher:
    """Stand-in teacher LLM for synthetic sentences.

    Reads the target sentence back out of the rendered prompt and samples
    split styles; few-shot prompts (which carry worked examples) lean towards
    clause-level splits.  Output depends only on the prompt text.
    """

    def __init__(self):
        self.calls = 0

    def generate(self, prompt, n, temperature=1.0):
        self.calls += 1
        sentence, quads = parse_target_block(prompt)
        ast.literal_eval(quads)
        weights = FEW_SHOT_WEIGHTS if "[Example 1]" in prompt else ZERO_SHOT_WEIGHTS
        seed = int(hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16], 16)
        rng = random.Random(seed)
        variants = split_variants(sentence, rng)
        names = [k for k, w in weights.items() if w > 0]
        return [variants[k] for k in rng.choices(names, [weights[k] for k in names], k=n)]
