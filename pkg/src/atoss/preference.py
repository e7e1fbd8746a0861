"""Preference pairs from ABSA-model feedback, and DPO alignment of the splitter."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .backends import AbsaBackend, memoized
from .complexity import ComplexityLabel, classify
from .data import AnnotatedExample
from .metrics import sentence_f1
from .teacher.filtering import SplitCandidate, segment_text

log = logging.getLogger(__name__)

__all__ = [
    "DpoConfig", "EmptyPairs", "PreferencePair", "build_pairs", "dpo_loss", "dpo_loss_and_grad",
    "select_dispreferred", "select_preferred", "sentence_f1", "similarity", "train_dpo",
]


class EmptyPairs(ValueError):
    pass


@dataclass(frozen=True)
class PreferencePair:
    source: str
    preferred: str
    dispreferred: str
    id: str = ""
    f1_original: float | None = None
    f1_candidate: float | None = None

    def __post_init__(self):
        if self.preferred == self.dispreferred:
            raise ValueError("preferred and dispreferred texts must differ")

    def as_record(self) -> dict:
        return asdict(self)


@dataclass
class DpoConfig:
    beta: float = 0.1
    batch: int = 8
    epochs: int = 1
    learning_rate: float = 1e-4
    loss_kind: str = "sigmoid"

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.loss_kind != "sigmoid":
            raise ValueError(f"unsupported DPO loss {self.loss_kind!r}")


# -- similarity ---------------------------------------------------------------

def _edit_distance(a: Sequence[str], b: Sequence[str]) -> int:
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def similarity(a: str, b: str) -> float:
    """1 - token edit distance / longer token count (whitespace tokens)."""
    ta, tb = a.split(), b.split()
    longest = max(len(ta), len(tb))
    if longest == 0:
        return 1.0
    return 1.0 - _edit_distance(ta, tb) / longest


# -- selection rules -------------------------------------------------------------

def _f1(backend: AbsaBackend, text: str, example: AnnotatedExample) -> float:
    return sentence_f1(backend.predict(text, example.task), example.quads).f1


def _distinct(texts):
    seen, out = set(), []
    for t in texts:
        if t not in seen:
            seen.add(t)
            out.append(t)
    return out


def _same_text(a: str, b: str) -> bool:
    return a.split() == b.split()


def select_preferred(example: AnnotatedExample, candidates: Sequence[SplitCandidate],
                     backend: AbsaBackend) -> list[str]:
    """Preferred splits among teacher few-shot candidates.

    Simple input: every distinct candidate with one segment per tuple.
    Compound input, comparing backend sentence F1 on the original (f0) with
    each candidate (fi): nothing when f0 beats every fi, the original itself
    when f0 ties the best, otherwise every distinct candidate with fi > f0.
    """
    texts = _distinct(c.text for c in candidates)
    if classify(example) is ComplexityLabel.SIMPLE:
        return [t for t in texts if len(segment_text(t)) == len(example.quads)]
    if not texts:
        return []
    f0 = _f1(backend, example.text, example)
    scores = [_f1(backend, t, example) for t in texts]
    best = max(scores)
    if f0 > best:
        return []
    if f0 == best:
        return [example.text]
    return [t for t, f in zip(texts, scores) if f > f0]


def _argmax_sim(texts, original, lowest=False):
    if not texts:
        return []
    sign = 1.0 if lowest else -1.0
    return [min(texts, key=lambda t: (sign * similarity(t, original), t))]


def select_dispreferred(example: AnnotatedExample, beams: Sequence[SplitCandidate],
                        backend: AbsaBackend) -> list[str]:
    """Dispreferred split among the splitter's own beam outputs.

    Beams identical to the original are never chosen.  Simple input: the beam
    most similar to the original.  Compound input: nothing when some beam
    beats f0; the least similar beam when the best beam ties f0; otherwise the
    most similar beam among those scoring below f0.
    """
    texts = [t for t in _distinct(b.text for b in beams) if not _same_text(t, example.text)]
    if not texts:
        return []
    if classify(example) is ComplexityLabel.SIMPLE:
        return _argmax_sim(texts, example.text)
    f0 = _f1(backend, example.text, example)
    scores = [_f1(backend, t, example) for t in texts]
    best = max(scores)
    if f0 < best:
        return []
    if f0 == best:
        return _argmax_sim(texts, example.text, lowest=True)
    return _argmax_sim([t for t, f in zip(texts, scores) if f < f0], example.text)


def build_pairs(examples: Sequence[AnnotatedExample], few_shot_candidates: Mapping[str, Sequence[SplitCandidate]],
                beam_candidates: Mapping[str, Sequence[SplitCandidate]], backend: AbsaBackend,
                ) -> list[PreferencePair]:
    """Cartesian preferred x dispreferred pairs per example, equal texts dropped."""
    backend = memoized(backend)
    pairs = []
    for ex in examples:
        preferred = select_preferred(ex, few_shot_candidates.get(ex.id, ()), backend)
        if not preferred:
            continue
        dispreferred = select_dispreferred(ex, beam_candidates.get(ex.id, ()), backend)
        if not dispreferred:
            continue
        f0 = _f1(backend, ex.text, ex)
        for p in preferred:
            fp = _f1(backend, p, ex)
            for d in dispreferred:
                if p != d:
                    pairs.append(PreferencePair(ex.text, p, d, ex.id, f0, fp))
    return pairs


# -- DPO -------------------------------------------------------------------------

def _log_sigmoid(z: float) -> float:
    return -math.log1p(math.exp(-z)) if z >= 0 else z - math.log1p(math.exp(z))


def _sigmoid(z: float) -> float:
    return 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))


def _margin(policy, reference, pair: PreferencePair, beta: float) -> float:
    chosen = policy.log_prob(pair.source, pair.preferred) - reference.log_prob(pair.source, pair.preferred)
    rejected = policy.log_prob(pair.source, pair.dispreferred) - reference.log_prob(pair.source, pair.dispreferred)
    return beta * (chosen - rejected)


def dpo_loss(policy, reference, pair: PreferencePair, config: DpoConfig | None = None) -> float:
    """-log sigmoid(beta * (policy/reference log-ratio of p+ minus that of p-))."""
    config = config or DpoConfig()
    return -_log_sigmoid(_margin(policy, reference, pair, config.beta))


def dpo_loss_and_grad(policy, reference, pair: PreferencePair, config: DpoConfig | None = None):
    """Loss and its gradient w.r.t. the policy parameters (reference held fixed)."""
    config = config or DpoConfig()
    lp_w, g_w = policy.log_prob_and_grad(pair.source, pair.preferred)
    lp_l, g_l = policy.log_prob_and_grad(pair.source, pair.dispreferred)
    z = config.beta * ((lp_w - reference.log_prob(pair.source, pair.preferred))
                       - (lp_l - reference.log_prob(pair.source, pair.dispreferred)))
    coef = -config.beta * (1.0 - _sigmoid(z))
    grads = {k: coef * (g_w[k] - g_l[k]) for k in g_w}
    return -_log_sigmoid(z), grads


@dataclass
class DpoLog:
    step_losses: list = field(default_factory=list)
    final_loss: float = math.nan


def train_dpo(policy_init, pairs: Sequence[PreferencePair], config: DpoConfig | None = None, seed: int = 0):
    """Align a copy of ``policy_init`` on preference pairs.

    The reference model is a frozen copy of ``policy_init``; it is never
    updated.  Returns the aligned policy and a log of mean loss per step and
    the mean loss over all pairs after training.
    """
    config = config or DpoConfig()
    if not pairs:
        raise EmptyPairs("no preference pairs to train on")
    reference = policy_init.copy()
    policy = policy_init.copy()
    rng = np.random.default_rng(seed)
    history = DpoLog()
    for _ in range(config.epochs):
        order = rng.permutation(len(pairs))
        for i in range(0, len(pairs), config.batch):
            batch = [pairs[j] for j in order[i:i + config.batch]]
            total = 0.0
            acc = {k: np.zeros_like(v) for k, v in policy.params.items()}
            for pair in batch:
                loss, g = dpo_loss_and_grad(policy, reference, pair, config)
                total += loss
                for k in acc:
                    acc[k] += g[k]
            history.step_losses.append(total / len(batch))
            policy.apply_gradient({k: v / len(batch) for k, v in acc.items()}, config.learning_rate)
    history.final_loss = float(np.mean([dpo_loss(policy, reference, p, config) for p in pairs]))
    log.info("dpo: %d steps, final mean loss %.4f", len(history.step_losses), history.final_loss)
    return policy, history


def pair_from_record(record: dict) -> PreferencePair:
    return PreferencePair(record["source"], record["preferred"], record["dispreferred"], record.get("id", ""),
                          record.get("f1_original"), record.get("f1_candidate"))
