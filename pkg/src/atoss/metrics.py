"""Exact-match tuple scoring shared by preference selection and evaluation."""

from __future__ import annotations

from typing import Iterable, NamedTuple


class PRF(NamedTuple):
    precision: float
    recall: float
    f1: float


class Counts(NamedTuple):
    matched: int
    predicted: int
    gold: int


def match_counts(predicted: Iterable, gold: Iterable) -> Counts:
    """Exact-match counts under set semantics; duplicates count once."""
    p, g = set(predicted), set(gold)
    return Counts(len(p & g), len(p), len(g))


def prf(matched: int, predicted: int, gold: int) -> PRF:
    precision = float(matched) / predicted if predicted else 0.0
    recall = float(matched) / gold if gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return PRF(float(precision), float(recall), float(f1))


def sentence_f1(predicted: Iterable, gold: Iterable) -> PRF:
    return prf(*match_counts(predicted, gold))
