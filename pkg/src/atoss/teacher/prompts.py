"""Prompt templates for teacher split generation."""

from __future__ import annotations

from typing import Sequence

from ..data import AnnotatedExample, Polarity, Quadruplet

TASK_DESCRIPTION = (
    "[Task Description]\n"
    "You are a sentence splitting expert. You will be provided with a review sentence and a few "
    "[aspect, category, sentiment, opinion] quadruplets from that review sentence. Here is the "
    "definition of each element in the quadruplet:\n"
    "- The 'aspect' refers to a specific feature, attribute, or aspect of a product or service that "
    "a user may express an opinion about. The aspect term might be 'null' for an implicit aspect.\n"
    "- The 'opinion' refers to the sentiment or attitude expressed by a user towards a particular "
    "aspect or feature of a product or service. The opinion term might be 'null' for an implicit opinion.\n"
    "- The 'category' refers to the category that the aspect belongs to (e.g. food quality, "
    "restaurant general, etc.).\n"
    "- The 'sentiment' refers to the sentiment class of the aspect (e.g. positive, negative, neutral).\n"
    "\n"
    "You need to split the sentence into shorter sentences such that each short sentence contains one "
    "aspect term. When splitting, sentences connected by conjunctions must be divided into individual "
    "sentences along with their conjunctions. This process must specify the subject in every sentence. "
    "This process must retain the existing spellings exactly as in the original sentence. This process "
    "must also retain the existing spacings exactly as in the original sentence. If the sentence is too "
    "short to split or does not need to be split, use the original sentence as is. No numbering, line "
    "breaks, or explanations are needed.\n"
)

ZERO_SHOT = "zero_shot"
FEW_SHOT = "few_shot"
MODES = (ZERO_SHOT, FEW_SHOT)


class MissingDemos(ValueError):
    pass


def _q(at, ac, sp, ot):
    return Quadruplet(at, ac, Polarity.parse(sp), ot)


# Demonstrations shown in few-shot prompts; the first three of the ten used originally.
DEFAULT_DEMOS: list[tuple[AnnotatedExample, str]] = [
    (
        AnnotatedExample("demo-1", "i will be going back and heartily recommend it !",
                         (_q("null", "restaurant general", "positive", "recommend"),)),
        "i will be going back and heartily recommend it !",
    ),
    (
        AnnotatedExample("demo-2", "i ' ve never had bad service and the fish is fresh and delicious .", (
            _q("service", "service general", "positive", "never had bad"),
            _q("fish", "food quality", "positive", "fresh"),
            _q("fish", "food quality", "positive", "delicious"),
        )),
        "i ' ve  never had bad service . and the fish is fresh and delicious .",
    ),
    (
        AnnotatedExample(
            "demo-3",
            "very immature bartender , didnt know how to make specific drinks , service was so slowwwww , "
            "the food was not fresh or warm , waitresses were busy flirting with men at the bar and werent "
            "very attentive to all the customers .",
            (
                _q("bartender", "service general", "negative", "immature"),
                _q("service", "service general", "negative", "slowwwww"),
                _q("food", "food quality", "negative", "not fresh or warm"),
                _q("waitresses", "service general", "negative", "werent very attentive"),
            ),
        ),
        "very immature bartender, didnt know how to make specific drinks. service was so slowwwww. "
        "the food was not fresh or warm. waitresses were busy flirting with men at the bar and werent "
        "very attentive to all the customers .",
    ),
]


def format_quads(example: AnnotatedExample) -> str:
    order = example.task.default_order
    return repr([q.elements(order) for q in example.quads])


def _block(example: AnnotatedExample, split: str | None) -> str:
    out = f"Original sentence: {example.text}\n\nQuadruplets: {format_quads(example)}\n\nSplit sentence:"
    return out + (f" {split}\n" if split is not None else "")


def render_prompt(mode: str, example: AnnotatedExample,
                  demos: Sequence[tuple[AnnotatedExample, str]] | None = None) -> str:
    """Build the teacher prompt.

    Both modes show the target sentence with its tuples; ``few_shot`` also
    enumerates ``demos`` as worked examples between the task description and
    the target.
    """
    if mode not in MODES:
        raise ValueError(f"unknown prompt mode {mode!r}")
    parts = [TASK_DESCRIPTION]
    if mode == FEW_SHOT:
        if not demos:
            raise MissingDemos("few-shot prompting needs at least one demonstration")
        for i, (demo, split) in enumerate(demos, 1):
            parts.append(f"[Example {i}]\n{_block(demo, split)}")
    parts.append(f"[Target]\n{_block(example, None)}")
    return "\n".join(parts)


def parse_target_block(prompt: str) -> tuple[str, str]:
    """Recover (sentence, quadruplet-list text) of the target from a rendered prompt."""
    tail = prompt.rsplit("[Target]\n", 1)[-1]
    sentence = tail.split("Original sentence: ", 1)[1].split("\n", 1)[0]
    quads = tail.split("Quadruplets: ", 1)[1].split("\n", 1)[0]
    return sentence, quads
