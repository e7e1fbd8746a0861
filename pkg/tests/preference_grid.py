"""Hand-enumerated preference-selection scenarios.

Compound examples carry four gold tuples; the stub backend returns the first
k of them for a given text, so sentence F1 = 2k / (4 + k):
k=0 -> 0, 1 -> 0.4, 2 -> 0.667, 3 -> 0.857, 4 -> 1.
Simple examples carry one tuple and no joiner words.

Every text of scenario ``tag`` starts with the token ``tag`` so texts never
collide across scenarios.  Token similarity to the original
``<tag> a b c d e f`` (7 tokens):
    B1 "<tag> a b c d e"        one deletion      6/7
    B2 "<tag> a b . c d e f"    one insertion     7/8
    B3 "<tag> x y z d e f"      three swaps       4/7
    B4 "<tag> q r s t u v"      six swaps         1/7
    G  "<tag> a b c d e g"      one swap          6/7
    H  "<tag> a b c d e h"      one swap          6/7
"""

from atoss.data import AnnotatedExample, Polarity, Quadruplet
from atoss.teacher import SplitCandidate

GOLD4 = tuple(Quadruplet(f"t{i}", "food quality", Polarity.POSITIVE, f"o{i}") for i in range(4))
GOLD1 = (GOLD4[0],)

SHAPES = {
    "ORIG": "a b c d e f",
    "B1": "a b c d e",
    "B2": "a b . c d e f",
    "B3": "x y z d e f",
    "B4": "q r s t u v",
    "G": "a b c d e g",
    "H": "a b c d e h",
    # split candidates for the teacher side
    "A": "a b . c d . e f",
    "C": "a b c . d e f",
    "D": "a . b c d e f",
    # simple-sentence candidates by segment count
    "S1": "a b c d e f .",
    "S1b": "a b c d e f !",
    "S2": "a b c . d e f .",
    "S2b": "a b . c d e f .",
}


def text(shape, tag):
    return f"{tag} {SHAPES[shape]}"


class StubBackend:
    """text -> first k gold tuples of its scenario."""

    def __init__(self):
        self.k = {}
        self.calls = 0

    def set(self, t, k):
        self.k[t] = k

    def predict(self, t, task="ASQP"):
        self.calls += 1
        return list(GOLD4[: self.k.get(t, 0)])


# (tag, kind, k of original, few-shot [(shape, k)], beams [(shape, k)], expected preferred, expected dispreferred)
SCENARIOS = [
    # simple: preferred = candidates whose segment count equals |Q| = 1
    ("p1", "simple", 1, [("S1", 1), ("S2", 1), ("S2b", 1)], [], ["S1"], []),
    ("p2", "simple", 1, [("S2", 1), ("S2b", 1)], [], [], []),
    ("p3", "simple", 1, [("S1", 1), ("S1", 1), ("S1b", 1), ("S2", 1)], [], ["S1", "S1b"], []),
    # compound preferred branches
    ("p4", "compound", 3, [("A", 1), ("C", 2)], [], [], []),
    ("p5", "compound", 2, [("A", 2), ("C", 1)], [], ["ORIG"], []),
    ("p6", "compound", 1, [("A", 3), ("C", 1), ("D", 4)], [], ["A", "D"], []),
    ("p7", "compound", 2, [("A", 3), ("C", 2), ("A", 3)], [], ["A"], []),
    ("p8", "compound", 2, [], [], [], []),
    # simple dispreferred: most similar beam, never the original
    ("d1", "simple", 1, [], [("B3", 1), ("B1", 1)], [], ["B1"]),
    ("d2", "simple", 1, [], [("ORIG", 1), ("B3", 1)], [], ["B3"]),
    ("d3", "simple", 1, [], [("ORIG", 1)], [], []),
    # compound dispreferred branches
    ("d4", "compound", 1, [], [("B1", 3), ("B3", 0)], [], []),
    ("d5", "compound", 2, [], [("B1", 2), ("B3", 2), ("B2", 1)], [], ["B3"]),
    ("d6", "compound", 3, [], [("B1", 1), ("B2", 2), ("B4", 0)], [], ["B2"]),
    ("d7", "compound", 3, [], [("H", 1), ("G", 1), ("B3", 2)], [], ["G"]),
    ("d8", "compound", 3, [], [("ORIG", 3), ("B3", 1)], [], ["B3"]),
    # both sides populated: pairs = preferred x dispreferred
    ("b1", "compound", 1, [("A", 3), ("D", 4)], [("B1", 0), ("B3", 1)], ["A", "D"], ["B3"]),
    ("b2", "compound", 2, [("A", 2)], [("B1", 1), ("B2", 0)], ["ORIG"], ["B2"]),
    ("b3", "simple", 1, [("S1", 1), ("S2", 1)], [("B2", 1), ("B4", 1)], ["S1"], ["B2"]),
    ("b4", "compound", 3, [("A", 2)], [("B1", 1)], [], ["B1"]),
]

# hand count of build_pairs over the whole grid: b1 -> 2, b2 -> 1, b3 -> 1, everything else 0
EXPECTED_PAIR_COUNT = 4


def build_grid():
    """Return (examples, few_shot, beams, backend, expected_pref, expected_dispref) keyed by tag."""
    backend = StubBackend()
    examples, few, beams, exp_p, exp_d = [], {}, {}, {}, {}
    for tag, kind, k0, few_spec, beam_spec, pref, dispref in SCENARIOS:
        gold = GOLD1 if kind == "simple" else GOLD4
        ex = AnnotatedExample(tag, text("ORIG", tag), gold)
        examples.append(ex)
        backend.set(ex.text, k0)
        few[tag] = []
        for shape, k in few_spec:
            backend.set(text(shape, tag), k)
            few[tag].append(SplitCandidate(tag, text(shape, tag), "few_shot"))
        beams[tag] = []
        for shape, k in beam_spec:
            backend.set(text(shape, tag), k)
            beams[tag].append(SplitCandidate(tag, text(shape, tag), "beam"))
        exp_p[tag] = [text(s, tag) for s in pref]
        exp_d[tag] = [text(s, tag) for s in dispref]
    return examples, few, beams, backend, exp_p, exp_d
