import pytest
from hypothesis import given
from hypothesis import strategies as st

from atoss.complexity import (
    ComplexityLabel,
    EmptyDataset,
    classify,
    classify_text,
    format_ratio_table,
    ratio_report,
)
from atoss.data import AnnotatedExample, Polarity, Quadruplet

Q = Quadruplet("pizza", "food quality", Polarity.POSITIVE, "great")


def ex(text, n=1):
    return AnnotatedExample("x", text, (Q,) * n)


def test_simple():
    assert classify(ex("the pizza was great .")) is ComplexityLabel.SIMPLE


def test_multi_quad_is_compound():
    assert classify(ex("the pizza was great .", 2)) is ComplexityLabel.COMPOUND


def test_conjunction_single_quad_is_compound():
    assert classify(ex("i will be going back and heartily recommend it !")) is ComplexityLabel.COMPOUND


@pytest.mark.parametrize("text,label", [
    ("the band was great .", ComplexityLabel.SIMPLE),
    ("the pizza , was great .", ComplexityLabel.COMPOUND),
    ("great pizza or pasta", ComplexityLabel.COMPOUND),
    ("But it was great", ComplexityLabel.COMPOUND),
    ("the butter was great", ComplexityLabel.SIMPLE),
    ("it was sandy", ComplexityLabel.SIMPLE),
])
def test_whole_token_conjunctions(text, label):
    assert classify_text(text, 1) is label


def test_raw_text_gate_ignores_quad_count():
    assert classify_text("the pizza was great .") is ComplexityLabel.SIMPLE


@given(st.text(max_size=40), st.integers(min_value=2, max_value=6))
def test_two_or_more_quads_always_compound(text, n):
    assert classify_text(text, n) is ComplexityLabel.COMPOUND


def test_ratio_report_single():
    r = ratio_report([ex("the pizza was great .")], split="test")
    assert (r.simple_pct, r.compound_pct) == (100.0, 0.0)
    assert r.as_record()["split"] == "test"


def test_ratio_report_empty():
    with pytest.raises(EmptyDataset):
        ratio_report([])


@given(st.lists(st.tuples(st.sampled_from(["the pizza .", "a and b", "x , y"]), st.integers(1, 3)),
                min_size=1, max_size=30))
def test_ratios_sum_to_100(items):
    r = ratio_report([ex(t, n) for t, n in items])
    assert r.simple_pct >= 0 and r.compound_pct >= 0
    assert r.simple_pct + r.compound_pct == pytest.approx(100.0, abs=1e-9)


def test_table_rendering(corpus):
    examples, _ = corpus
    table = format_ratio_table([ratio_report(examples, "train", "synthetic")])
    assert "synthetic" in table and " / " in table
