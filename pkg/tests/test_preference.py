import math
import random

import numpy as np
import pytest

from atoss.data import AnnotatedExample
from atoss.preference import (
    DpoConfig,
    EmptyPairs,
    PreferencePair,
    build_pairs,
    dpo_loss,
    dpo_loss_and_grad,
    select_dispreferred,
    select_preferred,
    sentence_f1,
    similarity,
    train_dpo,
)
from atoss.preference import pair_from_record
from atoss.splitter import TinySeq2Seq
from atoss.splitter.tiny import PARAM_NAMES
from atoss.synthetic import make_corpus

from oracles import brute_match, brute_prf, edit_distance, log_sigmoid, random_quad
from preference_grid import GOLD4, SCENARIOS, EXPECTED_PAIR_COUNT, build_grid

LN2 = math.log(2.0)


# -- sentence F1 and similarity ------------------------------------------------------

def test_sentence_f1_examples():
    a, b, c = GOLD4[:3]
    assert sentence_f1([a, b], [a, c]) == pytest.approx((0.5, 0.5, 0.5))
    assert sentence_f1([], [a]).f1 == 0.0
    assert sentence_f1([a, a], [a]).f1 == 1.0


def test_sentence_f1_matches_oracle():
    rng = random.Random(3)
    for _ in range(1000):
        pred = [random_quad(rng) for _ in range(rng.randint(0, 4))]
        gold = [random_quad(rng) for _ in range(rng.randint(0, 4))]
        assert tuple(sentence_f1(pred, gold)) == brute_prf(*brute_match(pred, gold))


def test_similarity_examples():
    assert similarity("a b c", "a b") == pytest.approx(2 / 3)
    assert similarity("a b c", "a b c") == 1.0
    assert similarity("a b", "c d") == 0.0
    assert similarity("", "") == 1.0


def test_similarity_matches_oracle():
    rng = random.Random(5)
    words = "a b c . and".split()
    for _ in range(500):
        x = [rng.choice(words) for _ in range(rng.randint(0, 6))]
        y = [rng.choice(words) for _ in range(rng.randint(0, 6))]
        sa, sb = " ".join(x), " ".join(y)
        longest = max(len(x), len(y))
        expected = 1.0 if longest == 0 else 1 - edit_distance(tuple(x), tuple(y)) / longest
        assert similarity(sa, sb) == pytest.approx(expected, abs=1e-12)
        assert similarity(sa, sb) == similarity(sb, sa)
        assert (similarity(sa, sb) == 1.0) == (x == y)


# -- rule table -------------------------------------------------------------------

@pytest.fixture(scope="module")
def grid():
    return build_grid()


@pytest.mark.parametrize("tag", [s[0] for s in SCENARIOS])
def test_rule_table(grid, tag):
    examples, few, beams, backend, exp_p, exp_d = grid
    ex = next(e for e in examples if e.id == tag)
    assert select_preferred(ex, few[tag], backend) == exp_p[tag]
    assert select_dispreferred(ex, beams[tag], backend) == exp_d[tag]


def test_grid_covers_every_branch():
    assert len(SCENARIOS) >= 12
    kinds = {(s[1], bool(s[5]), bool(s[6])) for s in SCENARIOS}
    assert ("simple", False, False) in kinds and ("compound", True, True) in kinds


def test_build_pairs_on_grid(grid):
    examples, few, beams, backend, exp_p, exp_d = grid
    pairs = build_pairs(examples, few, beams, backend)
    assert len(pairs) == EXPECTED_PAIR_COUNT
    expected = {(tag, p, d) for tag in exp_p for p in exp_p[tag] for d in exp_d[tag] if p != d}
    assert {(x.id, x.preferred, x.dispreferred) for x in pairs} == expected
    for x in pairs:
        assert x.preferred != x.dispreferred and x.dispreferred != x.source


def test_pair_record_roundtrip():
    pair = PreferencePair("s", "a .", "b .", "id", 0.4, 1.0)
    assert pair_from_record(pair.as_record()) == pair
    with pytest.raises(ValueError):
        PreferencePair("s", "a .", "a .")


# -- DPO --------------------------------------------------------------------------

def _pairs(n=20, seed=4):
    """Synthetic pairs: the gold split preferred over the unsplit sentence."""
    examples, gold = make_corpus(60, seed=seed, prefix="dp")
    out = []
    for e in examples:
        if gold[e.id] != e.text:
            out.append(PreferencePair(e.text, gold[e.id], e.text, e.id))
        if len(out) == n:
            break
    return out


@pytest.fixture(scope="module")
def tiny():
    pairs = _pairs()
    corpus = [(p.source, p.preferred) for p in pairs]
    return pairs, TinySeq2Seq.from_corpus(corpus, dim=6, seed=2, init_scale=0.5)


def test_loss_is_ln2_at_reference(tiny):
    pairs, model = tiny
    for p in pairs:
        assert dpo_loss(model, model.copy(), p) == pytest.approx(LN2, abs=1e-9)


class _Fixed:
    def __init__(self, table):
        self.table = table

    def log_prob(self, source, target):
        return self.table[target]


def test_loss_recomputed_from_log_probs():
    pair = PreferencePair("s", "w", "l")
    pol, ref = _Fixed({"w": -1.0, "l": -3.0}), _Fixed({"w": -2.0, "l": -2.5})
    z = 0.5 * ((-1.0 + 2.0) - (-3.0 + 2.5))
    assert dpo_loss(pol, ref, pair, DpoConfig(beta=0.5)) == pytest.approx(-log_sigmoid(z), abs=1e-12)


def test_loss_falls_as_preferred_rises():
    pair = PreferencePair("s", "w", "l")
    ref = _Fixed({"w": -2.0, "l": -2.0})
    losses = [dpo_loss(_Fixed({"w": lp, "l": -2.0}), ref, pair) for lp in np.linspace(-6, 0, 13)]
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_zero_beta_is_flat(tiny):
    pairs, model = tiny
    cfg = DpoConfig(beta=0.0)
    policy = model.copy()
    policy.params["b_out"] += 0.3
    loss, grads = dpo_loss_and_grad(policy, model, pairs[0], cfg)
    assert loss == pytest.approx(LN2, abs=1e-12)
    assert all(not np.any(g) for g in grads.values())


def test_gradient_matches_finite_differences(tiny):
    pairs, model = tiny
    ref = model.copy()
    policy = model.copy()
    rng = np.random.default_rng(1)
    for k in policy.params:
        policy.params[k] += rng.normal(0, 0.05, policy.params[k].shape)
    cfg = DpoConfig(beta=0.5)
    pair = pairs[1]
    _, grads = dpo_loss_and_grad(policy, ref, pair, cfg)
    eps, checked = 1e-5, 0
    while checked < 20:
        name = PARAM_NAMES[rng.integers(len(PARAM_NAMES))]
        arr = policy.params[name]
        idx = tuple(rng.integers(d) for d in arr.shape)
        if abs(grads[name][idx]) < 1e-7:
            continue
        old = arr[idx]
        arr[idx] = old + eps
        up = dpo_loss(policy.copy(), ref, pair, cfg)
        arr[idx] = old - eps
        down = dpo_loss(policy.copy(), ref, pair, cfg)
        arr[idx] = old
        fd = (up - down) / (2 * eps)
        assert abs(fd - grads[name][idx]) / max(abs(fd), abs(grads[name][idx])) < 1e-4, (name, idx)
        checked += 1


def test_toy_alignment_lowers_loss(tiny):
    pairs, model = tiny
    before = {k: v.copy() for k, v in model.params.items()}
    policy, log = train_dpo(model, pairs, DpoConfig(beta=0.1, batch=4, epochs=1, learning_rate=0.5))
    assert len(pairs) == 20 and len(log.step_losses) == 5
    assert log.step_losses[0] == pytest.approx(LN2, abs=1e-9)
    assert log.final_loss < LN2
    assert policy is not model
    assert all(np.array_equal(before[k], model.params[k]) for k in before)


def test_empty_pairs(tiny):
    with pytest.raises(EmptyPairs):
        train_dpo(tiny[1], [])


@pytest.mark.parametrize("kwargs", [{"beta": -0.1}, {"loss_kind": "hinge"}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        DpoConfig(**kwargs)


def test_simple_example_without_candidates():
    ex = AnnotatedExample("s", "the pizza was great .", GOLD4[:1])
    assert select_preferred(ex, [], None) == []
    assert select_dispreferred(ex, [], None) == []
