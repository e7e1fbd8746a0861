# Building preference pairs from tagger feedback and aligning the splitter with DPO.
# python demos/03_preference_pairs.py

# %% SFT first, same recipe as demo 01 but smaller
from collections import Counter

import numpy as np

from atoss.evaluation import evaluate, predict_corpus
from atoss.preference import DpoConfig, build_pairs, dpo_loss, train_dpo
from atoss.splitter import SftConfig, TinySeq2Seq, generate_splits, train_sft
from atoss.synthetic import SyntheticTeacher, lexicon_backend, make_corpus
from atoss.teacher import FEW_SHOT, FilterConfig, filter_top_k, generate_for_examples

train, _ = make_corpus(150, seed=1, prefix="tr")
test, _ = make_corpus(150, seed=2, prefix="te")
backend = lexicon_backend()
few = generate_for_examples(SyntheticTeacher(), train, FEW_SHOT)

pairs = [(e.text, c.text) for e in train for c in filter_top_k(few[e.id], e, FilterConfig(k=2))]
model = TinySeq2Seq.from_corpus(pairs + [(e.text, e.text) for e in test], dim=16, seed=0)
sft, _ = train_sft(model, pairs, SftConfig(train_batch=8, epochs=15, learning_rate=0.3))

# %% Beams from the splitter are the dispreferred pool
beams = {e.id: generate_splits(sft, e.text, 10, e.id) for e in train}
prefs = build_pairs(train, few, beams, backend)
print(len(prefs), "pairs")
print(Counter("kept original" if p.preferred == p.source else "teacher split" for p in prefs))
for p in prefs[:3]:
    print(f"+ {p.preferred}\n- {p.dispreferred}\n")

# %% Align and compare
if prefs:
    aligned, log = train_dpo(sft, prefs, DpoConfig(beta=0.1, batch=8, epochs=1, learning_rate=0.01))
    print("step losses", np.round(log.step_losses[:5], 4), "... final", round(log.final_loss, 4))
    print("loss of the SFT model against itself:", round(dpo_loss(sft, sft, prefs[0]), 4))  # ln 2
    golds = {e.id: e for e in test}
    for name, m in (("sft", sft), ("aligned", aligned)):
        print(name, round(evaluate(predict_corpus(m, backend, test), golds).f1, 4))
