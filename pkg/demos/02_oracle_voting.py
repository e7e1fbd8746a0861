# How good could splitting get?  Best-of-m voting over teacher candidates with gold labels.
# python demos/02_oracle_voting.py

# %%
from atoss.evaluation import corpus_oracle_curve, curve_to_csv, oracle_vote
from atoss.synthetic import SyntheticTeacher, lexicon_backend, make_corpus
from atoss.teacher import FEW_SHOT, ZERO_SHOT, generate_for_examples

examples, _ = make_corpus(200, seed=2, prefix="ov")
backend = lexicon_backend()
teacher = SyntheticTeacher()

pools = {mode: generate_for_examples(teacher, examples, mode) for mode in (ZERO_SHOT, FEW_SHOT)}

# %% One sentence: the curve climbs once a usable split shows up
ex = next(e for e in examples if len(e.quads) > 1)
curve = oracle_vote(ex, pools[ZERO_SHOT][ex.id], backend, max_m=10)
print(ex.text)
print([round(f, 3) for _, f in curve.points])

# %% Whole corpus, both prompt styles
curves = {m: corpus_oracle_curve(examples, pools[m], backend, 10, m) for m in pools}
print(" m  " + "  ".join(f"{m:>9}" for m in curves))
for i in range(11):
    print(f"{i:2d}  " + "  ".join(f"{c.f1_at(i):9.4f}" for c in curves.values()))
assert all(c.is_monotone() for c in curves.values())

# few-shot candidates reach the ceiling sooner
print(curve_to_csv(curves).splitlines()[:3])
