# Splitting fused clauses before tuple extraction, on the synthetic restaurant corpus.
# Run from the repository root:  python demos/01_split_then_extract.py

# %% A compound sentence that trips up a dictionary tagger
from atoss.complexity import classify, ratio_report
from atoss.evaluation import evaluate, plug_and_play, predict_corpus
from atoss.metrics import sentence_f1
from atoss.splitter import IdentitySplitter, SftConfig, TinySeq2Seq, greedy_accuracy, train_sft
from atoss.synthetic import SyntheticTeacher, lexicon_backend, make_corpus
from atoss.teacher import FEW_SHOT, FilterConfig, filter_top_k, generate_candidates

train, train_gold = make_corpus(200, seed=1, prefix="tr")
test, _ = make_corpus(150, seed=2, prefix="te")
backend = lexicon_backend()

ex = next(e for e in train if len(e.quads) == 2 and " and the " in e.text)
print(ex.text, "->", classify(ex).value)
print("gold      ", [q.as_tuple() for q in ex.quads])
print("predicted ", [q.as_tuple() for q in backend.predict(ex.text)])
# two aspects in one clause: the tagger pairs both with the first opinion

# %% How much of the corpus is compound?
print(ratio_report(train, "train", "synthetic").as_record())

# %% Ask the (fake) teacher for ten splits and keep the best two
cands = generate_candidates(SyntheticTeacher(), ex, FEW_SHOT)
for c in sorted(cands, key=lambda c: -c.criteria_score)[:4]:
    print(f"{c.criteria_score:.3f}  {c.text}")
kept = filter_top_k(cands, ex, FilterConfig(k=2))
# ties go to fewer segments, so the unsplit sentence can survive the filter
for c in kept:
    print(f"kept, tagger F1 {sentence_f1(backend.predict(c.text), ex.quads).f1:.2f}: {c.text}")

# %% Distil the teacher into a small splitter
teacher = SyntheticTeacher()
pairs = []
for e in train:
    for c in filter_top_k(generate_candidates(teacher, e, FEW_SHOT), e, FilterConfig(k=2)):
        pairs.append((e.text, c.text))
texts = [(e.text, e.text) for e in test]  # vocabulary only
model = TinySeq2Seq.from_corpus(pairs + texts, dim=16, seed=0)
model, log = train_sft(model, pairs, SftConfig(train_batch=8, epochs=20, learning_rate=0.3))
print(f"best epoch {log.best_epoch}, val NLL {log.best_val_loss:.3f}, "
      f"greedy match {greedy_accuracy(model, pairs[:100]):.0%}")

# %% Plug the splitter in front of the unchanged tagger
golds = {e.id: e for e in test}
base = evaluate(predict_corpus(IdentitySplitter(), backend, test), golds)
split = evaluate(predict_corpus(model, backend, test), golds)
for name, r in (("no split", base), ("split", split)):
    acc = {k.value: round(v, 3) for k, v in r.accuracy.items()}
    print(f"{name:<9} P {r.precision:.3f}  R {r.recall:.3f}  F1 {r.f1:.3f}  recall by type {acc}")

text, quads = plug_and_play(model, backend, test[3])
print(test[3].text, "=>", text)
