"""A tiny trainable sequence-to-sequence splitter.

Word-level decoder with a deterministic copy pointer.  Tokens keep their
leading whitespace (``"i ' ve  never"`` -> ``["i", " '", " ve", "  never"]``)
so spacing survives decoding exactly.

At each step the pointer marks the last source token already reproduced.
A context vector

    h = tanh(E_prev[y_{t-1}] + E_cur[src[ptr]] + E_next[src[ptr+1]] + E_next2[src[ptr+2]] + b_h)

scores every output column: known vocabulary words (``W_out h + b_out``),
source words outside the vocabulary (scored with the OOV row), and a catch-all
OOV column whose string is spelled out by a fixed character model.  The column
holding the next source token gets an extra copy score ``w_copy . h + b_copy``.
After emitting y, the pointer jumps to the first of the next three source
tokens equal to y (ignoring whitespace); otherwise y counts as an insertion.

The first token carries no leading whitespace and every later token does;
columns violating that are masked, so the model is a proper distribution over
whitespace-stripped strings and beam scores equal :meth:`log_prob`.
"""

from __future__ import annotations

import copy
import json
import math
from functools import lru_cache
from pathlib import Path

import numpy as np

from ..data import atomic_write_text
from .tokens import tokenize

UNK, BOS, EOS_IN = 0, 1, 2
EOS, OOV = 0, 1
SKIP_WINDOW = 3
CHAR_LOGP = -math.log(97.0)  # 96 printable characters plus end-of-word

PARAM_NAMES = ("prev", "cur", "next", "next2", "b_h", "w_out", "b_out", "w_copy", "b_copy")


def _advance(src_keys, ptr, key):
    for k in range(1, SKIP_WINDOW + 1):
        j = ptr + k
        if j < len(src_keys) and src_keys[j] == key:
            return j
    return ptr


def _log_softmax(S):
    m = S.max(axis=-1, keepdims=True)
    return S - (m + np.log(np.exp(S - m).sum(axis=-1, keepdims=True)))


class _Columns:
    """Output columns for one source: vocabulary plus source-only words."""

    def __init__(self, model, src_tokens):
        self.base = len(model.out_vocab)
        self.extra = []
        index = {}
        for tok in src_tokens:
            if tok not in model.out_index and tok not in index:
                index[tok] = self.base + len(self.extra)
                self.extra.append(tok)
        self.extra_index = index
        self.out_index = model.out_index
        n = self.base + len(self.extra)
        strings = list(model.out_vocab) + self.extra
        lead = np.array([s[:1].isspace() for s in strings])
        first_ok = ~lead
        later_ok = lead.copy()
        first_ok[EOS] = False
        later_ok[EOS] = True
        first_ok[OOV] = later_ok[OOV] = True
        self.mask = {True: first_ok, False: later_ok}
        self.strings = strings
        self.size = n

    def col(self, tok):
        c = self.out_index.get(tok)
        if c is None:
            c = self.extra_index.get(tok, OOV)
        return c


class TinySeq2Seq:
    backend_name = "tiny-copy-seq2seq"

    def __init__(self, in_vocab, out_vocab, dim: int = 16, seed: int = 0, init_scale: float = 0.1):
        self.in_vocab = list(in_vocab)
        self.out_vocab = list(out_vocab)
        if self.in_vocab[:3] != ["<unk>", "<bos>", "<eos>"] or self.out_vocab[:2] != ["<eos>", "<oov>"]:
            raise ValueError("vocabularies must start with the reserved symbols")
        self.in_index = {w: i for i, w in enumerate(self.in_vocab)}
        self.out_index = {w: i for i, w in enumerate(self.out_vocab)}
        self.dim = dim
        self.seed = seed
        rng = np.random.default_rng(seed)
        vi, vo = len(self.in_vocab), len(self.out_vocab)
        self.params = {
            "prev": rng.normal(0, init_scale, (vi, dim)),
            "cur": rng.normal(0, init_scale, (vi, dim)),
            "next": rng.normal(0, init_scale, (vi, dim)),
            "next2": rng.normal(0, init_scale, (vi, dim)),
            "b_h": np.zeros(dim),
            "w_out": rng.normal(0, init_scale, (vo, dim)),
            "b_out": np.zeros(vo),
            "w_copy": rng.normal(0, init_scale, dim),
            "b_copy": np.zeros(1),
        }
        self._ctx_cache = lru_cache(maxsize=8192)(self._contexts)

    @classmethod
    def from_corpus(cls, pairs, dim: int = 16, seed: int = 0, **kw) -> "TinySeq2Seq":
        """Build vocabularies from (source, target) pairs."""
        in_words, out_words = set(), set()
        for source, target in pairs:
            for tok in tokenize(source) + tokenize(target):
                in_words.add(tok.strip())
            out_words.update(tokenize(target))
            out_words.update(tokenize(source))
        in_vocab = ["<unk>", "<bos>", "<eos>"] + sorted(in_words)
        out_vocab = ["<eos>", "<oov>"] + sorted(out_words)
        return cls(in_vocab, out_vocab, dim=dim, seed=seed, **kw)

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy(self) -> "TinySeq2Seq":
        other = copy.copy(self)
        other.params = {k: v.copy() for k, v in self.params.items()}
        other._ctx_cache = lru_cache(maxsize=8192)(other._contexts)
        return other

    # -- feature extraction --------------------------------------------------

    def _in_id(self, key):
        return self.in_index.get(key, UNK)

    def _step_features(self, src_keys, ptr, prev_key):
        n = len(src_keys)
        prev = BOS if prev_key is None else self._in_id(prev_key)
        cur = BOS if ptr < 0 else self._in_id(src_keys[ptr])
        nxt = self._in_id(src_keys[ptr + 1]) if ptr + 1 < n else EOS_IN
        nxt2 = self._in_id(src_keys[ptr + 2]) if ptr + 2 < n else EOS_IN
        return prev, cur, nxt, nxt2

    def _contexts(self, source: str, target: str):
        src = tokenize(source)
        tgt = tokenize(target)
        cols = _Columns(self, src)
        src_keys = [t.strip() for t in src]
        steps = len(tgt) + 1
        feats = np.empty((steps, 4), dtype=np.int64)
        copy_col = np.full(steps, -1, dtype=np.int64)
        ycol = np.empty(steps, dtype=np.int64)
        penalty = 0.0
        ptr = -1
        for t in range(steps):
            prev_key = tgt[t - 1].strip() if t else None
            feats[t] = self._step_features(src_keys, ptr, prev_key)
            if ptr + 1 < len(src):
                copy_col[t] = cols.col(src[ptr + 1])
            if t < len(tgt):
                ycol[t] = cols.col(tgt[t])
                if ycol[t] == OOV:
                    penalty += (len(tgt[t]) + 1) * CHAR_LOGP
                ptr = _advance(src_keys, ptr, tgt[t].strip())
            else:
                ycol[t] = EOS
        mask = np.tile(cols.mask[False], (steps, 1))
        mask[0] = cols.mask[True]
        return cols, feats, copy_col, ycol, mask, penalty

    # -- scoring ---------------------------------------------------------------

    def _scores(self, cols, feats, copy_col, mask):
        P = self.params
        H = np.tanh(P["prev"][feats[:, 0]] + P["cur"][feats[:, 1]] + P["next"][feats[:, 2]]
                    + P["next2"][feats[:, 3]] + P["b_h"])
        base = H @ P["w_out"].T + P["b_out"]
        S = np.concatenate([base, np.repeat(base[:, OOV:OOV + 1], len(cols.extra), axis=1)], axis=1)
        rows = np.nonzero(copy_col >= 0)[0]
        copy_score = H @ P["w_copy"] + P["b_copy"][0]
        S[rows, copy_col[rows]] += copy_score[rows]
        S = np.where(mask, S, -np.inf)
        return H, S

    def log_prob(self, source: str, target: str) -> float:
        """Sum over target tokens (and end-of-sequence) of log p(token | source, prefix)."""
        cols, feats, copy_col, ycol, mask, penalty = self._ctx_cache(source, target)
        _, S = self._scores(cols, feats, copy_col, mask)
        logp = _log_softmax(S)
        return float(logp[np.arange(len(ycol)), ycol].sum() + penalty)

    def token_log_probs(self, source: str, target: str) -> np.ndarray:
        cols, feats, copy_col, ycol, mask, _ = self._ctx_cache(source, target)
        _, S = self._scores(cols, feats, copy_col, mask)
        return _log_softmax(S)[np.arange(len(ycol)), ycol]

    def log_prob_and_grad(self, source: str, target: str):
        """Log-probability and its gradient with respect to every parameter array."""
        cols, feats, copy_col, ycol, mask, penalty = self._ctx_cache(source, target)
        H, S = self._scores(cols, feats, copy_col, mask)
        logp = _log_softmax(S)
        steps = np.arange(len(ycol))
        lp = float(logp[steps, ycol].sum() + penalty)

        G = -np.exp(logp)
        G[steps, ycol] += 1.0
        P = self.params
        nb = len(self.out_vocab)
        G_base = G[:, :nb].copy()
        G_base[:, OOV] += G[:, nb:].sum(axis=1)
        g_copy = np.zeros(len(ycol))
        rows = np.nonzero(copy_col >= 0)[0]
        g_copy[rows] = G[rows, copy_col[rows]]

        grads = {k: np.zeros_like(v) for k, v in P.items()}
        grads["w_out"] = G_base.T @ H
        grads["b_out"] = G_base.sum(axis=0)
        grads["w_copy"] = g_copy @ H
        grads["b_copy"] = np.array([g_copy.sum()])
        dA = (G_base @ P["w_out"] + g_copy[:, None] * P["w_copy"]) * (1.0 - H * H)
        grads["b_h"] = dA.sum(axis=0)
        for j, name in enumerate(("prev", "cur", "next", "next2")):
            np.add.at(grads[name], feats[:, j], dA)
        return lp, grads

    # -- training --------------------------------------------------------------

    def apply_gradient(self, grads: dict, learning_rate: float) -> None:
        """Plain gradient-descent step on a loss gradient."""
        for k, g in grads.items():
            self.params[k] -= learning_rate * g

    def train_step(self, batch, learning_rate: float) -> float:
        """One descent step on the mean negative log-likelihood of ``batch``."""
        total = 0.0
        acc = {k: np.zeros_like(v) for k, v in self.params.items()}
        for source, target in batch:
            lp, g = self.log_prob_and_grad(source, target)
            total -= lp
            for k in acc:
                acc[k] -= g[k]
        n = len(batch)
        loss = total / n
        if not math.isfinite(loss):
            return loss
        self.apply_gradient({k: v / n for k, v in acc.items()}, learning_rate)
        return loss

    # -- decoding --------------------------------------------------------------

    def beam_generate(self, source: str, width: int = 10, max_len: int | None = None):
        """Up to ``width`` distinct (text, log-prob) pairs, best first."""
        src = tokenize(source)
        src_keys = [t.strip() for t in src]
        cols = _Columns(self, src)
        max_len = max_len if max_len is not None else 2 * len(src) + 8
        P = self.params
        live = [((), -1, 0.0)]
        finished: dict[str, float] = {}
        for step in range(max_len + 1):
            if not live:
                break
            feats = np.array([self._step_features(src_keys, ptr, toks[-1].strip() if toks else None)
                              for toks, ptr, _ in live])
            copy_col = np.array([cols.col(src[ptr + 1]) if ptr + 1 < len(src) else -1
                                 for _, ptr, _ in live])
            mask = np.tile(cols.mask[step == 0], (len(live), 1))
            _, S = self._scores(cols, feats, copy_col, mask)
            logp = _log_softmax(S)
            # scores stay exact log-probs; OOV spelling and overlong outputs are just never proposed
            logp[:, OOV] = -np.inf
            if step == max_len:
                logp[:, EOS + 1:] = -np.inf
            total = np.array([s for _, _, s in live])[:, None] + logp
            flat = total.ravel()
            order = np.argsort(-flat, kind="stable")
            new_live = []
            for idx in order:
                score = flat[idx]
                if not np.isfinite(score):
                    break
                b, c = divmod(int(idx), cols.size)
                toks, ptr, _ = live[b]
                if c == EOS:
                    text = "".join(toks)
                    if text not in finished or score > finished[text]:
                        finished[text] = float(score)
                    continue
                tok = cols.strings[c]
                new_live.append((toks + (tok,), _advance(src_keys, ptr, tok.strip()), float(score)))
                if len(new_live) == width:
                    break
            live = new_live
            if len(finished) >= width and live:
                worst_kept = sorted(finished.values(), reverse=True)[width - 1]
                if live[0][2] <= worst_kept:
                    break
        ranked = sorted(finished.items(), key=lambda kv: (-kv[1], kv[0]))
        return ranked[:width]

    # -- persistence -----------------------------------------------------------

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        tmp = directory / ".params.npz.tmp"
        with open(tmp, "wb") as f:
            np.savez(f, **{k: self.params[k] for k in PARAM_NAMES})
        tmp.replace(directory / "params.npz")
        meta = {"in_vocab": self.in_vocab, "out_vocab": self.out_vocab, "dim": self.dim, "seed": self.seed}
        atomic_write_text(directory / "vocab.json", json.dumps(meta, ensure_ascii=False))

    @classmethod
    def load(cls, directory) -> "TinySeq2Seq":
        directory = Path(directory)
        meta = json.loads((directory / "vocab.json").read_text(encoding="utf-8"))
        model = cls(meta["in_vocab"], meta["out_vocab"], dim=meta["dim"], seed=meta["seed"])
        with np.load(directory / "params.npz") as data:
            for k in PARAM_NAMES:
                model.params[k] = data[k].astype(np.float64)
        return model
