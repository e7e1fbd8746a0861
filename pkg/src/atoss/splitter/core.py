"""Splitter training (SFT), beam candidates, gated single-best splitting, checkpoints."""

from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from ..complexity import ComplexityLabel
from ..data import AnnotatedExample, atomic_write_text
from ..teacher.filtering import SplitCandidate
from .tiny import TinySeq2Seq

log = logging.getLogger(__name__)


@runtime_checkable
class SeqModel(Protocol):
    def log_prob(self, source: str, target: str) -> float:
        ...

    def beam_generate(self, source: str, width: int) -> list[tuple[str, float]]:
        ...

    def train_step(self, batch, learning_rate: float) -> float:
        ...


class EmptyCorpus(ValueError):
    pass


class DivergedLoss(RuntimeError):
    pass


@dataclass
class SftConfig:
    train_batch: int = 64
    val_batch: int = 8
    epochs: int = 50
    learning_rate: float = 6e-5
    early_stop_patience: int = 20

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value <= 0:
                raise ValueError(f"SftConfig.{name} must be positive, got {value}")


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = math.inf
    stopped_early: bool = False


class IdentitySplitter:
    """Stand-in splitter that returns its input; used for no-split baselines."""

    backend_name = "identity"

    def log_prob(self, source, target):
        return 0.0 if target == source else -math.inf

    def beam_generate(self, source, width=1):
        return [(source, 0.0)]

    def train_step(self, batch, learning_rate):
        raise TypeError("the identity splitter has no parameters")


def sft_loss(model: SeqModel, source: str, target: str) -> float:
    """Negative log-likelihood of the split ``target`` given ``source``."""
    if not target.strip():
        raise ValueError("SFT target must be non-empty")
    return -model.log_prob(source, target)


def as_pairs(corpus) -> list[tuple[str, str]]:
    """Accept (s, s'), (s, s', Q) tuples or records with source/target keys."""
    pairs = []
    for item in corpus or ():
        if isinstance(item, dict):
            pairs.append((item["source"], item["target"]))
        else:
            pairs.append((item[0], item[1]))
    return pairs


def mean_nll(model: SeqModel, pairs) -> float:
    return float(np.mean([-model.log_prob(s, t) for s, t in pairs])) if pairs else math.nan


def _snapshot(model):
    return model.copy() if hasattr(model, "copy") else copy.deepcopy(model)


def train_sft(model: SeqModel, corpus, config: SftConfig | None = None, val=None, seed: int = 0):
    """Fine-tune on (source, split) pairs by minimizing the NLL.

    Validation NLL drives checkpoint selection and early stopping; without a
    validation set the training NLL is monitored instead.  Returns the model
    at its best epoch together with the per-epoch log.
    """
    config = config or SftConfig()
    pairs = as_pairs(corpus)
    if not pairs:
        raise EmptyCorpus("SFT corpus is empty")
    val_pairs = as_pairs(val) or pairs
    rng = np.random.default_rng(seed)
    history = TrainLog()
    best_model = _snapshot(model)
    bad_epochs = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(pairs))
        total = 0.0
        for i in range(0, len(pairs), config.train_batch):
            batch = [pairs[j] for j in order[i:i + config.train_batch]]
            loss = model.train_step(batch, config.learning_rate)
            if not math.isfinite(loss):
                raise DivergedLoss(f"non-finite training loss at epoch {epoch}")
            total += loss * len(batch)
        train_loss = total / len(pairs)
        val_loss = mean_nll(model, val_pairs)
        if not math.isfinite(val_loss):
            raise DivergedLoss(f"non-finite validation loss at epoch {epoch}")
        if val_loss < history.best_val_loss:
            history.best_val_loss = val_loss
            history.best_epoch = epoch
            best_model = _snapshot(model)
            bad_epochs = 0
        else:
            bad_epochs += 1
        history.epochs.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss,
                               "best_val_loss": history.best_val_loss})
        log.debug("sft epoch %d train %.4f val %.4f", epoch, train_loss, val_loss)
        if bad_epochs >= config.early_stop_patience:
            history.stopped_early = True
            break
    return best_model, history


def generate_splits(model: SeqModel, source: str, width: int = 10, source_id: str = "") -> list[SplitCandidate]:
    return [SplitCandidate(source_id, text, "beam", model_score=score)
            for text, score in model.beam_generate(source, width)]


def split(model: SeqModel, item, gate: ComplexityLabel | None = None, width: int = 1) -> str:
    """Best split of an example or raw text; Simple-gated input passes through unchanged."""
    text = item.text if isinstance(item, AnnotatedExample) else item
    if gate is ComplexityLabel.SIMPLE:
        return text
    beams = model.beam_generate(text, width)
    return beams[0][0] if beams else text


# -- checkpoints ---------------------------------------------------------------

BACKENDS = {TinySeq2Seq.backend_name: TinySeq2Seq}


def save_checkpoint(model, directory, config=None, epoch: int = 0, val_loss: float | None = None) -> Path:
    directory = Path(directory)
    model.save(directory)
    manifest = {
        "backend_name": model.backend_name,
        "config": asdict(config) if hasattr(config, "__dataclass_fields__") else (config or {}),
        "epoch": epoch,
        "val_loss": val_loss,
    }
    atomic_write_text(directory / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True))
    return directory


def load_checkpoint(directory):
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    try:
        cls = BACKENDS[manifest["backend_name"]]
    except KeyError:
        raise ValueError(f"unknown splitter backend {manifest['backend_name']!r}") from None
    return cls.load(directory), manifest


def greedy_accuracy(model: SeqModel, pairs: Sequence[tuple[str, str]]) -> float:
    """Fraction of pairs whose width-1 decode equals the target exactly."""
    hits = sum(split(model, s) == t for s, t in pairs)
    return hits / len(pairs) if pairs else 0.0
