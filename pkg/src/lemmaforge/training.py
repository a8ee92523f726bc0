"""Batching, the training loop and early stopping on dev accuracy."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from ._fileio import atomic_write_text
from .corpus import Corpus
from .lexicon import CandidateProvider, EmptyProvider
from .model import (
    EnhancedLemmatizer,
    Instance,
    apply_encoder_dropout,
    decode_instances,
    make_instance,
    save,
)
from .neural.optim import Adam, clip_grad_norm

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    max_epochs: int = 60
    patience: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    encoder_dropout: float = 0.0
    grad_clip: float = 5.0
    provider: str = "none"
    seed: int = 12345
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        if not 1 <= self.patience <= self.max_epochs:
            raise ValueError("patience must lie in [1, max_epochs]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.encoder_dropout <= 1.0:
            raise ValueError("encoder_dropout must lie in [0, 1]")


def parse_config_text(text: str) -> dict[str, str]:
    """Read ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"config line {lineno}: expected key = value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def coerce_config(cls, values: dict[str, str]) -> dict:
    """Convert string values to the field types of a config dataclass."""
    types = {f.name: f.type for f in fields(cls)}
    out = {}
    for key, raw in values.items():
        if key not in types:
            continue
        t = str(types[key])
        if raw.lower() in ("none", "") and "None" in t:
            out[key] = None
        elif t.startswith("bool"):
            out[key] = parse_bool(raw)
        elif t.startswith("int"):
            out[key] = int(raw)
        elif t.startswith("float"):
            out[key] = float(raw)
        else:
            out[key] = raw
    return out


def parse_bool(raw: str) -> bool:
    value = str(raw).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


@dataclass
class TrainHistory:
    losses: list[float] = field(default_factory=list)
    dev_accuracy: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stop_reason: str = ""

    @property
    def epochs(self) -> int:
        return len(self.dev_accuracy)

    @property
    def best_accuracy(self) -> float:
        return self.dev_accuracy[self.best_epoch - 1] if self.best_epoch else 0.0

    def to_tsv(self) -> str:
        rows = ["epoch\tloss\tdev_acc"]
        rows += [f"{e}\t{loss:.6f}\t{acc:.6f}"
                 for e, (loss, acc) in enumerate(zip(self.losses, self.dev_accuracy), start=1)]
        return "\n".join(rows) + "\n"


class EarlyStopping:
    """Track dev accuracy per epoch; ``update`` returns a stop reason or None.

    Only a strict improvement resets the patience counter, so the best epoch
    is the first one reaching the maximum.
    """

    def __init__(self, max_epochs: int = 60, patience: int = 10):
        self.max_epochs = max_epochs
        self.patience = patience
        self.best = -np.inf
        self.best_epoch = 0
        self.epoch = 0

    def update(self, accuracy: float) -> str | None:
        self.epoch += 1
        improved = accuracy > self.best
        if improved:
            self.best = accuracy
            self.best_epoch = self.epoch
        if self.epoch - self.best_epoch >= self.patience:
            return "early-stop"
        if self.epoch >= self.max_epochs:
            return "max-epochs"
        return None

    @property
    def improved_last(self) -> bool:
        return self.best_epoch == self.epoch


def stopping_epoch(trace: Sequence[float], max_epochs: int = 60, patience: int = 10) -> tuple[int, str]:
    """Epoch at which training on a fixed dev-accuracy trace stops."""
    stopper = EarlyStopping(max_epochs, patience)
    for acc in trace:
        reason = stopper.update(acc)
        if reason:
            return stopper.epoch, reason
    return stopper.epoch, "trace-exhausted"


def make_batches(instances: Sequence[Instance], batch_size: int, rng: np.random.Generator) -> list[list[Instance]]:
    """Shuffle, group by source length, cut into batches, shuffle batch order."""
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    order = rng.permutation(len(instances))
    order = sorted(order, key=lambda i: len(instances[i].source))
    batches = [[instances[i] for i in order[k:k + batch_size]] for k in range(0, len(order), batch_size)]
    return [batches[i] for i in rng.permutation(len(batches))]


def build_instances(corpus: Corpus, provider: CandidateProvider | None, model: EnhancedLemmatizer,
                    with_target: bool = True) -> list[Instance]:
    """One instance per token, candidates queried with the gold form and POS."""
    provider = provider if provider is not None else EmptyProvider()
    return [make_instance(tok, provider.get(tok.form, tok.upos), model.vocab, model.config, with_target)
            for tok in corpus.tokens()]


def exact_match(predicted: Sequence[str], gold: Sequence[str]) -> float:
    if len(predicted) != len(gold):
        raise ValueError("prediction and gold sizes differ")
    if not gold:
        return 0.0
    return sum(p == g for p, g in zip(predicted, gold)) / len(gold)


def dev_accuracy(model: EnhancedLemmatizer, dev_instances: Sequence[Instance], gold: Sequence[str]) -> float:
    return exact_match(decode_instances(model, dev_instances), gold)


def train(model: EnhancedLemmatizer, train_corpus: Corpus, dev_corpus: Corpus,
          provider: CandidateProvider | None, cfg: TrainConfig) -> tuple[EnhancedLemmatizer, TrainHistory]:
    """Train with Adam, selecting the epoch with the best dev accuracy.

    Encoder dropout is applied per batch during training only; dev
    evaluation always receives the provider's candidates.
    """
    if train_corpus.num_tokens() == 0:
        raise ValueError("empty training corpus")
    if dev_corpus.num_tokens() == 0:
        raise ValueError("empty dev corpus")
    rng = np.random.default_rng(cfg.seed)
    train_instances = build_instances(train_corpus, provider, model)
    dev_instances = build_instances(dev_corpus, provider, model, with_target=False)
    dev_gold = [tok.lemma for tok in dev_corpus.tokens()]

    params = model.parameters()
    optimizer = Adam(params, lr=cfg.learning_rate)
    stopper = EarlyStopping(cfg.max_epochs, cfg.patience)
    history = TrainHistory()
    best_state = model.state_dict()

    while True:
        epoch_loss = 0.0
        n_batches = 0
        for batch in make_batches(train_instances, cfg.batch_size, rng):
            batch = apply_encoder_dropout(batch, cfg.encoder_dropout, rng)
            optimizer.zero_grad()
            epoch_loss += model.loss(batch, rng=rng)
            clip_grad_norm(params, cfg.grad_clip)
            optimizer.step()
            n_batches += 1
        acc = dev_accuracy(model, dev_instances, dev_gold)
        history.losses.append(epoch_loss / max(n_batches, 1))
        history.dev_accuracy.append(acc)
        reason = stopper.update(acc)
        logger.info("epoch %d loss %.4f dev_acc %.4f", stopper.epoch, history.losses[-1], acc)
        if stopper.improved_last:
            best_state = model.state_dict()
            if cfg.checkpoint_dir:
                save(model, os.path.join(cfg.checkpoint_dir, "best.model"))
        if cfg.checkpoint_dir:
            save(model, os.path.join(cfg.checkpoint_dir, "last.model"))
            atomic_write_text(os.path.join(cfg.checkpoint_dir, "history.tsv"), history.to_tsv())
        if reason:
            history.stop_reason = reason
            break

    history.best_epoch = stopper.best_epoch
    model.load_state_dict(best_state)
    return model, history
