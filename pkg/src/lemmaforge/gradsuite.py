"""Randomised finite-difference checks for every layer and the full model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, Sentence, Token
from .model import EnhancedLemmatizer, ModelConfig, build_vocab, make_instance
from .neural.gradcheck import grad_check
from .neural.layers import (
    LstmCell,
    Parameter,
    attention_backward,
    bilstm_backward,
    bilstm_encode,
    embed,
    embed_backward,
    linear,
    linear_backward,
    lstm_step,
    lstm_step_backward,
    soft_dot_attention,
    softmax_xent,
)

TOLERANCES = {
    "embed": 1e-6,
    "linear": 1e-7,
    "softmax_xent": 1e-6,
    "lstm_step": 1e-4,
    "bilstm": 1e-4,
    "attention": 1e-4,
    "model": 1e-3,
}


@dataclass
class SuiteResult:
    check: str
    seed: int
    max_error: float
    worst: str
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance


def _projection_loss(out, R):
    return float((out * R).sum())


def check_embed(rng):
    table = Parameter("table", rng.normal(size=(7, 4)))
    ids = rng.integers(0, 7, size=9)
    R = rng.normal(size=(9, 4))

    def fn():
        out = embed(table, ids)
        embed_backward(table, ids, R)
        return _projection_loss(out, R)

    return grad_check(fn, [table], rng=rng)


def check_linear(rng):
    W = Parameter("W", rng.normal(size=(5, 6)))
    b = Parameter("b", rng.normal(size=5))
    x = Parameter("x", rng.normal(size=(3, 6)))
    R = rng.normal(size=(3, 5))

    def fn():
        y = linear(W, b, x.value)
        x.grad += linear_backward(W, b, x.value, R)
        return _projection_loss(y, R)

    return grad_check(fn, [W, b, x], rng=rng)


def check_softmax_xent(rng):
    logits = Parameter("logits", rng.normal(scale=2.0, size=(4, 6)))
    target = rng.integers(0, 6, size=4)

    def fn():
        loss, grad = softmax_xent(logits.value, target)
        logits.grad += grad
        return float(loss.sum())

    return grad_check(fn, [logits], rng=rng)


def check_lstm_step(rng):
    cell = LstmCell("cell", 4, 5, rng)
    for p in cell.parameters():
        p.value[...] = rng.normal(scale=0.5, size=p.shape)
    x = Parameter("x", rng.normal(size=(3, 4)))
    h = Parameter("h", rng.normal(size=(3, 5)))
    c = Parameter("c", rng.normal(size=(3, 5)))
    Rh = rng.normal(size=(3, 5))
    Rc = rng.normal(size=(3, 5))

    def fn():
        h2, c2, cache = lstm_step(cell, x.value, h.value, c.value)
        dx, dh, dc = lstm_step_backward(cell, cache, Rh, Rc)
        x.grad += dx
        h.grad += dh
        c.grad += dc
        return _projection_loss(h2, Rh) + _projection_loss(c2, Rc)

    return grad_check(fn, [*cell.parameters(), x, h, c], rng=rng)


def check_bilstm(rng):
    fwd = LstmCell("fwd", 3, 4, rng)
    bwd = LstmCell("bwd", 3, 4, rng)
    xs = Parameter("xs", rng.normal(size=(2, 5, 3)))
    mask = np.array([[True] * 5, [True] * 3 + [False] * 2])
    R = rng.normal(size=(2, 5, 8)) * mask[..., None]

    def fn():
        out, cache = bilstm_encode(fwd, bwd, xs.value, mask)
        xs.grad += bilstm_backward(cache, R)
        return _projection_loss(out, R)

    return grad_check(fn, [*fwd.parameters(), *bwd.parameters(), xs], rng=rng)


def check_attention(rng):
    W = Parameter("W_a", rng.normal(size=(6, 5)))
    q = Parameter("query", rng.normal(size=(3, 5)))
    mem = Parameter("memory", rng.normal(size=(3, 4, 6)))
    mask = np.array([[True] * 4, [True, True, False, False], [True, False, False, False]])
    R = rng.normal(size=(3, 6))

    def fn():
        ctx, _, cache = soft_dot_attention(q.value, mem.value, W, mask)
        dq, dmem = attention_backward(cache, R)
        q.grad += dq
        mem.grad += dmem
        return _projection_loss(ctx, R)

    return grad_check(fn, [W, q, mem], rng=rng)


def _toy_model(seed: int):
    toks = [
        Token("dogs", "NOUN", ("Number=Plur",), "dog"),
        Token("walked", "VERB", ("Tense=Past",), "walk"),
        Token("big", "ADJ", (), "big"),
    ]
    corpus = Corpus((Sentence(tuple(toks)),))
    cfg = ModelConfig(char_emb_dim=6, tag_emb_dim=6, enc_hidden=4, dec_hidden=8, dropout=0.0, seed=seed)
    vocab = build_vocab(corpus)
    model = EnhancedLemmatizer(vocab, cfg)
    cands = [["dog", "dogs"], []]
    k = seed % len(toks)
    batch = [make_instance(toks[(k + j) % 3], cands[j], vocab, cfg) for j in range(2)]
    return model, batch


def check_model(rng, seed: int, max_entries: int | None = 12):
    model, batch = _toy_model(seed)
    return grad_check(lambda: model.loss(batch), model.parameters(), rng=rng, max_entries=max_entries,
                      value_fn=lambda: model.loss(batch, backward=False))


LAYER_CHECKS = {
    "embed": check_embed,
    "linear": check_linear,
    "softmax_xent": check_softmax_xent,
    "lstm_step": check_lstm_step,
    "bilstm": check_bilstm,
    "attention": check_attention,
}


def run_gradient_suite(seeds: int = 20, model_entries: int | None = 12) -> list[SuiteResult]:
    results = []
    for seed in range(seeds):
        for name, check in LAYER_CHECKS.items():
            report = check(np.random.default_rng(seed))
            worst, err = report.worst()
            results.append(SuiteResult(name, seed, err, worst, TOLERANCES[name]))
        report = check_model(np.random.default_rng(seed), seed, model_entries)
        worst, err = report.worst()
        results.append(SuiteResult("model", seed, err, worst, TOLERANCES["model"]))
    return results
