"""Dual-encoder lemmatizer.

Encoder 1 reads the surface form characters followed by the POS tag and the
morphological features; encoder 2 reads the concatenated lemma candidates.
Their final states initialise the decoder through one linear layer. At every
decoder step two bilinear attentions (one per encoder) produce contexts that
are merged with the decoder state by a second linear layer before the output
projection.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from typing import Iterable, Sequence

import numpy as np

from ._fileio import atomic_write_bytes
from .corpus import Corpus, Token
from .lexicon import CandidateProvider, EmptyProvider
from .neural.layers import (
    LstmCell,
    Parameter,
    attention_backward,
    bilstm_backward,
    bilstm_encode,
    dropout_mask,
    embed,
    embed_backward,
    final_states,
    final_states_backward,
    linear,
    linear_backward,
    lstm_step,
    lstm_step_backward,
    soft_dot_attention,
    softmax_xent,
    uniform_init,
)
from .neural.serialize import ParamFormatError, pack_params, unpack_params

PAD, SOS, EOS, UNK, SEP, CSEP, EMPTY = range(7)
SPECIALS = ("<pad>", "<sos>", "<eos>", "<unk>", "<sep>", "<csep>", "<empty>")


def pos_symbol(upos: str) -> str:
    return f"<pos:{upos}>"


def feat_symbol(feat: str) -> str:
    return f"<feat:{feat}>"


class Vocab:
    """Dense symbol inventory. Characters are plain one-character strings;
    specials, POS tags and features are bracketed multi-character names, so
    the two never collide."""

    def __init__(self, symbols: Sequence[str]):
        symbols = list(symbols)
        if tuple(symbols[:len(SPECIALS)]) != SPECIALS:
            raise ValueError("vocabulary must start with the special symbols")
        self.symbols = symbols
        self.index = {s: i for i, s in enumerate(symbols)}
        if len(self.index) != len(symbols):
            raise ValueError("duplicate vocabulary symbols")

    def __len__(self):
        return len(self.symbols)

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.symbols == other.symbols

    def __contains__(self, symbol):
        return symbol in self.index

    def id(self, symbol: str) -> int:
        return self.index.get(symbol, UNK)

    def ids(self, symbols: Iterable[str]) -> tuple[int, ...]:
        return tuple(self.index.get(s, UNK) for s in symbols)

    def is_char(self, i: int) -> bool:
        return i >= len(SPECIALS) and len(self.symbols[i]) == 1


@dataclass(frozen=True)
class ModelConfig:
    char_emb_dim: int = 64
    # the embedding table is shared, so this must equal char_emb_dim
    tag_emb_dim: int = 64
    enc_hidden: int = 128
    dec_hidden: int = 256
    encoder_dropout: float = 0.0
    dropout: float = 0.3
    use_feats: bool = True
    max_decode_extra: int = 20
    seed: int = 12345

    def __post_init__(self):
        for name in ("char_emb_dim", "tag_emb_dim", "enc_hidden", "dec_hidden"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.tag_emb_dim != self.char_emb_dim:
            raise ValueError("tag_emb_dim must equal char_emb_dim (shared embedding table)")
        for name in ("encoder_dropout", "dropout"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.dropout >= 1.0:
            raise ValueError("dropout must be below 1")
        if self.max_decode_extra < 0:
            raise ValueError("max_decode_extra must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


# -- encoding --------------------------------------------------------------

def encode_source(token: Token, config: ModelConfig | None = None) -> list[str]:
    """Form characters, separator, POS tag, then (optionally) features."""
    use_feats = True if config is None else config.use_feats
    out = list(token.form) + [SPECIALS[SEP], pos_symbol(token.upos)]
    if use_feats:
        out.extend(feat_symbol(f) for f in token.feats)
    return out


def encode_candidates(cands: Sequence[str]) -> list[str]:
    if not cands:
        return [SPECIALS[EMPTY]]
    out: list[str] = []
    for k, cand in enumerate(cands):
        if k:
            out.append(SPECIALS[CSEP])
        out.extend(cand)
    return out


@dataclass(frozen=True)
class Instance:
    source: tuple[int, ...]
    candidates: tuple[int, ...]
    target: tuple[int, ...] | None = None

    @property
    def form_length(self) -> int:
        return self.source.index(SEP) if SEP in self.source else len(self.source)


def make_instance(token: Token, candidates: Sequence[str], vocab: Vocab, config: ModelConfig,
                  with_target: bool = True) -> Instance:
    target = None
    if with_target:
        target = (SOS,) + vocab.ids(token.lemma) + (EOS,)
    return Instance(vocab.ids(encode_source(token, config)),
                    vocab.ids(encode_candidates(candidates)), target)


def build_vocab(train: Corpus, providers: Sequence[CandidateProvider] = (),
                config: ModelConfig | None = None) -> Vocab:
    tokens = train.tokens()
    if not tokens:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    chars, tags, feats = set(), set(), set()
    for tok in tokens:
        chars.update(tok.form)
        chars.update(tok.lemma)
        tags.add(tok.upos)
        feats.update(tok.feats)
        for provider in providers:
            for cand in provider.get(tok.form, tok.upos):
                chars.update(cand)
    symbols = list(SPECIALS)
    symbols += sorted(chars)
    symbols += [pos_symbol(t) for t in sorted(tags)]
    symbols += [feat_symbol(f) for f in sorted(feats)]
    return Vocab(symbols)


def apply_encoder_dropout(batch: Sequence[Instance], p: float, rng: np.random.Generator) -> list[Instance]:
    """With probability p (one draw for the whole batch) blank every
    instance's candidates to the EMPTY symbol."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("encoder dropout must lie in [0, 1]")
    if rng.random() < p:
        return [replace(inst, candidates=(EMPTY,)) for inst in batch]
    return list(batch)


def _pad(seqs):
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    ids = np.full((len(seqs), int(lengths.max())), PAD, dtype=np.int64)
    for i, s in enumerate(seqs):
        ids[i, :len(s)] = s
    mask = np.arange(ids.shape[1])[None, :] < lengths[:, None]
    return ids, mask, lengths


# -- the model -------------------------------------------------------------

class EnhancedLemmatizer:
    def __init__(self, vocab: Vocab, config: ModelConfig):
        self.vocab = vocab
        self.config = config
        rng = np.random.default_rng(config.seed)
        V, D = len(vocab), config.char_emb_dim
        He, Hd = config.enc_hidden, config.dec_hidden
        self.embedding = Parameter("embedding", rng.uniform(-1.0, 1.0, (V, D)))
        self.enc1_fwd = LstmCell("enc1.fwd", D, He, rng)
        self.enc1_bwd = LstmCell("enc1.bwd", D, He, rng)
        self.enc2_fwd = LstmCell("enc2.fwd", D, He, rng)
        self.enc2_bwd = LstmCell("enc2.bwd", D, He, rng)
        self.bridge_W = Parameter("bridge.W", uniform_init(rng, (2 * Hd, 4 * He), 4 * He))
        self.bridge_b = Parameter("bridge.b", np.zeros(2 * Hd))
        self.decoder = LstmCell("decoder", D, Hd, rng)
        self.attn1_W = Parameter("attn1.W", uniform_init(rng, (2 * He, Hd), Hd))
        self.attn2_W = Parameter("attn2.W", uniform_init(rng, (2 * He, Hd), Hd))
        self.combine_W = Parameter("combine.W", uniform_init(rng, (Hd, Hd + 4 * He), Hd + 4 * He))
        self.combine_b = Parameter("combine.b", np.zeros(Hd))
        self.out_W = Parameter("out.W", uniform_init(rng, (V, Hd), Hd))
        self.out_b = Parameter("out.b", np.zeros(V))

    def parameters(self) -> list[Parameter]:
        params = [self.embedding]
        for cell in (self.enc1_fwd, self.enc1_bwd, self.enc2_fwd, self.enc2_bwd):
            params.extend(cell.parameters())
        params += [self.bridge_W, self.bridge_b]
        params.extend(self.decoder.parameters())
        params += [self.attn1_W, self.attn2_W, self.combine_W, self.combine_b, self.out_W, self.out_b]
        return params

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.value.copy() for p in self.parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = {p.name: p for p in self.parameters()}
        if set(params) != set(state):
            raise ValueError("parameter names do not match the model")
        for name, value in state.items():
            if params[name].value.shape != value.shape:
                raise ValueError(f"shape mismatch for {name}")
            params[name].value[...] = value

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    # -- encoding ----------------------------------------------------------

    def _encode(self, sources, candidates, rng=None):
        He = self.config.enc_hidden
        rate = self.config.dropout
        src, m1, len1 = _pad(sources)
        cand, m2, len2 = _pad(candidates)
        x1 = embed(self.embedding, src)
        x2 = embed(self.embedding, cand)
        d1 = dropout_mask(rng, x1.shape, rate)
        d2 = dropout_mask(rng, x2.shape, rate)
        mem1, enc1 = bilstm_encode(self.enc1_fwd, self.enc1_bwd, x1 if d1 is None else x1 * d1, m1)
        mem2, enc2 = bilstm_encode(self.enc2_fwd, self.enc2_bwd, x2 if d2 is None else x2 * d2, m2)
        fin = np.concatenate([final_states(mem1, len1, He), final_states(mem2, len2, He)], axis=-1)
        s = np.tanh(linear(self.bridge_W, self.bridge_b, fin))
        cache = (src, m1, len1, d1, enc1, cand, m2, len2, d2, enc2, fin, s)
        return mem1, m1, mem2, m2, s, cache

    def _encode_backward(self, cache, mem1_shape, mem2_shape, dmem1, dmem2, dh0, dc0):
        He = self.config.enc_hidden
        src, m1, len1, d1, enc1, cand, m2, len2, d2, enc2, fin, s = cache
        ds = np.concatenate([dh0, dc0], axis=-1) * (1.0 - s * s)
        dfin = linear_backward(self.bridge_W, self.bridge_b, fin, ds)
        dmem1 = dmem1 + final_states_backward(dfin[:, :2 * He], mem1_shape, len1, He)
        dmem2 = dmem2 + final_states_backward(dfin[:, 2 * He:], mem2_shape, len2, He)
        dx1 = bilstm_backward(enc1, dmem1)
        dx2 = bilstm_backward(enc2, dmem2)
        embed_backward(self.embedding, src, dx1 if d1 is None else dx1 * d1)
        embed_backward(self.embedding, cand, dx2 if d2 is None else dx2 * d2)

    def _decode_step(self, x, h, c, mem1, m1, mem2, m2, rng=None):
        h, c, lstm_cache = lstm_step(self.decoder, x, h, c)
        ctx1, w1, a1 = soft_dot_attention(h, mem1, self.attn1_W, m1)
        ctx2, w2, a2 = soft_dot_attention(h, mem2, self.attn2_W, m2)
        cat = np.concatenate([h, ctx1, ctx2], axis=-1)
        o = np.tanh(linear(self.combine_W, self.combine_b, cat))
        do = dropout_mask(rng, o.shape, self.config.dropout)
        od = o if do is None else o * do
        logits = linear(self.out_W, self.out_b, od)
        return h, c, logits, (w1, w2), (lstm_cache, a1, a2, cat, o, do, od)

    # -- training objective ------------------------------------------------

    def loss(self, batch: Sequence[Instance], rng: np.random.Generator | None = None,
             backward: bool = True) -> float:
        """Mean over instances of the per-symbol cross-entropy, teacher forced.

        Gradients are accumulated into the parameters when ``backward`` is
        set. Passing ``rng`` enables standard dropout (training mode).
        """
        if not batch:
            raise ValueError("empty batch")
        if any(inst.target is None for inst in batch):
            raise ValueError("every instance needs a target")
        Hd = self.config.dec_hidden
        He2 = 2 * self.config.enc_hidden
        B = len(batch)
        mem1, m1, mem2, m2, s, enc_cache = self._encode(
            [i.source for i in batch], [i.candidates for i in batch], rng)
        y_in, _, lengths = _pad([i.target[:-1] for i in batch])
        y_out, y_mask, _ = _pad([i.target[1:] for i in batch])
        xd = embed(self.embedding, y_in)
        dd = dropout_mask(rng, xd.shape, self.config.dropout)
        xdd = xd if dd is None else xd * dd
        h, c = s[:, :Hd], s[:, Hd:]
        weight = y_mask / lengths[:, None] / B
        total = 0.0
        steps = []
        for t in range(y_in.shape[1]):
            h, c, logits, _, cache = self._decode_step(xdd[:, t], h, c, mem1, m1, mem2, m2, rng)
            losses, dlogits = softmax_xent(logits, y_out[:, t])
            total += float((losses * weight[:, t]).sum())
            steps.append((cache, dlogits * weight[:, t, None]))
        if not backward:
            return total

        dmem1 = np.zeros_like(mem1)
        dmem2 = np.zeros_like(mem2)
        dxd = np.zeros_like(xd)
        dh_next = np.zeros((B, Hd))
        dc_next = np.zeros((B, Hd))
        for t in range(len(steps) - 1, -1, -1):
            (lstm_cache, a1, a2, cat, o, do, od), dlogits = steps[t]
            dod = linear_backward(self.out_W, self.out_b, od, dlogits)
            dpre = (dod if do is None else dod * do) * (1.0 - o * o)
            dcat = linear_backward(self.combine_W, self.combine_b, cat, dpre)
            dh = dcat[:, :Hd] + dh_next
            dq1, dm1 = attention_backward(a1, dcat[:, Hd:Hd + He2])
            dq2, dm2 = attention_backward(a2, dcat[:, Hd + He2:])
            dmem1 += dm1
            dmem2 += dm2
            dx, dh_next, dc_next = lstm_step_backward(self.decoder, lstm_cache, dh + dq1 + dq2, dc_next)
            dxd[:, t] = dx
        embed_backward(self.embedding, y_in, dxd if dd is None else dxd * dd)
        self._encode_backward(enc_cache, mem1.shape, mem2.shape, dmem1, dmem2, dh_next, dc_next)
        return total

    # -- inference ---------------------------------------------------------

    def decode_batch(self, sources: Sequence[Sequence[int]], candidates: Sequence[Sequence[int]],
                     return_attention: bool = False):
        """Greedy decoding; argmax ties go to the lowest symbol id.

        Each row stops at EOS or after (form length + max_decode_extra)
        steps. Returns lemma strings, plus a per-step list of
        (weights1, weights2, active rows) when ``return_attention`` is set.
        """
        if len(sources) != len(candidates):
            raise ValueError("sources and candidates differ in length")
        if not sources:
            return ([], []) if return_attention else []
        Hd = self.config.dec_hidden
        B = len(sources)
        mem1, m1, mem2, m2, s, _ = self._encode(sources, candidates)
        limits = np.array([_form_length(src) + self.config.max_decode_extra for src in sources])
        h, c = s[:, :Hd], s[:, Hd:]
        prev = np.full(B, SOS, dtype=np.int64)
        done = np.zeros(B, dtype=bool)
        out: list[list[int]] = [[] for _ in range(B)]
        trace = []
        step = 0
        while True:
            active = ~done & (step < limits)
            if not active.any():
                break
            h, c, logits, (w1, w2), _ = self._decode_step(self.embedding.value[prev], h, c, mem1, m1, mem2, m2)
            nxt = logits.argmax(axis=-1)
            if return_attention:
                trace.append((w1, w2, active.copy()))
            for i in np.flatnonzero(active):
                if nxt[i] == EOS:
                    done[i] = True
                else:
                    out[i].append(int(nxt[i]))
            prev = nxt
            step += 1
        lemmas = ["".join(self.vocab.symbols[i] for i in ids if self.vocab.is_char(i)) for ids in out]
        return (lemmas, trace) if return_attention else lemmas


def _form_length(source) -> int:
    source = list(source)
    return source.index(SEP) if SEP in source else len(source)


def forward_loss(model: EnhancedLemmatizer, batch: Sequence[Instance]) -> float:
    """Evaluation-mode loss without touching gradients."""
    return model.loss(batch, rng=None, backward=False)


def greedy_decode(model: EnhancedLemmatizer, source: Sequence[int], candidates: Sequence[int]) -> str:
    return model.decode_batch([source], [candidates])[0]


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get("LEMMAFORGE_THREADS", "1")))
    except ValueError:
        return 1


def decode_instances(model: EnhancedLemmatizer, instances: Sequence[Instance], batch_size: int = 128,
                     threads: int | None = None) -> list[str]:
    """Decode in chunks; chunks may run in parallel, output order is kept."""
    chunks = [instances[i:i + batch_size] for i in range(0, len(instances), batch_size)]

    def run(chunk):
        return model.decode_batch([i.source for i in chunk], [i.candidates for i in chunk])

    threads = threads if threads is not None else _thread_count()
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(chunk) for chunk in chunks]
    return [lemma for chunk in results for lemma in chunk]


def predict_corpus(model: EnhancedLemmatizer, corpus: Corpus, provider: CandidateProvider | None = None,
                   batch_size: int = 128) -> Corpus:
    """Replace every lemma with the model's prediction, feeding candidates
    from ``provider`` (none when omitted)."""
    provider = provider if provider is not None else EmptyProvider()
    instances = [make_instance(tok, provider.get(tok.form, tok.upos), model.vocab, model.config, with_target=False)
                 for tok in corpus.tokens()]
    return corpus.with_lemmas(decode_instances(model, instances, batch_size))


# -- persistence -----------------------------------------------------------

MODEL_MAGIC = b"LEMMAFRG"
MODEL_VERSION = 1
_DIGEST = 32


class ModelFormatError(ValueError):
    pass


def dumps(model: EnhancedLemmatizer) -> bytes:
    header = json.dumps({"config": asdict(model.config), "vocab": model.vocab.symbols},
                        ensure_ascii=False).encode("utf-8")
    params = pack_params(model.state_dict())
    body = b"".join([MODEL_MAGIC, struct.pack("<HI", MODEL_VERSION, len(header)), header,
                     struct.pack("<Q", len(params)), params])
    return body + hashlib.sha256(body).digest()


def loads(data: bytes) -> EnhancedLemmatizer:
    if len(data) < len(MODEL_MAGIC) + 6 + 8 + _DIGEST or not data.startswith(MODEL_MAGIC):
        raise ModelFormatError("not a lemmatizer model file")
    body, digest = data[:-_DIGEST], data[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise ModelFormatError("checksum mismatch: model file is corrupted or truncated")
    pos = len(MODEL_MAGIC)
    version, header_len = struct.unpack_from("<HI", body, pos)
    if version != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model format version {version} (expected {MODEL_VERSION})")
    pos += 6
    header = json.loads(body[pos:pos + header_len].decode("utf-8"))
    pos += header_len
    (params_len,) = struct.unpack_from("<Q", body, pos)
    pos += 8
    if pos + params_len != len(body):
        raise ModelFormatError("parameter block length mismatch")
    try:
        state = unpack_params(body[pos:])
    except ParamFormatError as exc:
        raise ModelFormatError(str(exc)) from None
    model = EnhancedLemmatizer(Vocab(header["vocab"]), ModelConfig.from_dict(header["config"]))
    model.load_state_dict(state)
    return model


def save(model: EnhancedLemmatizer, path) -> None:
    atomic_write_bytes(path, dumps(model))


def load(path) -> EnhancedLemmatizer:
    with open(path, "rb") as f:
        return loads(f.read())
