"""Accuracy metrics, evaluation reports and the lexicon-first cascade baseline."""

from __future__ import annotations

import unicodedata
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Sequence

from .corpus import Corpus
from .lexicon import CandidateProvider, extend_unique
from .model import EMPTY, EnhancedLemmatizer, Vocab, encode_source


class AlignmentError(ValueError):
    """Predicted and gold corpora do not have the same shape."""


def _nfc(s: str) -> str:
    return unicodedata.normalize("NFC", s)


def _aligned_pairs(pred: Corpus, gold: Corpus):
    if len(pred.sentences) != len(gold.sentences):
        raise AlignmentError(f"sentence counts differ: {len(pred.sentences)} vs {len(gold.sentences)}")
    for k, (ps, gs) in enumerate(zip(pred.sentences, gold.sentences), start=1):
        if len(ps) != len(gs):
            raise AlignmentError(f"sentence {k}: token counts differ ({len(ps)} vs {len(gs)})")
        yield from zip(ps.tokens, gs.tokens)


def accuracy(pred: Corpus, gold: Corpus) -> float:
    """Fraction of tokens whose lemma matches exactly (after NFC)."""
    pairs = list(_aligned_pairs(pred, gold))
    if not pairs:
        return 0.0
    return sum(_nfc(p.lemma) == _nfc(g.lemma) for p, g in pairs) / len(pairs)


def oov_accuracy(pred: Corpus, gold: Corpus, train_forms: set[str]) -> tuple[float, float]:
    """Accuracy on tokens whose form never occurs in training, and the OOV
    rate. Without OOV tokens the accuracy is reported as 1.0."""
    report = evaluate(pred, gold, train_forms)
    return report.oov_accuracy, report.oov_rate


@dataclass
class EvalReport:
    total: int = 0
    correct: int = 0
    oov_total: int = 0
    oov_correct: int = 0
    log: list[tuple[str, str, str, str, bool, str]] = field(default_factory=list, repr=False)

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0

    @property
    def oov_undefined(self) -> bool:
        return self.oov_total == 0

    @property
    def oov_accuracy(self) -> float:
        # no OOV tokens: 1.0 by convention, flagged by oov_undefined
        return self.oov_correct / self.oov_total if self.oov_total else 1.0

    @property
    def oov_rate(self) -> float:
        return self.oov_total / self.total if self.total else 0.0

    def format(self) -> str:
        oov = f"{self.oov_accuracy:.4f}" + (" (undefined: no OOV tokens)" if self.oov_undefined else "")
        return "\n".join([
            f"accuracy\t{self.accuracy:.4f}\t({self.correct}/{self.total})",
            f"oov_accuracy\t{oov}\t({self.oov_correct}/{self.oov_total})",
            f"oov_rate\t{self.oov_rate:.4f}",
        ])

    def to_tsv(self) -> str:
        header = "total\tcorrect\taccuracy\toov_total\toov_correct\toov_accuracy\toov_rate\toov_undefined"
        row = (f"{self.total}\t{self.correct}\t{self.accuracy:.6f}\t{self.oov_total}\t{self.oov_correct}\t"
               f"{self.oov_accuracy:.6f}\t{self.oov_rate:.6f}\t{int(self.oov_undefined)}")
        return header + "\n" + row + "\n"

    def log_tsv(self) -> str:
        rows = ["form\tupos\tgold\tpred\toov\tcandidates"]
        rows += ["\t".join([f, u, g, p, str(int(o)), c]) for f, u, g, p, o, c in self.log]
        return "\n".join(rows) + "\n"


def evaluate(pred: Corpus, gold: Corpus, train_forms: set[str] | None = None,
             provider: CandidateProvider | None = None, keep_log: bool = False) -> EvalReport:
    """All-words and OOV accuracy. OOV is keyed on the surface form only."""
    train_forms = train_forms if train_forms is not None else set()
    report = EvalReport()
    for p, g in _aligned_pairs(pred, gold):
        ok = _nfc(p.lemma) == _nfc(g.lemma)
        oov = g.form not in train_forms
        report.total += 1
        report.correct += ok
        if oov:
            report.oov_total += 1
            report.oov_correct += ok
        if keep_log:
            cands = ",".join(provider.get(g.form, g.upos)) if provider is not None else ""
            report.log.append((g.form, g.upos, g.lemma, p.lemma, oov, cands))
    return report


# -- comparison table ------------------------------------------------------

@dataclass
class Comparison:
    systems: list[str]
    rows: list[tuple[str, list[float]]]

    def to_tsv(self) -> str:
        lines = ["metric\t" + "\t".join(self.systems)]
        lines += [label + "\t" + "\t".join(f"{v:.2f}" for v in values) for label, values in self.rows]
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        table = [["metric", *self.systems]]
        table += [[label, *(f"{v:.2f}" for v in values)] for label, values in self.rows]
        widths = [max(len(row[i]) for row in table) for i in range(len(table[0]))]
        out = []
        for row in table:
            out.append("  ".join([row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]))
        return "\n".join(out) + "\n"


def compare_reports(reports: Sequence[tuple[str, EvalReport]]) -> Comparison:
    """Percentages per system plus differences against the first system."""
    if not reports:
        raise ValueError("need at least one report")
    names = [name for name, _ in reports]
    acc = [100.0 * r.accuracy for _, r in reports]
    oov = [100.0 * r.oov_accuracy for _, r in reports]
    rate = [100.0 * r.oov_rate for _, r in reports]
    rows = [
        ("all_words", acc),
        ("oov", oov),
        ("oov_pct", rate),
        ("diff_all_words", [a - acc[0] for a in acc]),
        ("diff_oov", [o - oov[0] for o in oov]),
    ]
    return Comparison(names, rows)


# -- lexicon-first cascade -------------------------------------------------

IDENTITY = "identity"
LOWER = "lower"


@dataclass
class CaseHeuristic:
    """Per-POS rule deciding whether a novel word is its own lemma, its
    lowercased form is, or neither (abstain).

    Fitted on training types: a POS whose types mostly have lemma == form
    maps to identity; one where lemma == lowercase(form) holds for most of
    them maps to lowercase.
    """

    decisions: dict[str, str] = field(default_factory=dict)
    threshold: float = 0.5

    @classmethod
    def fit(cls, train: Corpus, threshold: float = 0.5) -> "CaseHeuristic":
        types = {(t.form, t.upos, t.lemma) for t in train.tokens() if t.lemma}
        total: Counter = Counter()
        same: Counter = Counter()
        lowered: Counter = Counter()
        for form, upos, lemma in types:
            total[upos] += 1
            if lemma == form:
                same[upos] += 1
            elif lemma == form.lower():
                lowered[upos] += 1
        decisions = {}
        for upos, n in total.items():
            if same[upos] / n >= threshold:
                decisions[upos] = IDENTITY
            elif (same[upos] + lowered[upos]) / n >= threshold and lowered[upos] > 0:
                decisions[upos] = LOWER
        return cls(decisions, threshold)

    def apply(self, form: str, upos: str) -> str | None:
        decision = self.decisions.get(upos)
        if decision == IDENTITY:
            return form
        if decision == LOWER:
            return form.lower()
        return None


def unique_lexicon_from(corpus: Corpus, base: dict | None = None) -> dict[tuple[str, str], str]:
    return extend_unique(base or {}, ((t.form, t.upos, t.lemma) for t in corpus.tokens() if t.lemma))


def cascade_predict(unique_lex: dict[tuple[str, str], str], fallback: EnhancedLemmatizer, corpus: Corpus,
                    heuristic: CaseHeuristic | None = None) -> Corpus:
    """Lexicon hit first, then the case heuristic, then the decoder with an
    empty candidate encoder."""
    heuristic = heuristic if heuristic is not None else CaseHeuristic()
    tokens = corpus.tokens()
    lemmas: list[str | None] = [None] * len(tokens)
    pending = []
    for k, tok in enumerate(tokens):
        hit = unique_lex.get((tok.form, tok.upos))
        if hit is not None:
            lemmas[k] = hit
            continue
        guess = heuristic.apply(tok.form, tok.upos)
        if guess is not None:
            lemmas[k] = guess
        else:
            pending.append(k)
    if pending:
        vocab: Vocab = fallback.vocab
        sources = [vocab.ids(encode_source(tokens[k], fallback.config)) for k in pending]
        decoded = fallback.decode_batch(sources, [(EMPTY,)] * len(pending))
        for k, lemma in zip(pending, decoded):
            lemmas[k] = lemma
    return corpus.with_lemmas(lemmas)


def per_pos_accuracy(pred: Corpus, gold: Corpus) -> dict[str, float]:
    hits: dict[str, list[int]] = defaultdict(lambda: [0, 0])
    for p, g in _aligned_pairs(pred, gold):
        hits[g.upos][0] += _nfc(p.lemma) == _nfc(g.lemma)
        hits[g.upos][1] += 1
    return {upos: c / n for upos, (c, n) in sorted(hits.items())}
