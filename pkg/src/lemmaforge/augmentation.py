"""Append frequent, unambiguously analysed unseen words to a training corpus."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Protocol

from .corpus import Analysis, Corpus, FreqList, Sentence, Token
from .lexicon import CandidateProvider


class AnalysisSource(Protocol):
    def analyses(self, word: str) -> list[Analysis]: ...


class AnalysisTable:
    """Analyses read from an analysis TSV (word, lemma, upos, feats)."""

    def __init__(self, table: dict[str, list[Analysis]]):
        self.table = table

    def analyses(self, word):
        return list(self.table.get(word, ()))


class LemmaOnlyAnalyses:
    """Adapts a candidate provider: every candidate lemma becomes an analysis
    with the placeholder tag ``X`` and no features."""

    def __init__(self, provider: CandidateProvider, upos: str = "X"):
        self.provider = provider
        self.upos = upos

    def analyses(self, word):
        return [Analysis(lemma, self.upos, ()) for lemma in self.provider.get(word, "")]


@dataclass(frozen=True)
class AugmentConfig:
    k: int = 8000
    lemma_only: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")


class Selection(NamedTuple):
    rank: int
    word: str
    lemma: str
    reason: str  # empty when selected


SKIP_IN_TRAIN = "in-train"
SKIP_NO_ANALYSIS = "no-analysis"
SKIP_AMBIGUOUS = "ambiguous"


def _distinct(analyses: list[Analysis], lemma_only: bool) -> list[Analysis]:
    seen = {}
    for a in analyses:
        key = a.lemma if lemma_only else a
        seen.setdefault(key, a)
    return list(seen.values())


def augment(freq: FreqList, train: Corpus, source: AnalysisSource,
            cfg: AugmentConfig = AugmentConfig()) -> tuple[Corpus, list[Selection]]:
    """Walk the frequency list in rank order and append up to ``cfg.k``
    words that are absent from ``train`` and have exactly one analysis.

    Selected words become single-token sentences after the original ones.
    The log records every visited word; ``reason`` is empty for selections.
    """
    train_forms = train.forms()
    log: list[Selection] = []
    added: list[Sentence] = []
    for rank, (word, _count) in enumerate(freq.entries, start=1):
        if len(added) >= cfg.k:
            break
        if word in train_forms:
            log.append(Selection(rank, word, "", SKIP_IN_TRAIN))
            continue
        found = _distinct(source.analyses(word), cfg.lemma_only)
        if not found:
            log.append(Selection(rank, word, "", SKIP_NO_ANALYSIS))
            continue
        if len(found) > 1:
            log.append(Selection(rank, word, ",".join(a.lemma for a in found), SKIP_AMBIGUOUS))
            continue
        analysis = found[0]
        added.append(Sentence((Token(word, analysis.upos, analysis.feats, analysis.lemma),)))
        train_forms.add(word)
        log.append(Selection(rank, word, analysis.lemma, ""))
    return Corpus(train.sentences + tuple(added), train.origin), log


def selected_words(log: list[Selection]) -> list[str]:
    return [s.word for s in log if not s.reason]


def selection_log_tsv(log: list[Selection]) -> str:
    rows = ["rank\tword\tlemma\treason"]
    rows += [f"{s.rank}\t{s.word}\t{s.lemma}\t{s.reason or 'selected'}" for s in log]
    return "\n".join(rows) + "\n"
