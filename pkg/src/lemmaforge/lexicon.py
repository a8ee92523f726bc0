"""Lemma-candidate sources.

A provider answers ``get(form, upos)`` with an ordered, duplicate-free list of
lemma candidates. Providers are immutable once built.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .corpus import (
    Corpus,
    DataFormatError,
    parse_candidate_tsv,
    parse_unimorph,
    read_text,
)

# Apertium-style markup: <tag> spans plus these single characters
APERTIUM_SYMBOLS = ("#", "+", "~")
_TAG_SPAN = re.compile(r"<[^<>]*>")


def dedup(items: Iterable[str]) -> list[str]:
    return list(dict.fromkeys(items))


def normalize_candidates(raw: Sequence[str], symbols: Sequence[str] = APERTIUM_SYMBOLS,
                         strip_tags: bool = True) -> list[str]:
    """Strip annotation markup, drop empties, dedup keeping first."""
    out = []
    for cand in raw:
        if strip_tags:
            cand = _TAG_SPAN.sub("", cand)
        for sym in symbols:
            cand = cand.replace(sym, "")
        cand = cand.strip()
        if cand:
            out.append(cand)
    return dedup(out)


# -- training lexicon ------------------------------------------------------

@dataclass
class TrainingLexicon:
    """Two lookup tables built from a training corpus: (form, upos) -> lemmas
    and form -> lemmas, both in first-occurrence order."""

    by_form_pos: dict[tuple[str, str], list[str]] = field(default_factory=dict)
    by_form: dict[str, list[str]] = field(default_factory=dict)

    def add(self, form: str, upos: str, lemma: str) -> None:
        lemmas = self.by_form_pos.setdefault((form, upos), [])
        if lemma not in lemmas:
            lemmas.append(lemma)
        lemmas = self.by_form.setdefault(form, [])
        if lemma not in lemmas:
            lemmas.append(lemma)

    def to_tsv(self) -> str:
        """Sorted dump: ``form<TAB>upos<TAB>lemma...``; ``*`` rows hold the
        form-only table."""
        rows = [(form, upos, lemmas) for (form, upos), lemmas in self.by_form_pos.items()]
        rows += [(form, "*", lemmas) for form, lemmas in self.by_form.items()]
        rows.sort(key=lambda r: (r[0], r[1]))
        return "".join("\t".join([form, upos, *lemmas]) + "\n" for form, upos, lemmas in rows)

    @classmethod
    def from_tsv(cls, text: str) -> "TrainingLexicon":
        lex = cls()
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            cols = line.rstrip("\r").split("\t")
            if len(cols) < 3:
                raise DataFormatError("expected form<TAB>upos<TAB>lemma...", lineno)
            form, upos, lemmas = cols[0], cols[1], dedup(c for c in cols[2:] if c)
            if upos == "*":
                lex.by_form[form] = lemmas
            else:
                lex.by_form_pos[(form, upos)] = lemmas
        for (form, _), lemmas in lex.by_form_pos.items():
            merged = lex.by_form.setdefault(form, [])
            merged.extend(lem for lem in lemmas if lem not in merged)
        return lex


def build_training_lexicon(corpus: Corpus) -> TrainingLexicon:
    lex = TrainingLexicon()
    for tok in corpus.tokens():
        if tok.lemma:
            lex.add(tok.form, tok.upos, tok.lemma)
    return lex


def lookup_cascade(lex: TrainingLexicon, form: str, upos: str) -> list[str]:
    """(form, upos) table first, then the form-only table."""
    hit = lex.by_form_pos.get((form, upos))
    if hit:
        return list(hit)
    return list(lex.by_form.get(form, ()))


# -- providers -------------------------------------------------------------

class CandidateProvider:
    kind = "abstract"

    def get(self, form: str, upos: str) -> list[str]:
        raise NotImplementedError

    def describe(self) -> str:
        return self.kind


class EmptyProvider(CandidateProvider):
    """Never returns candidates (the Default configuration)."""

    kind = "none"

    def get(self, form, upos):
        return []


class TrainingLexiconProvider(CandidateProvider):
    kind = "training-lexicon"

    def __init__(self, lexicon: TrainingLexicon):
        self.lexicon = lexicon

    def get(self, form, upos):
        return lookup_cascade(self.lexicon, form, upos)


class UnimorphProvider(CandidateProvider):
    """Exact surface-form lookup in a Unimorph table; features are ignored."""

    kind = "unimorph-table"

    def __init__(self, entries, symbols: Sequence[str] = ()):
        self.symbols = tuple(symbols)
        table: dict[str, list[str]] = {}
        for lemma, form, _feats in entries:
            table.setdefault(form, []).append(lemma)
        self.table = {form: normalize_candidates(lemmas, self.symbols, strip_tags=False)
                      for form, lemmas in table.items()}

    @classmethod
    def from_file(cls, path) -> "UnimorphProvider":
        return cls(parse_unimorph(read_text(path)))

    def get(self, form, upos):
        return list(self.table.get(form, ()))


class CandidateFileProvider(CandidateProvider):
    """Precompiled candidates, e.g. flattened analyser output.

    Rows without a POS column match any POS; rows with one match only that
    POS. Matching rows are concatenated in file order.
    """

    kind = "candidate-file"

    def __init__(self, entries, symbols: Sequence[str] = APERTIUM_SYMBOLS, strip_tags: bool = True):
        self.symbols = tuple(symbols)
        self.strip_tags = strip_tags
        self.table: dict[str, list[tuple[str | None, list[str]]]] = {}
        for form, upos, lemmas in entries:
            self.table.setdefault(form, []).append((upos, list(lemmas)))

    @classmethod
    def from_file(cls, path, **kwargs) -> "CandidateFileProvider":
        return cls(parse_candidate_tsv(read_text(path)), **kwargs)

    def get(self, form, upos):
        raw = []
        for pos, lemmas in self.table.get(form, ()):
            if pos is None or pos == upos:
                raw.extend(lemmas)
        return normalize_candidates(raw, self.symbols, self.strip_tags)


class CompositeProvider(CandidateProvider):
    kind = "composite"

    def __init__(self, children: Sequence[CandidateProvider]):
        self.children = list(children)

    def get(self, form, upos):
        out = []
        for child in self.children:
            out.extend(child.get(form, upos))
        return dedup(out)

    def describe(self):
        return ",".join(c.describe() for c in self.children)


def get_candidates(provider: CandidateProvider, form: str, upos: str) -> list[str]:
    return provider.get(form, upos)


def parse_provider_spec(spec: str, train: Corpus | None = None) -> CandidateProvider:
    """Build a provider from ``none``, ``lexicon``, ``lexicon:PATH``,
    ``tsv:PATH`` or ``unimorph:PATH``; comma-separated specs compose in order."""
    parts = [p.strip() for p in spec.split(",") if p.strip()]
    if not parts:
        raise ValueError("empty provider spec")
    providers = []
    for part in parts:
        kind, _, arg = part.partition(":")
        if kind == "none":
            providers.append(EmptyProvider())
        elif kind == "lexicon":
            if arg:
                lex = TrainingLexicon.from_tsv(read_text(arg))
            elif train is not None:
                lex = build_training_lexicon(train)
            else:
                raise ValueError("provider 'lexicon' needs a training corpus or 'lexicon:PATH'")
            providers.append(TrainingLexiconProvider(lex))
        elif kind == "tsv" and arg:
            providers.append(CandidateFileProvider.from_file(arg))
        elif kind == "unimorph" and arg:
            providers.append(UnimorphProvider.from_file(arg))
        else:
            raise ValueError(f"unknown provider spec {part!r}")
    if len(providers) == 1:
        return providers[0]
    return CompositeProvider(providers)


# -- unique lexicon (one lemma per key) ------------------------------------

UniqueLexicon = dict  # (form, upos) -> lemma


def extend_unique(base: dict[tuple[str, str], str],
                  entries: Iterable[tuple[str, str, str]]) -> dict[tuple[str, str], str]:
    """Add entries without ever overwriting; the first lemma seen for a key wins."""
    out = dict(base)
    for form, upos, lemma in entries:
        out.setdefault((form, upos), lemma)
    return out


def candidate_stats(corpus: Corpus, provider: CandidateProvider) -> tuple[float, float, float]:
    """Mean candidates per token, mean over tokens with at least one
    candidate, and the covered fraction of tokens."""
    counts = [len(provider.get(tok.form, tok.upos)) for tok in corpus.tokens()]
    if not counts:
        return 0.0, 0.0, 0.0
    covered = [n for n in counts if n > 0]
    mean_all = sum(counts) / len(counts)
    mean_covered = sum(covered) / len(covered) if covered else 0.0
    return mean_all, mean_covered, len(covered) / len(counts)
