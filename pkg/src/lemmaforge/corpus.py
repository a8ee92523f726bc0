"""Readers and writers for the on-disk formats: CoNLL-U, Unimorph, candidate
TSV, analysis TSV and word-frequency lists."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

logger = logging.getLogger(__name__)


class DataFormatError(ValueError):
    """Malformed input data. Carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def normalize_feats(feats: Iterable[str]) -> tuple[str, ...]:
    """Sort Key=Value features by key; reject duplicate keys."""
    items = []
    seen = set()
    for feat in feats:
        key, sep, value = feat.partition("=")
        if not sep or not key:
            raise DataFormatError(f"bad feature {feat!r}")
        if key in seen:
            raise DataFormatError(f"duplicate feature key {key!r}")
        seen.add(key)
        items.append(feat)
    return tuple(sorted(items, key=lambda f: f.partition("=")[0]))


@dataclass(frozen=True)
class Token:
    form: str
    upos: str
    feats: tuple[str, ...] = ()
    lemma: str = ""

    def __post_init__(self):
        if not self.form:
            raise ValueError("token form must be non-empty")
        object.__setattr__(self, "feats", normalize_feats(self.feats))

    def with_lemma(self, lemma: str) -> "Token":
        return Token(self.form, self.upos, self.feats, lemma)


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not self.tokens:
            raise ValueError("sentence must contain at least one token")

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


@dataclass(frozen=True)
class Corpus:
    sentences: tuple[Sentence, ...] = ()
    origin: str = ""

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))

    def __eq__(self, other):
        # origin is a label, not content
        if not isinstance(other, Corpus):
            return NotImplemented
        return self.sentences == other.sentences

    def __hash__(self):
        return hash(self.sentences)

    def tokens(self) -> list[Token]:
        return [tok for sent in self.sentences for tok in sent.tokens]

    def num_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)

    def forms(self) -> set[str]:
        return {tok.form for tok in self.tokens()}

    def with_lemmas(self, lemmas: Iterable[str]) -> "Corpus":
        """Copy of the corpus with lemmas replaced in token order."""
        it = iter(lemmas)
        sents = []
        for sent in self.sentences:
            sents.append(Sentence(tuple(tok.with_lemma(next(it)) for tok in sent.tokens)))
        if next(it, None) is not None:
            raise ValueError("more lemmas than tokens")
        return Corpus(tuple(sents), self.origin)


# -- CoNLL-U ---------------------------------------------------------------

def _parse_token_line(line: str, lineno: int) -> Token | None:
    cols = line.split("\t")
    if len(cols) != 10:
        raise DataFormatError(f"expected 10 tab-separated columns, found {len(cols)}", lineno)
    tok_id, form, lemma, upos, _xpos, feats = cols[:6]
    if "-" in tok_id or "." in tok_id:
        return None
    if not form:
        raise DataFormatError("empty FORM column", lineno)
    if lemma == "_" and form != "_":
        lemma = ""
    feat_list = [] if feats in ("_", "") else feats.split("|")
    try:
        return Token(form=form, upos=upos, feats=tuple(feat_list), lemma=lemma)
    except (DataFormatError, ValueError) as exc:
        raise DataFormatError(str(exc), lineno) from None


def parse_conllu(text: str, origin: str = "") -> Corpus:
    """Parse CoNLL-U text, keeping FORM, UPOS, FEATS and LEMMA.

    Multiword-token ranges and empty nodes are skipped, comments ignored.
    """
    sentences = []
    current: list[Token] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            if current:
                sentences.append(Sentence(tuple(current)))
                current = []
            continue
        if line.startswith("#"):
            continue
        tok = _parse_token_line(line, lineno)
        if tok is not None:
            current.append(tok)
    if current:
        sentences.append(Sentence(tuple(current)))
    return Corpus(tuple(sentences), origin)


def write_conllu(corpus: Corpus) -> str:
    lines = []
    for sent in corpus.sentences:
        for i, tok in enumerate(sent.tokens, start=1):
            feats = "|".join(tok.feats) if tok.feats else "_"
            lemma = tok.lemma if tok.lemma else "_"
            upos = tok.upos if tok.upos else "_"
            lines.append("\t".join([str(i), tok.form, lemma, upos, "_", feats, "_", "_", "_", "_"]))
        lines.append("")
    return "".join(line + "\n" for line in lines)


# -- Unimorph --------------------------------------------------------------

class UnimorphEntry(NamedTuple):
    lemma: str
    form: str
    features: str


def _has_space(s: str) -> bool:
    return any(ch.isspace() for ch in s)


def parse_unimorph(text: str) -> list[UnimorphEntry]:
    """Parse lemma<TAB>form<TAB>features lines.

    Entries whose form or lemma consists of several whitespace-separated
    tokens are dropped. Short lines are skipped and counted.
    """
    entries = []
    short = 0
    for line in text.splitlines():
        line = line.rstrip("\r")
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) < 3:
            short += 1
            continue
        lemma, form, features = cols[0].strip(), cols[1].strip(), cols[2].strip()
        if not lemma or not form or _has_space(lemma) or _has_space(form):
            continue
        entries.append(UnimorphEntry(lemma, form, features))
    if short:
        logger.warning("unimorph: skipped %d line(s) with fewer than 3 fields", short)
    return entries


# -- candidate and analysis TSV --------------------------------------------

class CandidateEntry(NamedTuple):
    form: str
    upos: str | None
    lemmas: tuple[str, ...]


def split_lemma_field(field: str) -> list[str]:
    if field == ",":
        return [","]
    out = []
    for lemma in field.split(","):
        lemma = lemma.strip()
        if lemma and lemma not in out:
            out.append(lemma)
    return out


def parse_candidate_tsv(text: str) -> list[CandidateEntry]:
    """Parse ``form<TAB>[pos<TAB>]lemma1,lemma2,...`` lines."""
    entries = []
    skipped = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.rstrip("\r")
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) == 2:
            form, pos, field_ = cols[0], None, cols[1]
        elif len(cols) == 3:
            form, pos, field_ = cols[0], cols[1] or None, cols[2]
        else:
            raise DataFormatError(f"expected 2 or 3 columns, found {len(cols)}", lineno)
        lemmas = split_lemma_field(field_)
        if not form or not lemmas:
            skipped += 1
            continue
        entries.append(CandidateEntry(form, pos, tuple(lemmas)))
    if skipped:
        logger.warning("candidate tsv: skipped %d line(s) with empty lemma field", skipped)
    return entries


class Analysis(NamedTuple):
    lemma: str
    upos: str
    feats: tuple[str, ...]


def parse_analysis_tsv(text: str) -> dict[str, list[Analysis]]:
    """Parse ``word<TAB>lemma<TAB>upos<TAB>feats`` rows, one analysis per row.

    A word may span several rows. Returns analyses grouped by word in file
    order.
    """
    out: dict[str, list[Analysis]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.rstrip("\r")
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 4:
            raise DataFormatError(f"expected 4 columns, found {len(cols)}", lineno)
        word, lemma, upos, feats = cols
        if not word or not lemma:
            raise DataFormatError("empty word or lemma", lineno)
        try:
            fs = normalize_feats([] if feats in ("", "_") else feats.split("|"))
        except DataFormatError as exc:
            raise DataFormatError(str(exc), lineno) from None
        out.setdefault(word, []).append(Analysis(lemma, upos or "X", fs))
    return out


# -- frequency lists -------------------------------------------------------

@dataclass(frozen=True)
class FreqList:
    entries: tuple[tuple[str, int], ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def words(self) -> list[str]:
        return [w for w, _ in self.entries]


def _rank(counts: dict[str, int]) -> FreqList:
    # dicts keep first-occurrence order and sorted() is stable
    return FreqList(tuple(sorted(counts.items(), key=lambda kv: -kv[1])))


def parse_freq_list(text: str, raw: bool = False) -> FreqList:
    """Build a frequency list from ``word<TAB>count`` lines, or from raw
    whitespace-separated text when ``raw`` is set."""
    if raw:
        return _rank(dict(Counter(text.split())))
    counts: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 2:
            raise DataFormatError(f"expected word<TAB>count, found {len(cols)} column(s)", lineno)
        word, count_s = cols[0], cols[1].strip()
        try:
            count = int(count_s)
        except ValueError:
            raise DataFormatError(f"non-numeric count {count_s!r}", lineno) from None
        if count <= 0:
            raise DataFormatError(f"count must be positive, got {count}", lineno)
        counts[word] = counts.get(word, 0) + count
    return _rank(counts)


def read_text(path) -> str:
    with open(path, encoding="utf-8") as f:
        return f.read()
