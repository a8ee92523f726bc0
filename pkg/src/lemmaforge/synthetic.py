"""Small synthetic languages for sanity runs and behavioural experiments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, Sentence, Token
from .lexicon import CandidateFileProvider

CONSONANTS = "bdgklmnprstv"
VOWELS = "aeiou"

# (upos, lemma suffix, [(form suffix, feats)])
REGULAR_RULES = (
    ("NOUN", "", [("", ("Number=Sing",)), ("s", ("Number=Plur",))]),
    ("VERB", "", [("ed", ("Tense=Past",)), ("ing", ("VerbForm=Ger",)), ("s", ("Number=Sing", "Person=3"))]),
    ("ADJ", "", [("er", ("Degree=Cmp",)), ("est", ("Degree=Sup",))]),
)


def random_stems(rng: np.random.Generator, n: int, min_syll: int = 1, max_syll: int = 2) -> list[str]:
    stems: list[str] = []
    seen = set()
    while len(stems) < n:
        k = int(rng.integers(min_syll, max_syll + 1))
        stem = "".join(CONSONANTS[rng.integers(len(CONSONANTS))] + VOWELS[rng.integers(len(VOWELS))]
                       for _ in range(k)) + CONSONANTS[rng.integers(len(CONSONANTS))]
        if stem not in seen:
            seen.add(stem)
            stems.append(stem)
    return stems


def _as_corpus(tokens, origin) -> Corpus:
    return Corpus(tuple(Sentence((tok,)) for tok in tokens), origin)


def regular_corpus(n_pairs: int = 200, seed: int = 0) -> Corpus:
    """Inflected forms generated by suffix rules, one token per sentence."""
    rng = np.random.default_rng(seed)
    tokens = []
    stems = iter(random_stems(rng, n_pairs))
    while len(tokens) < n_pairs:
        upos, lemma_suffix, forms = REGULAR_RULES[len(tokens) % len(REGULAR_RULES)]
        stem = next(stems)
        for suffix, feats in forms:
            tokens.append(Token(stem + suffix, upos, feats, stem + lemma_suffix))
    return _as_corpus(tokens[:n_pairs], "synthetic-regular")


# Two noun classes whose oblique forms coincide: the lemma ending cannot be
# recovered from the surface form or its features.
CLASS_ENDINGS = ("a", "e")
OBLIQUE = (("i", ("Case=Gen",)), ("u", ("Case=Dat",)), ("om", ("Case=Ins",)))


@dataclass
class CollidingLanguage:
    train: Corpus
    dev: Corpus
    test: Corpus
    provider: CandidateFileProvider
    train_forms: set[str]


def _paradigm(stem: str, cls: int) -> list[Token]:
    lemma = stem + CLASS_ENDINGS[cls]
    toks = [Token(lemma, "NOUN", ("Case=Nom",), lemma)]
    toks += [Token(stem + suf, "NOUN", feats, lemma) for suf, feats in OBLIQUE]
    return toks


def colliding_language(n_train_stems: int = 100, n_test_stems: int = 60, majority: float = 0.75,
                       distractor_rate: float = 0.5, nominative_in_test: bool = True,
                       seed: int = 0) -> CollidingLanguage:
    """Two colliding paradigms plus an oracle candidate table.

    Each stem is assigned class 0 with probability ``majority``. The oracle
    table lists the true lemma for every form, joined (in random order) by a
    distractor lemma of another stem with probability ``distractor_rate``.
    Dev and test stems never occur in training; ``nominative_in_test=False``
    keeps only the ambiguous oblique forms in dev and test.
    """
    rng = np.random.default_rng(seed)
    stems = random_stems(rng, n_train_stems + 2 * n_test_stems, min_syll=1, max_syll=2)
    classes = (rng.random(len(stems)) >= majority).astype(int)
    train_stems = range(n_train_stems)
    dev_stems = range(n_train_stems, n_train_stems + n_test_stems)
    test_stems = range(n_train_stems + n_test_stems, len(stems))

    def tokens(idx, nominative=True):
        return [tok for i in idx for tok in _paradigm(stems[i], classes[i])
                if nominative or tok.form != tok.lemma]

    train = tokens(train_stems)
    dev = tokens(dev_stems, nominative_in_test)
    test = tokens(test_stems, nominative_in_test)
    lemmas = [s + CLASS_ENDINGS[c] for s, c in zip(stems, classes)]
    entries = []
    for tok in train + dev + test:
        cands = [tok.lemma]
        if rng.random() < distractor_rate:
            other = lemmas[int(rng.integers(len(lemmas)))]
            if other != tok.lemma:
                cands.insert(int(rng.integers(2)), other)
        entries.append((tok.form, tok.upos, tuple(cands)))
    provider = CandidateFileProvider(entries)
    return CollidingLanguage(
        _as_corpus(train, "colliding-train"),
        _as_corpus(dev, "colliding-dev"),
        _as_corpus(test, "colliding-test"),
        provider,
        {tok.form for tok in train},
    )
