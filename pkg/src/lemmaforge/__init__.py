"""Lemmatization with a dual-encoder seq2seq model that can copy characters
from external lemma candidates supplied at run time."""

__version__ = "0.1.0"
