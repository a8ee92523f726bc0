import logging

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lemmaforge.corpus import (
    Corpus,
    DataFormatError,
    FreqList,
    Sentence,
    Token,
    parse_analysis_tsv,
    parse_candidate_tsv,
    parse_conllu,
    parse_freq_list,
    parse_unimorph,
    write_conllu,
)

DOGS = "1\tdogs\tdog\tNOUN\t_\tNumber=Plur\t0\troot\t_\t_\n"


class TestConllu:
    def test_single_token(self):
        corpus = parse_conllu(DOGS + "\n")
        assert len(corpus.sentences) == 1
        assert corpus.sentences[0].tokens[0] == Token("dogs", "NOUN", ("Number=Plur",), "dog")

    def test_empty_feats(self):
        tok = parse_conllu("1\tis\tbe\tAUX\t_\t_\t_\t_\t_\t_\n").tokens()[0]
        assert tok.feats == ()

    def test_empty_input(self):
        assert parse_conllu("") == Corpus()
        assert write_conllu(Corpus()) == ""

    def test_skips_ranges_empty_nodes_and_comments(self):
        text = (
            "# sent_id = 1\n"
            "1-2\tdella\t_\t_\t_\t_\t_\t_\t_\t_\n"
            "1\tdi\tdi\tADP\t_\t_\t_\t_\t_\t_\n"
            "2\tla\til\tDET\t_\tGender=Fem\t_\t_\t_\t_\n"
            "2.1\tx\tx\tX\t_\t_\t_\t_\t_\t_\n"
            "\n"
            "1\tcasa\tcasa\tNOUN\t_\t_\t_\t_\t_\t_\n"
        )
        corpus = parse_conllu(text)
        assert [len(s) for s in corpus.sentences] == [2, 1]
        assert [t.form for t in corpus.tokens()] == ["di", "la", "casa"]

    def test_bad_column_count_reports_line(self):
        with pytest.raises(DataFormatError) as err:
            parse_conllu(DOGS + "2\tbroken\tline\n")
        assert err.value.line == 2

    def test_duplicate_feature_key(self):
        with pytest.raises(DataFormatError):
            parse_conllu("1\ta\ta\tX\t_\tCase=Nom|Case=Acc\t_\t_\t_\t_\n")

    def test_feats_normalized_by_key(self):
        a = parse_conllu("1\ta\ta\tX\t_\tNumber=Sing|Case=Nom\t_\t_\t_\t_\n").tokens()[0]
        assert a.feats == ("Case=Nom", "Number=Sing")

    def test_write_one_token(self):
        text = write_conllu(Corpus((Sentence((Token("dogs", "NOUN", ("Number=Plur",), "dog"),)),)))
        lines = text.split("\n")
        assert lines[0].split("\t") == ["1", "dogs", "dog", "NOUN", "_", "Number=Plur", "_", "_", "_", "_"]
        assert text.endswith("\n\n")
        assert text.count("\n") == 2

    def test_case_preserved(self):
        tok = parse_conllu("1\tAntworten\tAntwort\tNOUN\t_\t_\t_\t_\t_\t_\n").tokens()[0]
        assert tok.form == "Antworten" and tok.lemma == "Antwort"

    def test_underscore_lemma_means_empty_unless_form_is_underscore(self):
        text = "1\tfoo\t_\tX\t_\t_\t_\t_\t_\t_\n2\t_\t_\tPUNCT\t_\t_\t_\t_\t_\t_\n"
        toks = parse_conllu(text).tokens()
        assert toks[0].lemma == "" and toks[1].lemma == "_"

    def test_round_trip_three_sentences(self):
        corpus = Corpus((
            Sentence((Token("Die", "DET", ("Case=Nom", "Definite=Def"), "der"), Token("Hunde", "NOUN", ("Number=Plur",), "Hund"))),
            Sentence((Token("liefen", "VERB", (), "laufen"),)),
            Sentence((Token("чотирьох", "NUM", ("Case=Gen",), "чотири"), Token(".", "PUNCT", (), "."))),
        ))
        assert parse_conllu(write_conllu(corpus)) == corpus


_chars = st.characters(blacklist_categories=("Cs", "Cc", "Zs", "Zl", "Zp"), blacklist_characters="\t\n\r_|=")
_word = st.text(_chars, min_size=1, max_size=6)
_feats = st.dictionaries(st.sampled_from(["Case", "Number", "Tense", "Person"]),
                         st.sampled_from(["A", "B", "Plur"]), max_size=3).map(
    lambda d: tuple(f"{k}={v}" for k, v in d.items()))
_token = st.builds(Token, _word, st.sampled_from(["NOUN", "VERB", "X"]), _feats, _word)
_corpus = st.lists(st.lists(_token, min_size=1, max_size=4).map(lambda ts: Sentence(tuple(ts))),
                   max_size=4).map(lambda ss: Corpus(tuple(ss)))


@settings(max_examples=150, deadline=None)
@given(_corpus)
def test_conllu_round_trip_property(corpus):
    assert parse_conllu(write_conllu(corpus)) == corpus


@settings(max_examples=100, deadline=None)
@given(_corpus)
def test_parse_write_parse_identity(corpus):
    once = parse_conllu(write_conllu(corpus))
    assert parse_conllu(write_conllu(once)) == once


class TestUnimorph:
    def test_single_entry(self):
        assert parse_unimorph("run\tran\tV;PST\n") == [("run", "ran", "V;PST")]

    def test_multi_token_discarded(self):
        assert parse_unimorph("give up\tgave up\tV;PST\n") == []

    def test_count(self):
        text = "run\tran\tV;PST\ngo\twent\tV;PST\ngive up\tgave up\tV;PST\ndog\tdogs\tN;PL\ncat\tcats\tN;PL\n"
        expected = [line.split("\t") for line in text.splitlines() if " " not in line]
        entries = parse_unimorph(text)
        assert len(entries) == 4
        assert [list(e) for e in entries] == expected

    def test_short_lines_skipped_with_warning(self, caplog):
        with caplog.at_level(logging.WARNING):
            entries = parse_unimorph("run\tran\nwalk\twalked\tV;PST\n")
        assert entries == [("walk", "walked", "V;PST")]
        assert "1 line" in caplog.text

    @given(st.lists(st.tuples(st.text(min_size=1, max_size=5), st.text(min_size=1, max_size=5)), max_size=10))
    def test_no_whitespace_survives(self, pairs):
        text = "".join(f"{lem}\t{form}\tX\n" for lem, form in pairs
                       if "\t" not in lem + form and "\n" not in lem + form and "\r" not in lem + form)
        for entry in parse_unimorph(text):
            assert not any(c.isspace() for c in entry.lemma + entry.form)


class TestCandidateTsv:
    def test_single(self):
        assert parse_candidate_tsv("besten\tgut\n") == [("besten", None, ("gut",))]

    def test_dedup_keeps_first(self):
        assert parse_candidate_tsv("x\tfoo,foo,bar\n") == [("x", None, ("foo", "bar"))]

    def test_order_kept(self):
        assert parse_candidate_tsv("Antworten\tantworten,antwort\n")[0].lemmas == ("antworten", "antwort")

    def test_pos_column(self):
        assert parse_candidate_tsv("чотирьох\tNUM\tчетверо,чотири\n") == [("чотирьох", "NUM", ("четверо", "чотири"))]

    def test_empty_lemma_skipped(self, caplog):
        with caplog.at_level(logging.WARNING):
            assert parse_candidate_tsv("x\t\ny\tz\n") == [("y", None, ("z",))]
        assert "skipped 1" in caplog.text

    def test_comma_lemma(self):
        assert parse_candidate_tsv(",\t,\n") == [(",", None, (",",))]


def test_analysis_tsv():
    table = parse_analysis_tsv("dogs\tdog\tNOUN\tNumber=Plur\ndogs\tdog\tVERB\t_\n")
    assert [a.upos for a in table["dogs"]] == ["NOUN", "VERB"]
    assert table["dogs"][1].feats == ()


class TestFreqList:
    def test_raw(self):
        assert parse_freq_list("a b a", raw=True) == FreqList((("a", 2), ("b", 1)))

    def test_tsv_sorted(self):
        assert parse_freq_list("dog\t5\ncat\t9\n").entries == (("cat", 9), ("dog", 5))

    def test_non_numeric(self):
        with pytest.raises(DataFormatError):
            parse_freq_list("dog\tmany\n")

    def test_non_positive(self):
        with pytest.raises(DataFormatError):
            parse_freq_list("dog\t0\n")

    @given(st.lists(st.sampled_from("abcdefgh"), max_size=40))
    def test_ties_keep_first_occurrence(self, words):
        # brute-force stable ordering: for each count (desc), words by first index
        first = {}
        counts = {}
        for i, w in enumerate(words):
            first.setdefault(w, i)
            counts[w] = counts.get(w, 0) + 1
        expected = []
        for c in sorted(set(counts.values()), reverse=True):
            expected += [(w, c) for w in sorted((w for w in counts if counts[w] == c), key=first.get)]
        assert parse_freq_list(" ".join(words), raw=True).entries == tuple(expected)

    @given(st.lists(st.sampled_from("abcdefgh"), max_size=40))
    def test_invariants(self, words):
        fl = parse_freq_list(" ".join(words), raw=True)
        ws = fl.words()
        assert len(ws) == len(set(ws))
        counts = [c for _, c in fl]
        assert all(c > 0 for c in counts)
        assert counts == sorted(counts, reverse=True)
