import pytest

from numlm.corpus import (Kind, UNK_NUM, UNK_WORD, Vocabulary,
                          build_vocabulary, corpus_stats, normalize_numeral,
                          parse_value, tokenize, tokenize_corpus)


def surfaces(tokens):
    return [t.surface for t in tokens]


class TestTokenize:
    def test_negation_split(self):
        toks = tokenize("-1")
        assert surfaces(toks) == ["-", "1"]
        assert toks[0].kind is Kind.Word
        assert toks[1].kind is Kind.Numeral

    def test_fraction_split(self):
        assert surfaces(tokenize("3/4")) == ["3", "/", "4"]

    def test_lowercasing(self):
        toks = tokenize("Apple")
        assert surfaces(toks) == ["apple"]
        assert toks[0].kind is Kind.Word

    def test_slash_between_words_not_split(self):
        assert surfaces(tokenize("and/or")) == ["and/or"]

    def test_scientific_notation_is_word(self):
        toks = tokenize("1e5")
        assert len(toks) == 1 and toks[0].kind is Kind.Word

    def test_word_plus_numeral_counts(self):
        toks = tokenize("ef was 60.5 % at -1 mm")
        n_num = sum(1 for t in toks if t.kind is Kind.Numeral)
        n_word = sum(1 for t in toks if t.kind is Kind.Word)
        assert n_num + n_word == len(toks)
        assert n_num == 2

    def test_values_non_negative(self):
        for t in tokenize("-12.5 and -3"):
            if t.is_numeral:
                assert t.value >= 0


class TestNormalizeNumeral:
    def test_thousands_separator(self):
        assert normalize_numeral("2,000") == "2000"

    def test_leading_zeros(self):
        assert normalize_numeral("007") == "7"

    def test_trailing_decimal_zeros_kept(self):
        assert normalize_numeral("0.50") == "0.50"

    def test_single_zero_kept_before_point(self):
        assert normalize_numeral("000.5") == "0.5"

    def test_idempotent(self):
        for raw in ["2,000", "007", "0.50", "123.450", "0"]:
            once = normalize_numeral(raw)
            assert normalize_numeral(once) == once

    def test_rejects_non_numeral(self):
        with pytest.raises(ValueError):
            normalize_numeral("abc")
        with pytest.raises(ValueError):
            normalize_numeral("1,23")


class TestParseValue:
    def test_decimal(self):
        assert parse_value("60.5") == (60.5, 1)

    def test_integer(self):
        assert parse_value("7") == (7.0, 0)

    def test_small_decimal(self):
        assert parse_value("0.001") == (0.001, 3)

    def test_total_on_tokenized_numerals(self):
        for t in tokenize("12 0.50 2,000 007 3.14159"):
            if t.is_numeral:
                v, r = parse_value(t.surface)
                assert v == t.value and r == t.precision


class TestVocabulary:
    def test_frequency_order_and_cap(self):
        corpus = tokenize_corpus(["a a a a a b b b 1 1 1 1"])
        vocab = build_vocabulary(corpus, cap=2)
        assert vocab.words == ["a", UNK_WORD]
        assert vocab.numerals == ["1", UNK_NUM]

    def test_cap_covers_all_types(self):
        corpus = tokenize_corpus(["a b 1 2.5"])
        vocab = build_vocabulary(corpus, cap=100)
        for doc in corpus:
            for t in doc:
                assert not vocab.is_oov(t)

    def test_tie_break_first_seen(self):
        corpus = tokenize_corpus(["x y x y z"])
        vocab = build_vocabulary(corpus, cap=1)
        assert vocab.words == ["x", UNK_WORD]

    def test_deterministic(self):
        corpus = tokenize_corpus(["b a 1 a 2 b c 1"])
        v1 = build_vocabulary(corpus, cap=4)
        v2 = build_vocabulary(corpus, cap=4)
        assert v1.words == v2.words and v1.numerals == v2.numerals

    def test_indices_dense_and_classed(self):
        corpus = tokenize_corpus(["a b 1 2 3"])
        vocab = build_vocabulary(corpus, cap=10)
        seen = {vocab.index(t) for doc in corpus for t in doc}
        # words fill [0, n_words-1), numerals [n_words, size-1); UNKs unused
        assert seen == {0, 1, 3, 4, 5}
        assert vocab.surface(vocab.unk_word_index) == UNK_WORD
        assert vocab.surface(vocab.unk_numeral_index) == UNK_NUM

    def test_oov_maps_to_class_unk(self):
        vocab = build_vocabulary(tokenize_corpus(["a 1"]), cap=10)
        toks = tokenize("zebra 99")
        assert vocab.index(toks[0]) == vocab.unk_word_index
        assert vocab.index(toks[1]) == vocab.unk_numeral_index

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            build_vocabulary([], cap=5)

    def test_save_load_roundtrip(self, tmp_path):
        vocab = build_vocabulary(tokenize_corpus(["a b 1 2.50"]), cap=10)
        path = tmp_path / "vocab.txt"
        vocab.save(str(path))
        header = path.read_text().splitlines()[0]
        assert header == f"#words={vocab.n_words} #numerals={vocab.n_numerals}"
        loaded = Vocabulary.load(str(path))
        assert loaded.words == vocab.words
        assert loaded.numerals == vocab.numerals


class TestCorpusStats:
    def test_pct_numerals(self):
        stats = corpus_stats(tokenize_corpus(["x 1 2"]))
        assert abs(stats.pct_numerals - 200.0 / 3) < 1e-9
        assert abs(stats.pct_words + stats.pct_numerals - 100.0) < 1e-9

    def test_median(self):
        stats = corpus_stats(tokenize_corpus(["0 59 10000000"]))
        assert stats.value_median == 59

    def test_oov_rates(self):
        corpus = tokenize_corpus(["a a 1 1 2"])
        vocab = build_vocabulary(corpus, cap=2)  # keeps a and 1
        test = tokenize_corpus(["a b 1 2 3"])
        stats = corpus_stats(test, vocab)
        assert stats.oov_rate_words == 0.5
        assert abs(stats.oov_rate_numerals - 2.0 / 3) < 1e-12

    def test_lengths(self):
        stats = corpus_stats(tokenize_corpus(["a b c", "d"]))
        assert stats.n_instances == 2
        assert stats.max_length == 3
        assert stats.avg_length == 2.0
