import datetime as dt

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from newsload.features import (
    COUNT_NAMES,
    SENTIMENT_NAMES,
    Article,
    EmbeddingTable,
    SentimentLexicon,
    VocabularyError,
    build_vocabulary,
    count_features,
    daily_rows,
    default_lexicon,
    embedding_features,
    prepare,
    quintile_histogram,
    read_feature_table,
    rows_to_frame,
    sentiment_features,
    sentiment_scores,
    word_frequency_features,
    write_feature_table,
)
from newsload.ingest import NewsItem

DAY = dt.date(2020, 3, 2)
TOY = SentimentLexicon({"good": (1.0, 0.6), "bad": (-1.0, 0.7), "fine": (0.5, 0.4)}, {"very": 1.3})


def art(tokens, section="uk", n_sentences=1):
    return Article(section, list(tokens), n_sentences, list(tokens))


def test_count_family_has_25_features():
    assert len(COUNT_NAMES) == 25
    row = count_features(DAY, [], "title")
    assert set(row.values) == set(COUNT_NAMES)
    assert all(v == 0.0 for v in row.values.values())
    assert row.missing


def test_section_proportions():
    row = count_features(DAY, [art(["a"]), art(["b"])], "title")
    assert row.values["section_uk"] == 1.0
    assert sum(v for k, v in row.values.items() if k.startswith("section_")) == 1.0


def test_counts_against_hand_count():
    items = [
        NewsItem(DAY, "uk", "x", body="One two three. Four five six seven."),
        NewsItem(DAY, "world", "x", body="Alpha beta gamma delta epsilon! Zeta"),
        NewsItem(DAY, "business", "x", body="Only words here and there, then stop."),
    ]
    row = count_features(DAY, prepare(items, "body"), "body")
    # words 7 + 6 + 7 = 20; sentences 2 + 2 + 1 = 5
    assert row.values["n_words"] == 20
    assert row.values["n_sentences"] == 5
    assert row.values["mean_words_per_sentence"] == 20 / 5
    assert row.values["mean_sentences_per_article"] == 5 / 3
    assert row.values["n_articles"] == 3


def test_vocabulary_threshold():
    docs = [["cat"] * 5 + ["dog"] * 2]
    assert build_vocabulary(docs, 3) == ["cat"]
    assert build_vocabulary(docs + [["ant"] * 2], 0) == ["cat", "ant", "dog"]
    with pytest.raises(VocabularyError):
        build_vocabulary(docs, 10)


def test_word_frequency_examples():
    row = word_frequency_features(DAY, [art(["cat", "cat", "dog"])], ["cat"], "title")
    assert row.values["cat"] == 2 / 3
    assert word_frequency_features(DAY, [], ["cat"], "title").values == {"cat": 0.0}
    raw = word_frequency_features(DAY, [art(["cat", "cat", "dog"])], ["cat"], "title", normalize_by_total=False)
    assert raw.values["cat"] == 2.0


def test_word_frequency_is_count_over_daily_total():
    arts = [art(["sun", "rain", "sun"]), art(["wind", "sun", "rain", "snow"])]
    row = word_frequency_features(DAY, arts, ["sun", "rain", "hail"], "body")
    assert row.values == {"sun": 3 / 7, "rain": 2 / 7, "hail": 0.0}


def test_sentiment_hand_computation():
    s = sentiment_scores(["good", "good", "bad"], TOY)
    assert s.polarity == pytest.approx(1 / 3, abs=1e-12)
    assert s.subjectivity == pytest.approx((0.6 + 0.6 + 0.7) / 3, abs=1e-12)
    assert not s.neutral


def test_sentiment_no_hits_is_neutral():
    assert sentiment_scores(["cat"], TOY) == (0.0, 0.0, True)


def test_modifier_multiplies_and_clamps():
    assert sentiment_scores(["very", "good"], TOY).polarity == 1.0
    assert sentiment_scores(["very", "fine"], TOY).polarity == pytest.approx(0.65)


def test_modifier_never_scored():
    lex = SentimentLexicon({"very": (0.2, 0.3), "good": (1.0, 0.6)}, {"very": 1.3})
    assert "very" not in lex.scores


def test_histograms():
    np.testing.assert_allclose(quintile_histogram(np.array([0.1, 0.5, 0.9])), [1 / 3, 0, 1 / 3, 0, 1 / 3])
    row = sentiment_features(DAY, [art(["cat"])], TOY, "title")
    assert row.values["polarity_q2"] == 1.0 and row.values["polarity_std"] == 0.0


def test_exactly_18_sentiment_features():
    assert len(SENTIMENT_NAMES) == 18
    row = sentiment_features(DAY, [art(["good"]), art(["bad", "fine"])], TOY, "title")
    assert len(row.values) == 18


def test_default_lexicon_loads():
    lex = default_lexicon()
    assert len(lex.scores) > 1000 and "very" in lex.modifiers
    assert not set(lex.scores) & set(lex.modifiers)


def test_embedding_examples():
    table = EmbeddingTable(["a", "b"], np.array([[1.0, 0.0], [0.0, 1.0]]))
    one = embedding_features(DAY, [art(["a", "b"])], table, "title")
    two = embedding_features(DAY, [art(["a"]), art(["b"])], table, "title")
    assert list(one.values.values()) == [0.5, 0.5]
    assert list(two.values.values()) == [0.5, 0.5]
    empty = embedding_features(DAY, [art(["zzz"])], table, "title")
    assert empty.missing and list(empty.values.values()) == [0.0, 0.0]


def test_embedding_file_round_trip(tmp_path):
    table = EmbeddingTable(["a", "b"], np.array([[0.1, -2.0], [3.0, 1e-7]]))
    table.save(tmp_path / "e.txt")
    back = EmbeddingTable.load(tmp_path / "e.txt")
    assert back.words == table.words
    np.testing.assert_array_equal(back.vectors, table.vectors)
    (tmp_path / "bad.txt").write_text("a 1 2\nb 3\n", encoding="utf-8")
    with pytest.raises(ValueError, match="expected 2"):
        EmbeddingTable.load(tmp_path / "bad.txt")


words = st.sampled_from(["good", "bad", "fine", "very", "cat", "dog", "sun"])
articles = st.lists(st.lists(words, max_size=12), min_size=1, max_size=8)


@given(articles, st.randoms(use_true_random=False))
def test_day_features_permutation_invariant(token_lists, rnd):
    table = EmbeddingTable(["good", "bad", "fine", "cat"], np.arange(12, dtype=float).reshape(4, 3) / 7)
    arts = [art(t) for t in token_lists]
    shuffled = [art(rnd.sample(t, len(t))) for t in token_lists]
    rnd.shuffle(shuffled)
    assert embedding_features(DAY, arts, table, "body").values == embedding_features(DAY, shuffled, table, "body").values


@given(articles)
def test_histograms_sum_to_one_and_frequencies_bounded(token_lists):
    arts = [art(t) for t in token_lists]
    row = sentiment_features(DAY, arts, default_lexicon(), "body")
    pol = sum(row.values[f"polarity_q{i}"] for i in range(5))
    sub = sum(row.values[f"subjectivity_q{i}"] for i in range(5))
    assert abs(pol - 1) <= 1e-9 and abs(sub - 1) <= 1e-9
    wf = word_frequency_features(DAY, arts, ["good", "cat", "sun"], "body").values
    assert all(0 <= v <= 1 for v in wf.values()) and sum(wf.values()) <= 1 + 1e-12


def test_training_rows_unchanged_by_test_articles(small_synth):
    ds, _ = small_synth
    split = dt.date(2020, 1, 1)
    arts = {d: prepare(ds.day_articles(d), "title") for d in ds.dates}
    train = {d: a for d, a in arts.items() if d < split}
    vocab = build_vocabulary([a.tokens for d in train for a in train[d]], 50)
    only_train = rows_to_frame(daily_rows(train, "title", "wordfreq", vocabulary=vocab))
    full = rows_to_frame(daily_rows(arts, "title", "wordfreq", vocabulary=vocab))
    assert full.loc[only_train.index].equals(only_train)


def test_feature_table_round_trip(tmp_path):
    rows = [count_features(DAY, [art(["a"])], "title"), sentiment_features(DAY, [art(["good"])], TOY, "title")]
    frame = rows_to_frame(rows)
    assert frame.loc[DAY, "missing.title"] == 0.0
    write_feature_table(frame, tmp_path / "f.csv")
    assert read_feature_table(tmp_path / "f.csv").equals(frame)
    with pytest.raises(ValueError, match="duplicate"):
        rows_to_frame(rows + rows[:1])
