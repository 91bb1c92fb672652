import string

from hypothesis import given
from hypothesis import strategies as st

from newsload.textprep import default_stopwords, load_stopwords, normalize, tokenize


def test_tokenize_drops_digits_and_counts_one_sentence():
    tok = tokenize("The CAT runs 42 km.")
    assert tok.tokens == ["the", "cat", "runs", "km"]
    assert tok.n_sentences == 1


def test_tokenize_empty_text():
    assert tokenize("") == ([], 0)
    assert tokenize(None) == ([], 0)


def test_hyphen_and_digits_break_tokens():
    tok = tokenize("COVID-19 lockdown!")
    assert tok.tokens == ["covid", "lockdown"]
    assert tok.n_sentences == 1


def test_sentence_split_without_abbreviation_handling():
    assert tokenize("Power cut. Lights out! Why? Because").n_sentences == 4
    assert tokenize("Mr. Smith spoke.").n_sentences == 2


def test_diacritics_kept_as_letters():
    assert tokenize("Café Zoë").tokens == ["café", "zoë"]


def test_normalize_examples():
    assert normalize(["the", "cat", "runs", "km"], {"the"}) == ["cat", "runs"]
    assert normalize(["a", "an"], set()) == []


def test_bundled_stopwords_size():
    words = default_stopwords()
    assert 150 <= len(words) <= 220
    assert "the" in words and "very" not in words


def test_stopword_override(tmp_path):
    path = tmp_path / "stop.txt"
    path.write_text("# custom\ncat\n", encoding="utf-8")
    assert load_stopwords(path) == frozenset({"cat"})
    assert normalize(["cat", "dog"], load_stopwords(path)) == ["dog"]


words = st.text(alphabet=string.ascii_letters + string.digits + "é", min_size=0, max_size=8)


@given(st.lists(words, max_size=30))
def test_normalize_idempotent_and_clean(tokens):
    sw = default_stopwords()
    once = normalize(tokens, sw)
    assert normalize(once, sw) == once
    for tok in once:
        assert len(tok) >= 3 and tok not in sw
        assert not any(ch.isdigit() for ch in tok)


@given(st.text(alphabet=string.ascii_letters + string.digits + " .!?-'", max_size=200))
def test_tokenize_case_invariant_and_deterministic(text):
    a = tokenize(text)
    assert a == tokenize(text)
    assert a == tokenize(text.upper()) == tokenize(text.lower())
