"""Tests for the shared caption tokenizer."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from increport.metrics import tokenize


class TestTokenize:
    def test_sentence_with_trailing_period(self):
        assert tokenize("A small dog crosses.") == ["a", "small", "dog", "crosses", "."]

    def test_empty(self):
        assert tokenize("") == []

    def test_hyphenated_words_split(self):
        assert tokenize("LEFT-to-right") == ["left", "-", "to", "-", "right"]

    def test_whitespace_collapsed(self):
        assert tokenize("a   b\t\nc") == ["a", "b", "c"]

    def test_digits_group_with_letters(self):
        assert tokenize("car2 stops at 35mph") == ["car2", "stops", "at", "35mph"]

    def test_apostrophes_are_tokens(self):
        assert tokenize("don't") == ["don", "'", "t"]

    def test_punctuation_runs_stay_separate(self):
        assert tokenize("wait...") == ["wait", ".", ".", "."]

    @given(st.text(max_size=200))
    def test_tokens_never_contain_whitespace_or_uppercase(self, text):
        for token in tokenize(text):
            assert token
            assert token == token.lower()
            assert not any(ch.isspace() for ch in token)

    @given(st.lists(st.sampled_from(["car", "dog", "stops", ",", "."]), max_size=10))
    def test_join_roundtrip_on_simple_tokens(self, tokens):
        assert tokenize(" ".join(tokens)) == tokens

    @given(st.text(max_size=100))
    def test_deterministic(self, text):
        assert tokenize(text) == tokenize(text)
