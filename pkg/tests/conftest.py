"""Shared hypothesis strategies for word-level tests."""

from hypothesis import strategies as st


def letters(rank: int = 2):
    codes = [c for i in range(1, rank + 1) for c in (i, -i)]
    return st.sampled_from(codes)


def raw_words(rank: int = 2, max_size: int = 30):
    return st.lists(letters(rank), max_size=max_size).map(tuple)
