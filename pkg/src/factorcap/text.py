"""Word-level text handling shared by the corpus builder and the language model."""

from __future__ import annotations

from typing import Iterable

# Token that separates a factor phrase from the caption body. It is kept as a
# single surface token everywhere (tokenizer, vocabulary, decode output).
DELIMITER = "style:"


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, and split commas off as their own token.

    ``"style:"`` survives as one token; hyphenated words are not split.
    """
    return text.lower().replace(",", " , ").split()


def detokenize(tokens: Iterable[str]) -> str:
    """Inverse of :func:`tokenize` up to lowercasing: commas reattach leftward."""
    return " ".join(tokens).replace(" ,", ",")
