"""Tokenization and normalization shared by every module.

Tokens are whitespace-separated; chunk sizes, context budgets and the
conciseness reward all count the same way.
"""
import re
from typing import Callable

Tokenizer = Callable[[str], list[str]]

_TOKEN_RE = re.compile(r"\S+")


def whitespace_tokens(text: str) -> list[str]:
    return text.split()


def truncate_tokens(text: str, budget: int) -> str:
    """Cut ``text`` after its ``budget``-th token, keeping original spacing before the cut."""
    if budget <= 0:
        return ""
    for i, match in enumerate(_TOKEN_RE.finditer(text), start=1):
        if i == budget:
            return text[: match.end()]
    return text


def normalize_name(name: str) -> str:
    return " ".join(name.casefold().split())
