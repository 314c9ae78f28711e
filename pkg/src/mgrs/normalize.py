"""Text canonicalization shared by answer comparison and step similarity."""

from __future__ import annotations

import re
from fractions import Fraction

_TRAILING_PUNCT = ".!?,;:"
_THOUSANDS = re.compile(r"^-?\d{1,3}(?:,\d{3})+(?:\.\d+)?$")
_TOKEN = re.compile(r"\d+\.\d+|\d+|[a-z]+")


def canonical_number(text: str) -> str | None:
    """Exact canonical form of a decimal or rational literal, or None.

    "24.0", "24", and "24.000" all map to "24"; "3.50" and "7/2" to "7/2".
    """
    s = text.strip().replace("−", "-")
    if _THOUSANDS.match(s):
        s = s.replace(",", "")
    if s.startswith("+"):
        s = s[1:]
    try:
        value = Fraction(s)
    except (ValueError, ZeroDivisionError):
        return None
    return str(value)


def normalize_answer(text: str) -> str:
    """Canonical answer for equality checks: case, spacing, punctuation, numerals."""
    s = " ".join(text.split()).lower().rstrip(_TRAILING_PUNCT).strip()
    num = canonical_number(s)
    return num if num is not None else s


def canonical_tokens(text: str) -> set[str]:
    """Token set for similarity: lowercased words and canonicalized numbers."""
    out: set[str] = set()
    for tok in _TOKEN.findall(text.lower()):
        num = canonical_number(tok)
        out.add(num if num is not None else tok)
    return out
