"""Terminal reward: answer normalization, token F1, and exact match.

Normalization follows the SQuAD convention: lowercase, strip punctuation,
drop the articles {a, an, the}, split on whitespace. F1 is computed over
token *sets* by default; a multiset variant is available for comparison
with the common SQuAD implementation (identical whenever answers contain
no repeated tokens).
"""

from __future__ import annotations

import string
from collections import Counter

_ARTICLES = {"a", "an", "the"}
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)

# A normalized answer is simply its token list.
NormalizedAnswer = list


def normalize_answer(text: str) -> list[str]:
    """Lowercase, strip punctuation, drop articles, split on whitespace."""
    stripped = text.lower().translate(_PUNCT_TABLE)
    return [tok for tok in stripped.split() if tok not in _ARTICLES]


def token_f1(y: str, y_star: str, multiset: bool = False) -> float:
    """Token overlap F1 of two answers in [0, 1].

    Both answers empty after normalization scores 1; exactly one empty
    scores 0. ``multiset=True`` counts repeated tokens instead of deduplicating.
    """
    a = normalize_answer(y)
    b = normalize_answer(y_star)
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    if multiset:
        common = sum((Counter(a) & Counter(b)).values())
        denom = len(a) + len(b)
    else:
        sa, sb = set(a), set(b)
        common = len(sa & sb)
        denom = len(sa) + len(sb)
    return 2.0 * common / denom


def exact_match(y: str, y_star: str) -> int:
    """1 iff the normalized token lists are identical in order."""
    return int(normalize_answer(y) == normalize_answer(y_star))


def terminal_reward(y: str, y_star: str, t: int, horizon: int) -> float:
    """Sparse reward: token F1 at the terminal step, 0 before it."""
    if t != horizon:
        return 0.0
    return token_f1(y, y_star)
