"""Rouge-L (LCS-based F1) similarity with a pruned corpus-scale max query.

Tokenization: lowercase, split on whitespace, strip leading/trailing
punctuation per token, drop tokens that end up empty.

``rouge_l`` is the plain pairwise score: F1 = 2PR/(P+R) with
P = LCS/|candidate| and R = LCS/|reference| over token sequences.

``ReferenceIndex`` answers "max Rouge-L of this candidate against the whole
reference set, and is it above the threshold?" without running the full
O(n*m) LCS against every reference. Two admissible upper bounds prune:
LCS <= min(|c|, |r|) and LCS <= |token multiset intersection|, hence
F1 <= 2*bound/(|c|+|r|). References whose bound cannot exceed the threshold
(or the best score already seen) are skipped; the intersection sizes come
from an inverted token index, so references sharing no tokens with the
candidate cost nothing. The keep/reject decision is exactly that of the
brute-force filter; for kept candidates the recorded max is the maximum
over the non-pruned references (a lower bound that never affects the
decision).
"""

from __future__ import annotations

import string
from collections import Counter
from typing import Iterable, Sequence

_PUNCT = string.punctuation


def tokenize(text: str) -> tuple[str, ...]:
    out = []
    for tok in text.lower().split():
        tok = tok.strip(_PUNCT)
        if tok:
            out.append(tok)
    return tuple(out)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest common subsequence length, O(len(a)*len(b)) with a rolling row."""
    if not a or not b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        curr = [0]
        append = curr.append
        row = prev
        for j, y in enumerate(b):
            if x == y:
                append(row[j] + 1)
            else:
                up = row[j + 1]
                left = curr[j]
                append(up if up >= left else left)
        prev = curr
    return prev[-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> float:
    """LCS F1 of two token sequences; 0 when either side is empty or LCS is 0."""
    if not candidate or not reference:
        return 0.0
    lcs = lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    precision = lcs / len(candidate)
    recall = lcs / len(reference)
    return 2 * precision * recall / (precision + recall)


class ReferenceIndex:
    """Inverted token index over reference sequences for pruned max queries."""

    def __init__(self, references: Iterable[Sequence[str]] = ()):
        self._seqs: list[tuple[str, ...]] = []
        self._postings: dict[str, list[tuple[int, int]]] = {}
        for seq in references:
            self.add(seq)

    def __len__(self) -> int:
        return len(self._seqs)

    def add(self, tokens: Sequence[str]) -> None:
        tokens = tuple(tokens)
        rid = len(self._seqs)
        self._seqs.append(tokens)
        for tok, count in Counter(tokens).items():
            self._postings.setdefault(tok, []).append((rid, count))

    def add_text(self, text: str) -> None:
        self.add(tokenize(text))

    def max_score(self, candidate: Sequence[str], threshold: float) -> tuple[float, bool]:
        """Return (score, exceeds_threshold).

        A reference is skipped only when its bound proves it cannot exceed
        the threshold or the best score so far, so whenever the true max is
        above the threshold, ``score`` IS the true max; below it, ``score``
        is a lower bound that never changes the keep decision.
        """
        candidate = tuple(candidate)
        lc = len(candidate)
        if lc == 0 or not self._seqs:
            return 0.0, False
        shared: dict[int, int] = {}
        for tok, ccount in Counter(candidate).items():
            for rid, rcount in self._postings.get(tok, ()):
                shared[rid] = shared.get(rid, 0) + min(ccount, rcount)
        best = 0.0
        for rid, inter in shared.items():
            ref = self._seqs[rid]
            bound_lcs = min(inter, lc, len(ref))
            bound_f1 = 2 * bound_lcs / (lc + len(ref))
            if bound_f1 <= threshold and bound_f1 <= best:
                continue
            score = rouge_l(candidate, ref)
            if score > best:
                best = score
        return best, best > threshold


def max_rouge_brute_force(candidate: Sequence[str], references: Iterable[Sequence[str]]) -> float:
    """Unpruned max over references; the oracle the index is checked against."""
    best = 0.0
    for ref in references:
        score = rouge_l(candidate, ref)
        if score > best:
            best = score
    return best
