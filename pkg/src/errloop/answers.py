"""Final-answer extraction, normalization, and exact-match comparison.

Extraction applies three rules in priority order, "last occurrence wins"
within each rule (final answers live at the end of chain-of-thought text):

* R1 — the last ``\\boxed{...}`` expression;
* R2 — the last cue phrase (``"the answer is"``, ``"#### "``) followed by
  a value on the same line;
* R3 — the last standalone numeric token (integer, decimal, or ``a/b``).

Normalization is deliberately bounded: it strips surrounding punctuation,
leading currency symbols, thousands separators, and trailing unit words
from the fixed ``UNIT_WORDS`` list; lowercases; rewrites simple LaTeX
fractions to ``a/b``; reduces rationals to lowest terms with a positive
denominator; and collapses decimals equal to integers (``7.0`` -> ``7``).
Anything that still fails to parse as a number passes through with only
whitespace/case cleanup (kind ``expression``). Numeric comparisons use
exact rational arithmetic, never floats, so ``1/2`` equals ``0.5`` but
``1/3`` never equals ``0.3333``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

# Bounded, documented list; no open-ended unit inference.
UNIT_WORDS = frozenset(
    {
        "dollars", "dollar", "cents", "cent", "euros", "euro",
        "pounds", "pound", "bucks",
        "hours", "hour", "minutes", "minute", "seconds", "second",
        "days", "day", "weeks", "week", "months", "month", "years", "year",
        "miles", "mile", "meters", "meter", "metres", "metre",
        "kilometers", "kilometer", "km", "feet", "foot", "inches", "inch",
        "grams", "gram", "kilograms", "kilogram", "kg",
        "liters", "liter", "litres", "litre",
        "percent", "degrees", "degree",
        "mph", "km/h",
    }
)

CURRENCY_SYMBOLS = "$€£¥"
_EDGE_PUNCT = ".,;:!?\"'`"

CUE_PHRASES = ("the answer is", "#### ")

_FRAC_RE = re.compile(r"\\[dt]?frac\s*\{([^{}]*)\}\s*\{([^{}]*)\}")
_TEXT_RE = re.compile(r"\\text(?:rm|bf|it)?\s*\{([^{}]*)\}")
_INT_RE = re.compile(r"[+-]?\d+\Z")
_RATIONAL_RE = re.compile(r"([+-]?\d+)\s*/\s*([+-]?\d+)\Z")
_DECIMAL_RE = re.compile(r"[+-]?(?:\d+\.\d*|\.\d+)\Z")
_THOUSANDS_RE = re.compile(r"(?<=\d),(?=\d)")
_NUMERIC_TOKEN_RE = re.compile(
    r"(?<![\w.])-?\d[\d,]*(?:\.\d+)?(?:\s*/\s*\d+)?(?!\w)(?!\.\d)"
)


@dataclass(frozen=True)
class Answer:
    """A final answer as found in text plus its canonical form."""

    raw: str
    canonical: str
    kind: str  # integer | rational | decimal | expression


def _strip_latex(s: str) -> str:
    s = s.replace("\\left", "").replace("\\right", "")
    s = s.replace("\\!", "").replace("\\,", " ").replace("\\;", " ")
    s = s.replace("\\$", "$").replace("\\%", "%")
    prev = None
    while s != prev:  # nested \frac/\text unwrap inner-out
        prev = s
        s = _TEXT_RE.sub(r"\1", s)
        s = _FRAC_RE.sub(r"\1/\2", s)
    return s


def _strip_edges(s: str) -> str:
    """Iteratively strip surrounding punctuation, leading currency, trailing units."""
    prev = None
    while s != prev:
        prev = s
        s = s.strip()
        s = s.rstrip(_EDGE_PUNCT).rstrip()
        # leading "." stays when it opens a decimal like ".5"
        while s and s[0] in _EDGE_PUNCT and not (
            s[0] == "." and len(s) > 1 and s[1].isdigit()
        ):
            s = s[1:].lstrip()
        while s and s[0] in CURRENCY_SYMBOLS:
            s = s[1:].lstrip()
        if s.endswith("%"):
            s = s[:-1].rstrip()
        if (
            len(s) > 1
            and s[0] == "("
            and s[-1] == ")"
            and "(" not in s[1:-1]
            and ")" not in s[1:-1]
        ):
            s = s[1:-1]
        tokens = s.split()
        while len(tokens) > 1 and tokens[-1].lower().strip(_EDGE_PUNCT) in UNIT_WORDS:
            tokens = tokens[:-1]
        s = " ".join(tokens)
    return s


def _format_fraction(f: Fraction) -> tuple[str, str]:
    if f.denominator == 1:
        return str(f.numerator), "integer"
    return f"{f.numerator}/{f.denominator}", "rational"


def _trim_decimal(s: str) -> str:
    sign = "-" if s.startswith("-") else ""
    s = s.lstrip("+-")
    whole, _, frac = s.partition(".")
    frac = frac.rstrip("0")
    whole = whole.lstrip("0") or "0"
    if not frac:
        out = whole
    else:
        out = f"{whole}.{frac}"
    if out in ("0", "0.0"):
        sign = ""
    return sign + out


def normalize(raw: str) -> Answer:
    """Normalize a raw answer span to canonical form."""
    s = _strip_latex(str(raw))
    s = " ".join(s.split())
    s = _strip_edges(s)
    s = _THOUSANDS_RE.sub("", s)
    s = _strip_edges(s)
    s = s.lower()
    if _INT_RE.fullmatch(s):
        return Answer(raw=raw, canonical=str(int(s)), kind="integer")
    m = _RATIONAL_RE.fullmatch(s)
    if m and int(m.group(2)) != 0:
        canonical, kind = _format_fraction(Fraction(int(m.group(1)), int(m.group(2))))
        return Answer(raw=raw, canonical=canonical, kind=kind)
    if _DECIMAL_RE.fullmatch(s):
        trimmed = _trim_decimal(s)
        kind = "integer" if "." not in trimmed else "decimal"
        return Answer(raw=raw, canonical=trimmed, kind=kind)
    return Answer(raw=raw, canonical=s, kind="expression")


def parse_exact(canonical: str) -> Optional[Fraction]:
    """Parse a canonical string as an exact rational, if it is one."""
    if _INT_RE.fullmatch(canonical):
        return Fraction(int(canonical))
    m = _RATIONAL_RE.fullmatch(canonical)
    if m and int(m.group(2)) != 0:
        return Fraction(int(m.group(1)), int(m.group(2)))
    if _DECIMAL_RE.fullmatch(canonical):
        return Fraction(canonical)
    return None


def _last_boxed(text: str) -> Optional[str]:
    start = text.rfind("\\boxed")
    while start != -1:
        brace = text.find("{", start + len("\\boxed"))
        if brace != -1 and text[start + len("\\boxed"):brace].strip() == "":
            depth = 0
            for i in range(brace, len(text)):
                if text[i] == "{":
                    depth += 1
                elif text[i] == "}":
                    depth -= 1
                    if depth == 0:
                        return text[brace + 1:i]
        start = text.rfind("\\boxed", 0, start)
    return None


def _cue_spans(text: str) -> list[tuple[int, int]]:
    lowered = text.lower()
    spans = []
    for cue in CUE_PHRASES:
        pos = 0
        while True:
            idx = lowered.find(cue, pos)
            if idx == -1:
                break
            end = idx + len(cue)
            # word-boundary guard: "the answer is" must not match "...isn't"
            if end >= len(text) or not (cue[-1].isalnum() and text[end].isalnum()):
                spans.append((idx, end))
            pos = idx + 1
    spans.sort()
    return spans


def extract_answer(reasoning: str) -> Optional[Answer]:
    """Extract the final answer from a reasoning path, or None if no rule fires."""
    text = str(reasoning)

    inner = _last_boxed(text)
    if inner is not None:
        ans = normalize(inner)
        if ans.canonical:
            return Answer(raw=inner, canonical=ans.canonical, kind=ans.kind)

    for _, end in reversed(_cue_spans(text)):
        line_end = text.find("\n", end)
        tail = text[end:] if line_end == -1 else text[end:line_end]
        sentence_end = re.search(r"\.(?=\s)", tail)
        if sentence_end:
            tail = tail[: sentence_end.start()]
        ans = normalize(tail)
        if ans.canonical:
            return Answer(raw=tail.strip(), canonical=ans.canonical, kind=ans.kind)

    matches = list(_NUMERIC_TOKEN_RE.finditer(text))
    if matches:
        token = matches[-1].group(0)
        ans = normalize(token)
        if ans.canonical:
            return Answer(raw=token, canonical=ans.canonical, kind=ans.kind)

    return None


def answers_match(a: Answer, b: Answer) -> bool:
    """True iff canonical forms are equal or both parse to the same exact rational."""
    if a.canonical == b.canonical:
        return True
    fa, fb = parse_exact(a.canonical), parse_exact(b.canonical)
    return fa is not None and fb is not None and fa == fb


def match_canonical(a: str, b: str) -> bool:
    """answers_match over bare canonical strings."""
    return answers_match(
        Answer(raw=a, canonical=a, kind="expression"),
        Answer(raw=b, canonical=b, kind="expression"),
    )
