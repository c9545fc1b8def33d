"""Turn raw LLM text into canonical (category, polarity) pairs.

The pipeline is: scan the output for the last well-formed Python-style
list of 2-tuples, then fuzzy-map each category onto the official
inventory and normalize each polarity label, dropping anything that
cannot be mapped. Every mapping decision is kept for audit.
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass

from .datasets import Pair, Polarity

DEFAULT_CUTOFF = 0.6

_POLARITY_LABELS = ("positive", "neutral", "negative")

_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", "\\": "\\", "'": "'", '"': '"'}


class NoListFound(Exception):
    """No well-formed list of pairs occurs anywhere in the output.

    Distinct from an explicit empty list: this signals a format failure
    and is scored as zero predictions while being counted in the run
    manifest.
    """


@dataclass(frozen=True)
class RawPair:
    """A pair exactly as the model wrote it, before any mapping."""

    category_text: str
    polarity_text: str


@dataclass(frozen=True)
class MappingOutcome:
    """Audit record for one raw pair: either mapped or dropped with a reason."""

    raw: RawPair
    mapped: Pair | None
    similarity: float
    dropped_reason: str | None = None  # "below-cutoff" | "bad-polarity"

    def __post_init__(self):
        if (self.mapped is None) == (self.dropped_reason is None):
            raise ValueError("exactly one of mapped/dropped_reason must be set")


# ---------------------------------------------------------------------------
# List extraction


class _Scanner:
    __slots__ = ("text", "pos", "end")

    def __init__(self, text: str, pos: int):
        self.text = text
        self.pos = pos
        self.end = len(text)

    def skip_ws(self) -> None:
        while self.pos < self.end and self.text[self.pos] in " \t\r\n":
            self.pos += 1

    def peek(self) -> str:
        if self.pos < self.end:
            return self.text[self.pos]
        return ""

    def take(self, ch: str) -> bool:
        if self.peek() == ch:
            self.pos += 1
            return True
        return False


def _scan_quoted(sc: _Scanner) -> str | None:
    quote = sc.peek()
    if quote not in "'\"":
        return None
    sc.pos += 1
    out: list[str] = []
    while sc.pos < sc.end:
        ch = sc.text[sc.pos]
        if ch == "\\" and sc.pos + 1 < sc.end:
            nxt = sc.text[sc.pos + 1]
            if nxt in _ESCAPES:
                out.append(_ESCAPES[nxt])
            else:
                out.append(ch)
                out.append(nxt)
            sc.pos += 2
            continue
        if ch == quote:
            sc.pos += 1
            return "".join(out)
        if ch == "\n":
            return None  # a quoted element never spans lines
        out.append(ch)
        sc.pos += 1
    return None


def _scan_tuple(sc: _Scanner) -> tuple[str, str] | None:
    if not sc.take("("):
        return None
    sc.skip_ws()
    first = _scan_quoted(sc)
    if first is None:
        return None
    sc.skip_ws()
    if not sc.take(","):
        return None
    sc.skip_ws()
    second = _scan_quoted(sc)
    if second is None:
        return None
    sc.skip_ws()
    if sc.take(","):  # tolerated trailing comma inside the tuple
        sc.skip_ws()
    if not sc.take(")"):
        return None
    return first, second


def _scan_list(text: str, start: int) -> tuple[list[tuple[str, str]], int] | None:
    """Try to read a list of quoted 2-tuples beginning at text[start] == '['.

    Tolerates single or double quotes, trailing commas, internal
    whitespace/newlines, and a literal ``...`` element (the templates'
    own example lists end with one).
    """
    sc = _Scanner(text, start + 1)
    sc.skip_ws()
    items: list[tuple[str, str]] = []
    if sc.take("]"):
        return items, sc.pos
    while True:
        sc.skip_ws()
        if sc.text.startswith("...", sc.pos):
            sc.pos += 3
        else:
            item = _scan_tuple(sc)
            if item is None:
                return None
            items.append(item)
        sc.skip_ws()
        if sc.take(","):
            sc.skip_ws()
            if sc.take("]"):
                return items, sc.pos
            continue
        if sc.take("]"):
            return items, sc.pos
        return None


def extract_pair_list(raw_output: str) -> list[RawPair]:
    """Extract the last well-formed list of pairs from arbitrary text.

    Chain-of-thought outputs end with the final answer, so the last
    occurrence wins. An explicit ``[]`` yields an empty list; no
    well-formed list at all raises NoListFound.
    """
    found: list[tuple[str, str]] | None = None
    for start, ch in enumerate(raw_output):
        if ch != "[":
            continue
        result = _scan_list(raw_output, start)
        if result is not None:
            found = result[0]
    if found is None:
        raise NoListFound("no well-formed list of (category, polarity) tuples in output")
    return [
        RawPair(cat.strip(), pol.strip())
        for cat, pol in found
        if cat.strip() and pol.strip()
    ]


# ---------------------------------------------------------------------------
# Similarity and mapping


def similarity(a: str, b: str) -> float:
    """Gestalt (Ratcliff/Obershelp) ratio 2*M/(|a|+|b|) in [0, 1].

    M counts characters in the recursive longest-matching-block
    decomposition with no junk heuristic. The classical decomposition
    depends on argument order, so the two strings are put into a
    canonical order (by length, then lexicographically) before matching;
    that makes the function symmetric without changing the ratio for
    equal-role cases like spelling variants.
    """
    x, y = sorted((a, b), key=lambda s: (len(s), s))
    return difflib.SequenceMatcher(None, x, y, autojunk=False).ratio()


def _fold(s: str) -> str:
    return " ".join(s.split()).casefold()


def _best_category(candidate: str, inventory) -> tuple[str | None, float]:
    folded = _fold(candidate)
    best: str | None = None
    best_score = -1.0
    for entry in inventory:  # strictly-greater keeps the earliest on ties
        score = similarity(folded, _fold(entry))
        if score > best_score:
            best, best_score = entry, score
    return best, max(best_score, 0.0)


def map_category(candidate: str, inventory, cutoff: float = DEFAULT_CUTOFF):
    """Best fuzzy match in the inventory, or None below the cutoff.

    Candidate and entries are case-folded and whitespace-collapsed before
    scoring; ties break toward the earliest inventory position. Returns
    the inventory entry in its canonical spelling.
    """
    if not inventory:
        raise ValueError("inventory must not be empty")
    if not 0.0 <= cutoff <= 1.0:
        raise ValueError(f"cutoff must be in [0, 1], got {cutoff}")
    best, score = _best_category(candidate, inventory)
    if best is not None and score >= cutoff:
        return best
    return None


def normalize_polarity(text: str, cutoff: float = DEFAULT_CUTOFF) -> Polarity | None:
    """Map free-text polarity onto the three labels, fuzzily below exactness."""
    folded = text.strip().casefold()
    if folded in _POLARITY_LABELS:
        return Polarity(folded)
    best: str | None = None
    best_score = -1.0
    for label in _POLARITY_LABELS:
        score = similarity(folded, label)
        if score > best_score:
            best, best_score = label, score
    if best_score >= cutoff:
        return Polarity(best)
    return None


def canonicalize(
    raw_pairs, inventory, cutoff: float = DEFAULT_CUTOFF
) -> tuple[frozenset[Pair], list[MappingOutcome]]:
    """Map raw pairs onto the inventory, dropping what cannot be mapped.

    Returns the deduplicated pair set plus one MappingOutcome per input
    pair, preserving full provenance for the results file.
    """
    if not 0.0 <= cutoff <= 1.0:
        raise ValueError(f"cutoff must be in [0, 1], got {cutoff}")
    outcomes: list[MappingOutcome] = []
    mapped: list[Pair] = []
    for raw in raw_pairs:
        entry, score = _best_category(raw.category_text, inventory)
        if entry is None or score < cutoff:
            outcomes.append(MappingOutcome(raw, None, score, "below-cutoff"))
            continue
        polarity = normalize_polarity(raw.polarity_text, cutoff)
        if polarity is None:
            outcomes.append(MappingOutcome(raw, None, score, "bad-polarity"))
            continue
        pair = Pair(entry, polarity)
        mapped.append(pair)
        outcomes.append(MappingOutcome(raw, pair, score))
    return frozenset(mapped), outcomes
