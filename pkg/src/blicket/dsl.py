"""Textual hypothesis syntax: ``HYP mask=[0,1,1] rule=ALL``.

``parse_hypothesis`` is strict; ``extract_hypotheses`` is a forgiving
scanner for free-form model output (prose, python-ish code) that never
raises.
"""

from __future__ import annotations

import re

from .env import BlicketError, Rule
from .hypotheses import Hypothesis


class HypothesisSyntaxError(BlicketError, ValueError):
    pass


class HypothesisArityError(HypothesisSyntaxError):
    pass


_RULE_WORD = {Rule.DISJUNCTIVE: "ANY", Rule.CONJUNCTIVE: "ALL"}
_WORD_RULE = {"ANY": Rule.DISJUNCTIVE, "ALL": Rule.CONJUNCTIVE}

_CANONICAL = re.compile(
    r"^\s*HYP\s+MASK\s*=\s*\[(?P<mask>[^\]]*)\]\s+RULE\s*=\s*(?P<rule>\w+)\s*$",
    re.IGNORECASE,
)


def render_hypothesis(h: Hypothesis) -> str:
    bits = ",".join("1" if m else "0" for m in h.mask)
    return f"HYP mask=[{bits}] rule={_RULE_WORD[h.rule]}"


def render_hypotheses(hs) -> str:
    return "\n".join(render_hypothesis(h) for h in hs) or "(none)"


def _mask_values(body: str) -> list[bool]:
    out = []
    for tok in (t.strip() for t in body.split(",")):
        low = tok.lower()
        if low in ("1", "true"):
            out.append(True)
        elif low in ("0", "false"):
            out.append(False)
        else:
            raise HypothesisSyntaxError(f"bad mask entry {tok!r}")
    return out


def parse_hypothesis(text: str, num_objects: int) -> Hypothesis:
    m = _CANONICAL.match(text)
    if not m:
        raise HypothesisSyntaxError(f"not a hypothesis line: {text!r}")
    word = m.group("rule").upper()
    if word not in _WORD_RULE:
        raise HypothesisSyntaxError(f"unknown rule {m.group('rule')!r}")
    body = m.group("mask").strip()
    if not body:
        raise HypothesisSyntaxError("empty mask")
    mask = _mask_values(body)
    if len(mask) != num_objects:
        raise HypothesisArityError(f"mask has {len(mask)} entries, expected {num_objects}")
    return Hypothesis(tuple(mask), _WORD_RULE[word])


# a bracketed 0/1 or True/False vector
_VECTOR = re.compile(r"\[\s*((?:(?:0|1|true|false)\s*,\s*)*(?:0|1|true|false))\s*,?\s*\]",
                     re.IGNORECASE)
_ALL_WORDS = re.compile(r"\b(all|every)\b|np\.all|\.all\(", re.IGNORECASE)
_ANY_WORDS = re.compile(r"\b(any|some)\b|np\.any|\.any\(", re.IGNORECASE)
_REJECT_WORDS = re.compile(r"\bsum\b|np\.sum|\.sum\(|>=|<=", re.IGNORECASE)
# how far after a mask literal we look for the combinator
_WINDOW = 240


def _combinator(fragment: str) -> Rule | None:
    a = _ALL_WORDS.search(fragment)
    b = _ANY_WORDS.search(fragment)
    if a and (not b or a.start() < b.start()):
        return Rule.CONJUNCTIVE
    if b:
        return Rule.DISJUNCTIVE
    return None


def extract_hypotheses(freeform: str, num_objects: int) -> list[Hypothesis]:
    """Recover hypotheses from model output in order of appearance.

    Canonical ``HYP`` lines are taken as-is. Otherwise a bracketed 0/1 vector
    of the right length followed (within a short window, before the next
    vector) by an all/every or any/some combinator becomes one hypothesis.
    Fragments using sums or thresholds are skipped.
    """
    try:
        return _extract(str(freeform), num_objects)
    except Exception:  # the scanner must be total
        return []


def _extract(text: str, n: int) -> list[Hypothesis]:
    found: list[tuple[int, Hypothesis]] = []
    canonical_spans = []
    for m in re.finditer(r"^.*\bHYP\b.*$", text, re.IGNORECASE | re.MULTILINE):
        try:
            found.append((m.start(), parse_hypothesis(m.group(0), n)))
        except HypothesisSyntaxError:
            continue
        canonical_spans.append((m.start(), m.end()))

    vectors = list(_VECTOR.finditer(text))
    for i, m in enumerate(vectors):
        if any(a <= m.start() < b for a, b in canonical_spans):
            continue
        try:
            mask = _mask_values(m.group(1))
        except HypothesisSyntaxError:
            continue
        if len(mask) != n:
            continue
        stop = vectors[i + 1].start() if i + 1 < len(vectors) else len(text)
        # also stop at the next function definition
        nxt = re.search(r"\bdef\b", text[m.end():])
        if nxt:
            stop = min(stop, m.end() + nxt.start())
        fragment = text[m.end():min(stop, m.end() + _WINDOW)]
        if _REJECT_WORDS.search(fragment):
            continue
        rule = _combinator(fragment)
        if rule is None:
            continue
        found.append((m.start(), Hypothesis(tuple(mask), rule)))

    found.sort(key=lambda t: t[0])
    seen = set()
    out = []
    for _, h in found:
        if h not in seen:
            seen.add(h)
            out.append(h)
    return out
