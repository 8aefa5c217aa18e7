"""Training-corpus construction and measurement.

Pipeline pieces: LCS line diff between successive revisions, character
trigram Jaccard dedup of near-duplicate sentences, a deterministic coarse
POS tagger, IOB TSV reading/writing, and Cohen's kappa for annotator
agreement.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence, TextIO

from .errors import CorpusFormatError
from .wikitext import Sentence, split_sentences, strip_markup

logger = logging.getLogger(__name__)

ENTITY_TYPES = ("DEATHS", "HOSPITALIZATIONS", "INFECTIONS")

# Closed label set, O first then lexicographic; this order is also the
# decoder's tie-break order.
LABELS = (
    "O",
    "B-DEATHS", "B-HOSPITALIZATIONS", "B-INFECTIONS",
    "I-DEATHS", "I-HOSPITALIZATIONS", "I-INFECTIONS",
)

POS_TAGS = ("NOUN", "VERB", "ADJ", "ADV", "NUM", "DET", "PREP", "PRON",
            "CONJ", "PUNCT", "OTHER")


@dataclass(frozen=True)
class LabeledToken:
    """One token with its coarse POS feature and IOB label."""

    token: str
    pos: str
    label: str

    def __post_init__(self):
        if not self.token:
            raise ValueError("token must be non-empty")
        if self.label not in LABELS:
            raise ValueError(f"label {self.label!r} not in the closed label set")


@dataclass(frozen=True)
class DiffResult:
    added_lines: list[str]
    deleted_lines: list[str]


@dataclass(frozen=True)
class AgreementTable:
    """Square contingency table of label pairs from two annotators."""

    labels: tuple[str, ...]
    counts: tuple[tuple[int, ...], ...]

    @property
    def n(self) -> int:
        return sum(sum(row) for row in self.counts)

    @classmethod
    def from_annotations(cls, a: Sequence[str], b: Sequence[str]) -> "AgreementTable":
        if len(a) != len(b):
            raise ValueError(f"annotation lengths differ: {len(a)} vs {len(b)}")
        labels = tuple(sorted(set(a) | set(b)))
        index = {lab: i for i, lab in enumerate(labels)}
        counts = [[0] * len(labels) for _ in labels]
        for x, y in zip(a, b):
            counts[index[x]][index[y]] += 1
        return cls(labels=labels, counts=tuple(tuple(row) for row in counts))


# ---------------------------------------------------------------------------
# LCS line diff (Myers O(ND), linear space)
# ---------------------------------------------------------------------------

def _middle_snake(a: Sequence[int], b: Sequence[int]):
    """Find a middle snake of an optimal edit path between a and b.

    Returns (x, y, u, v): snake from (x, y) to (u, v) in local coordinates.
    Degenerate corner hits are shifted to the pre-edit point so callers
    always recurse on strictly smaller regions.
    """
    n, m = len(a), len(b)
    delta = n - m
    vf = {1: 0}
    vb = {1: 0}
    max_d = (n + m + 1) // 2 + 1
    for d in range(max_d + 1):
        for k in range(-d, d + 1, 2):
            down = k == -d or (k != d and vf[k - 1] < vf[k + 1])
            x = vf[k + 1] if down else vf[k - 1] + 1
            y = x - k
            x0, y0 = x, y
            while x < n and y < m and a[x] == b[y]:
                x += 1
                y += 1
            vf[k] = x
            if delta % 2 != 0 and -(d - 1) <= delta - k <= d - 1:
                if vf[k] + vb[delta - k] >= n:
                    if (x0, y0) == (x, y) == (n, m):
                        # Empty snake at the corner: split before the edit.
                        return ((n, m - 1, n, m - 1) if down else (n - 1, m, n - 1, m))
                    return x0, y0, x, y
        for k in range(-d, d + 1, 2):
            down = k == -d or (k != d and vb[k - 1] < vb[k + 1])
            x = vb[k + 1] if down else vb[k - 1] + 1
            y = x - k
            x0, y0 = x, y
            while x < n and y < m and a[n - 1 - x] == b[m - 1 - y]:
                x += 1
                y += 1
            vb[k] = x
            if delta % 2 == 0 and -d <= delta - k <= d:
                if vb[k] + vf[delta - k] >= n:
                    # Translate from reverse to forward coordinates.
                    sx, sy = n - x, m - y
                    ex, ey = n - x0, m - y0
                    if (sx, sy) == (ex, ey) == (0, 0):
                        return ((0, 1, 0, 1) if down else (1, 0, 1, 0))
                    return sx, sy, ex, ey
    raise AssertionError("middle snake not found")  # unreachable


def _match_pairs(a, b, a0, a1, b0, b1, out: list) -> None:
    while a0 < a1 and b0 < b1 and a[a0] == b[b0]:
        out.append((a0, b0))
        a0 += 1
        b0 += 1
    tail = []
    while a1 > a0 and b1 > b0 and a[a1 - 1] == b[b1 - 1]:
        a1 -= 1
        b1 -= 1
        tail.append((a1, b1))
    if a1 > a0 and b1 > b0:
        x, y, u, v = _middle_snake(a[a0:a1], b[b0:b1])
        _match_pairs(a, b, a0, a0 + x, b0, b0 + y, out)
        for i in range(u - x):
            out.append((a0 + x + i, b0 + y + i))
        _match_pairs(a, b, a0 + u, a1, b0 + v, b1, out)
    out.extend(reversed(tail))


def line_diff(old_text: str, new_text: str) -> DiffResult:
    """LCS line diff: lines of each side not in a longest common subsequence.

    A line modified between revisions therefore shows up once in
    deleted_lines and once in added_lines.
    """
    a_lines = old_text.splitlines()
    b_lines = new_text.splitlines()
    ids: dict[str, int] = {}
    a = [ids.setdefault(line, len(ids)) for line in a_lines]
    b = [ids.setdefault(line, len(ids)) for line in b_lines]
    matches: list[tuple[int, int]] = []
    _match_pairs(a, b, 0, len(a), 0, len(b), matches)
    matched_a = {i for i, _ in matches}
    matched_b = {j for _, j in matches}
    return DiffResult(
        added_lines=[line for j, line in enumerate(b_lines) if j not in matched_b],
        deleted_lines=[line for i, line in enumerate(a_lines) if i not in matched_a],
    )


# ---------------------------------------------------------------------------
# near-duplicate detection
# ---------------------------------------------------------------------------

def char_trigrams(text: str) -> set[str]:
    """Set of character trigrams of the lowercased text."""
    lowered = text.lower()
    return {lowered[i:i + 3] for i in range(len(lowered) - 2)}


def trigram_jaccard(a: str, b: str) -> float:
    """Jaccard similarity of the two texts' character-trigram sets.

    Both empty -> 1.0; exactly one empty -> 0.0.
    """
    set_a, set_b = char_trigrams(a), char_trigrams(b)
    if not set_a and not set_b:
        return 1.0
    if not set_a or not set_b:
        return 0.0
    return len(set_a & set_b) / len(set_a | set_b)


def dedup_sentences(sentences: Sequence, threshold: float = 0.75,
                    key: Callable | None = None) -> list:
    """Greedy near-duplicate filter in input order.

    An item is retained iff its similarity to every already-retained item is
    <= threshold.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    retained = []
    retained_sets: list[set[str]] = []
    for item in sentences:
        text = key(item) if key is not None else item
        grams = char_trigrams(text)
        keep = True
        for other in retained_sets:
            if not grams and not other:
                sim = 1.0
            elif not grams or not other:
                sim = 0.0
            else:
                sim = len(grams & other) / len(grams | other)
            if sim > threshold:
                keep = False
                break
        if keep:
            retained.append(item)
            retained_sets.append(grams)
    return retained


# ---------------------------------------------------------------------------
# coarse POS tagging
# ---------------------------------------------------------------------------

_NUMERAL = re.compile(r"^\d[\d,.]*$")

_NUMBER_WORDS = {
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight",
    "nine", "ten", "eleven", "twelve", "thirteen", "fourteen", "fifteen",
    "sixteen", "seventeen", "eighteen", "nineteen", "twenty", "thirty",
    "forty", "fifty", "sixty", "seventy", "eighty", "ninety", "hundred",
    "thousand", "million", "billion", "dozen",
}

_LEXICON = {
    **{w: "DET" for w in (
        "the a an this that these those each every some any no all both "
        "either neither another such").split()},
    **{w: "PREP" for w in (
        "of in on at by with from to for into onto over under between among "
        "amid during through after before above below against within without "
        "across around near since until upon per toward towards").split()},
    **{w: "PRON" for w in (
        "i you he she it we they me him her us them who whom which what whose "
        "its his their my your our itself themselves").split()},
    **{w: "CONJ" for w in (
        "and or but nor so yet because although though while if when whereas "
        "than unless").split()},
    **{w: "VERB" for w in (
        "is are was were be been being am has have had do does did will would "
        "can could may might must shall should said says say reported report "
        "became become remain remains").split()},
    **{w: "ADV" for w in (
        "very not also however often never always already approximately "
        "currently recently now then there here more most only about "
        "respectively").split()},
    **{w: "ADJ" for w in (
        "new total confirmed suspected probable first second third last other "
        "several many few high low severe fatal same additional").split()},
    **{w: "NUM" for w in _NUMBER_WORDS},
}

_SUFFIX_RULES = (
    ("ly", "ADV"),
    ("ing", "VERB"),
    ("ed", "VERB"),
    ("tion", "NOUN"),
    ("sion", "NOUN"),
    ("ment", "NOUN"),
    ("ness", "NOUN"),
    ("ship", "NOUN"),
    ("ity", "NOUN"),
    ("ous", "ADJ"),
    ("ful", "ADJ"),
    ("ive", "ADJ"),
    ("ible", "ADJ"),
    ("able", "ADJ"),
    ("al", "ADJ"),
    ("ic", "ADJ"),
    ("er", "NOUN"),
    ("or", "NOUN"),
    ("ist", "NOUN"),
)


def _tag_word(token: str) -> str:
    if all(ch in ".,;:!?()[]{}\"'`-–—/\\|" for ch in token):
        return "PUNCT"
    if _NUMERAL.match(token):
        return "NUM"
    lowered = token.lower()
    if lowered in _LEXICON:
        return _LEXICON[lowered]
    if "-" in lowered:
        parts = [p for p in lowered.split("-") if p]
        if parts and all(p in _NUMBER_WORDS or _NUMERAL.match(p) for p in parts):
            return "NUM"
    if len(lowered) > 3:
        for suffix, tag in _SUFFIX_RULES:
            if lowered.endswith(suffix):
                return tag
        if lowered.endswith("s") and not lowered.endswith("ss"):
            return "NOUN"
    return "OTHER"


def pos_tag(tokens: Sequence[str]) -> list[str]:
    """Deterministic rule/lexicon tagger over the coarse tagset."""
    return [_tag_word(tok) for tok in tokens]


# ---------------------------------------------------------------------------
# IOB TSV format
# ---------------------------------------------------------------------------

def write_iob_tsv(sentences: Iterable[Sequence[LabeledToken]], destination) -> None:
    """Write token<TAB>pos<TAB>label lines, blank line between sentences.

    UTF-8, LF line endings, no BOM.
    """
    own = isinstance(destination, (str, bytes)) or hasattr(destination, "__fspath__")
    handle: TextIO = (
        open(destination, "w", encoding="utf-8", newline="\n") if own else destination
    )
    try:
        first = True
        for sentence in sentences:
            if not first:
                handle.write("\n")
            first = False
            for tok in sentence:
                handle.write(f"{tok.token}\t{tok.pos}\t{tok.label}\n")
    finally:
        if own:
            handle.close()


def read_iob_tsv(source, strict: bool = True) -> list[list[LabeledToken]]:
    """Parse an IOB TSV file back into sentences of LabeledToken.

    Rejects unknown labels and wrong column counts. An I-X token whose
    predecessor is not B-X/I-X is an error in strict mode; in lenient mode it
    is repaired to B-X and logged.
    """
    own = isinstance(source, (str, bytes)) or hasattr(source, "__fspath__")
    handle: TextIO = open(source, "r", encoding="utf-8", newline="") if own else source
    sentences: list[list[LabeledToken]] = []
    current: list[LabeledToken] = []
    try:
        for line_number, raw in enumerate(handle, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line:
                if current:
                    sentences.append(current)
                    current = []
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise CorpusFormatError(
                    f"line {line_number}: expected 3 tab-separated fields, got {len(fields)}",
                    line_number=line_number,
                )
            token, pos, label = fields
            if label not in LABELS:
                raise CorpusFormatError(
                    f"line {line_number}: unknown label {label!r}",
                    line_number=line_number,
                )
            if label.startswith("I-"):
                prev = current[-1].label if current else None
                entity = label[2:]
                if prev not in (f"B-{entity}", f"I-{entity}"):
                    if strict:
                        raise CorpusFormatError(
                            f"line {line_number}: {label} not preceded by B-{entity}/I-{entity}",
                            line_number=line_number,
                        )
                    logger.warning(
                        "line %d: repairing dangling %s to B-%s", line_number, label, entity
                    )
                    label = f"B-{entity}"
            if not token:
                raise CorpusFormatError(
                    f"line {line_number}: empty token", line_number=line_number
                )
            current.append(LabeledToken(token=token, pos=pos, label=label))
        if current:
            sentences.append(current)
    finally:
        if own:
            handle.close()
    return sentences


# ---------------------------------------------------------------------------
# annotator agreement
# ---------------------------------------------------------------------------

def cohen_kappa(table: AgreementTable) -> float:
    """Chance-corrected agreement: (p_o - p_e) / (1 - p_e).

    Returns exactly 1.0 for perfect agreement (all off-diagonal counts zero).
    """
    n = table.n
    if n == 0:
        raise ValueError("agreement table is empty (n = 0)")
    size = len(table.labels)
    trace = sum(table.counts[i][i] for i in range(size))
    if trace == n:
        return 1.0
    p_o = trace / n
    row_sums = [sum(row) for row in table.counts]
    col_sums = [sum(table.counts[i][j] for i in range(size)) for j in range(size)]
    p_e = sum((row_sums[k] / n) * (col_sums[k] / n) for k in range(size))
    return (p_o - p_e) / (1.0 - p_e)


# ---------------------------------------------------------------------------
# corpus assembly
# ---------------------------------------------------------------------------

def build_corpus(revisions: Sequence, threshold: float = 0.75) -> list[list[LabeledToken]]:
    """Unlabeled (all-O), POS-tagged training corpus from a revision history.

    For each successive revision pair: strip markup (tables removed), take
    the line diff's added lines, split them into sentences, then
    near-duplicate-filter the whole collection in order and POS-tag.
    Empty (blanked) revisions are skipped.
    """
    sentences: list[Sentence] = []
    prev_plain: str | None = None
    for rev in revisions:
        if not rev.wikitext:
            continue
        plain = strip_markup(rev.wikitext, remove_tables=True)
        if prev_plain is not None:
            diff = line_diff(prev_plain, plain)
            for line in diff.added_lines:
                sentences.extend(split_sentences(line, source_revision=rev.revision_id))
        prev_plain = plain
    kept = dedup_sentences(sentences, threshold, key=lambda s: s.text)
    corpus = []
    for sent in kept:
        tags = pos_tag(sent.tokens)
        corpus.append([
            LabeledToken(token=tok, pos=tag, label="O")
            for tok, tag in zip(sent.tokens, tags)
        ])
    return corpus
