"""Wikitext handling: markup stripping, table extraction, sentences, tokens.

This is a hand-written single-pass scanner for the small markup subset the
pipeline needs (templates, links, refs, comments, tables, emphasis,
headings), not a general MediaWiki parser. Unbalanced constructs are dropped
through end-of-construct heuristics and logged rather than raised.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

logger = logging.getLogger(__name__)

# Namespaces whose [[...]] constructs are media/meta, not prose.
_DROP_LINK_NAMESPACES = ("file:", "image:", "category:")

# Word endings that suppress a sentence split, checked case-sensitively.
ABBREVIATIONS = frozenset({
    "Dr.", "Mr.", "Mrs.", "Ms.", "Prof.", "St.", "Gen.", "Lt.", "Col.",
    "U.S.", "U.K.", "U.N.", "D.C.", "E.U.",
    "approx.", "etc.", "e.g.", "i.e.", "vs.", "cf.", "no.", "No.", "pp.",
    "Jan.", "Feb.", "Mar.", "Apr.", "Jun.", "Jul.", "Aug.", "Sep.", "Sept.",
    "Oct.", "Nov.", "Dec.",
})

_SENTENCE_BOUNDARY = re.compile(r"[.?!](?:\[\d+\])*(?:\s+)(?=[A-Z0-9])")

_PUNCT_CHARS = set("!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~“”‘’«»…")


@dataclass(frozen=True)
class RawTable:
    """One wiki table: a header row plus rectangular data rows.

    Cell texts are markup-free. ``source_span`` holds (start, end) character
    offsets of the ``{| ... |}`` block in the originating wikitext.
    """

    header: list[str]
    rows: list[list[str]]
    source_span: tuple[int, int] = (0, 0)


@dataclass
class Sentence:
    """One sentence of plain text with its tokens."""

    text: str
    tokens: list[str] = field(default_factory=list)
    source_revision: int | None = None


# ---------------------------------------------------------------------------
# markup stripping
# ---------------------------------------------------------------------------

def _remove_comments(text: str) -> str:
    out = re.sub(r"<!--.*?-->", "", text, flags=re.DOTALL)
    # An unterminated comment swallows the rest of the text.
    idx = out.find("<!--")
    if idx != -1:
        logger.warning("unterminated HTML comment at offset %d; dropping tail", idx)
        out = out[:idx]
    return out


def _remove_refs(text: str) -> str:
    """Drop <ref .../> and <ref ...>...</ref> including their contents."""
    out = []
    pos = 0
    lower = text.lower()
    while True:
        start = lower.find("<ref", pos)
        if start == -1:
            out.append(text[pos:])
            break
        out.append(text[pos:start])
        gt = text.find(">", start)
        if gt == -1:
            logger.warning("unclosed <ref tag at offset %d; dropping rest of line", start)
            nl = text.find("\n", start)
            pos = len(text) if nl == -1 else nl
            continue
        if text[gt - 1] == "/":  # self-closing
            pos = gt + 1
            continue
        close = lower.find("</ref", gt)
        if close == -1:
            logger.warning("<ref> without </ref> at offset %d; dropping rest of line", start)
            nl = text.find("\n", gt)
            pos = len(text) if nl == -1 else nl
            continue
        close_gt = text.find(">", close)
        pos = len(text) if close_gt == -1 else close_gt + 1
    return "".join(out)


def _remove_paired_tag(text: str, tag: str) -> str:
    """Drop <tag>...</tag> blocks wholesale (gallery and similar)."""
    pattern = re.compile(rf"<{tag}\b[^>]*>.*?</{tag}\s*>", re.DOTALL | re.IGNORECASE)
    return pattern.sub("", text)


def _remove_balanced(text: str, open_tok: str, close_tok: str, label: str) -> str:
    """Remove every balanced open_tok...close_tok region, nesting-aware.

    Unbalanced openers drop through to end of text (logged); stray closers
    are left alone.
    """
    out = []
    pos = 0
    n = len(text)
    while pos < n:
        start = text.find(open_tok, pos)
        if start == -1:
            out.append(text[pos:])
            break
        out.append(text[pos:start])
        depth = 1
        scan = start + len(open_tok)
        while depth and scan < n:
            nxt_open = text.find(open_tok, scan)
            nxt_close = text.find(close_tok, scan)
            if nxt_close == -1:
                scan = n
                depth = 0
                logger.warning("unbalanced %s at offset %d; dropping to end", label, start)
                break
            if nxt_open != -1 and nxt_open < nxt_close:
                depth += 1
                scan = nxt_open + len(open_tok)
            else:
                depth -= 1
                scan = nxt_close + len(close_tok)
        pos = scan
    return "".join(out)


def _find_table_spans(text: str) -> list[tuple[int, int, int]]:
    """Locate ``{| ... |}`` blocks as (start, end, depth).

    ``end`` is the offset just past the closing ``|}``. Template syntax is
    guarded against: ``{|`` directly after ``{`` and ``|}`` directly before
    ``}`` are not table markers. Unclosed blocks run to end of text.
    """
    spans = []
    stack = []
    i = 0
    n = len(text)
    while i < n - 1:
        two = text[i:i + 2]
        if two == "{|" and (i == 0 or text[i - 1] != "{"):
            stack.append(i)
            i += 2
        elif two == "|}" and stack and (i + 2 >= n or text[i + 2] != "}"):
            start = stack.pop()
            spans.append((start, i + 2, len(stack)))
            i += 2
        else:
            i += 1
    while stack:
        start = stack.pop()
        logger.warning("unclosed table block at offset %d; dropping to end", start)
        spans.append((start, n, len(stack)))
    return spans


def _remove_tables(text: str) -> str:
    spans = [(s, e) for s, e, depth in _find_table_spans(text) if depth == 0]
    for start, end in sorted(spans, reverse=True):
        text = text[:start] + text[end:]
    return text


def _replace_links(text: str) -> str:
    """Resolve [[...]] constructs: keep display text, drop media links."""
    out = []
    pos = 0
    n = len(text)
    while pos < n:
        start = text.find("[[", pos)
        if start == -1:
            out.append(text[pos:])
            break
        out.append(text[pos:start])
        depth = 1
        scan = start + 2
        while depth and scan < n:
            nxt_open = text.find("[[", scan)
            nxt_close = text.find("]]", scan)
            if nxt_close == -1:
                scan = n
                depth = 0
                logger.warning("unclosed [[ at offset %d; dropping to end", start)
                break
            if nxt_open != -1 and nxt_open < nxt_close:
                depth += 1
                scan = nxt_open + 2
            else:
                depth -= 1
                scan = nxt_close + 2
        inner = text[start + 2:max(start + 2, scan - 2)]
        if not inner.lower().startswith(_DROP_LINK_NAMESPACES):
            parts = _split_protected(inner, ("|",))
            kept = parts[-1] if len(parts) > 1 else parts[0]
            out.append(_replace_links(kept) if "[[" in kept else kept)
        pos = scan
    return "".join(out)


def _split_protected(text: str, seps: tuple[str, ...]) -> list[str]:
    """Split on separators occurring outside [[...]] and {{...}} nesting."""
    parts = []
    buf: list[str] = []
    depth = 0
    i = 0
    n = len(text)
    sep_lens = {s: len(s) for s in seps}
    while i < n:
        two = text[i:i + 2]
        if two in ("[[", "{{"):
            depth += 1
            buf.append(two)
            i += 2
            continue
        if two in ("]]", "}}"):
            depth = max(0, depth - 1)
            buf.append(two)
            i += 2
            continue
        if depth == 0:
            matched = None
            for sep in seps:
                if text.startswith(sep, i):
                    matched = sep
                    break
            if matched is not None:
                parts.append("".join(buf))
                buf = []
                i += sep_lens[matched]
                continue
        buf.append(text[i])
        i += 1
    parts.append("".join(buf))
    return parts


_EXTERNAL_LINK = re.compile(r"\[(?:https?|ftp)://\S*(?:\s+([^\]]*))?\]")
_HEADING = re.compile(r"^[ \t]*=+[ \t]*(.*?)[ \t]*=+[ \t]*$", re.MULTILINE)
_HTML_TAG = re.compile(r"</?[A-Za-z][^>\n]*>")
_LIST_MARKER = re.compile(r"^[*#:;]+\s*", re.MULTILINE)
_TABLE_MARKER = re.compile(r"\x00T(\d+)\x00")


def strip_markup(wikitext: str, remove_tables: bool = True) -> str:
    """Reduce wikitext to plain prose.

    Templates, refs (with contents), comments, heading/emphasis/list markers
    and link syntax are removed; piped and external links keep their display
    text. With ``remove_tables`` every ``{| ... |}`` block is dropped;
    otherwise table blocks pass through verbatim. Total function: never
    raises on malformed input.
    """
    table_blocks: list[str] = []
    if not remove_tables:
        # Shelve table blocks untouched so no other rule can alter them.
        spans = sorted((s, e) for s, e, d in _find_table_spans(wikitext) if d == 0)
        table_blocks = [wikitext[s:e] for s, e in spans]
        for idx in range(len(spans) - 1, -1, -1):
            s, e = spans[idx]
            wikitext = wikitext[:s] + f"\x00T{idx}\x00" + wikitext[e:]

    text = _remove_comments(wikitext)
    text = _remove_refs(text)
    text = _remove_paired_tag(text, "gallery")
    text = _remove_balanced(text, "{{", "}}", "template")
    if remove_tables:
        text = _remove_tables(text)
    text = _HEADING.sub(r"\1", text)
    text = _replace_links(text)
    text = _EXTERNAL_LINK.sub(lambda m: m.group(1) or "", text)
    text = _HTML_TAG.sub("", text)
    text = _LIST_MARKER.sub("", text)
    text = text.replace("'''", "").replace("''", "")

    if table_blocks:
        text = _TABLE_MARKER.sub(lambda m: table_blocks[int(m.group(1))], text)
    return text


# ---------------------------------------------------------------------------
# table parsing
# ---------------------------------------------------------------------------

_SPAN_ATTR = re.compile(r"(rowspan|colspan)\s*=\s*\"?(\d+)\"?", re.IGNORECASE)


def _parse_cell(raw: str) -> tuple[str, int, int]:
    """Split an optional attribute prefix off a cell.

    Returns (clean text, rowspan, colspan).
    """
    rowspan = colspan = 1
    parts = _split_protected(raw, ("|",))
    body = raw
    if len(parts) > 1:
        prefix = parts[0]
        # MediaWiki: text before a single top-level pipe is attributes, but
        # only treat it so when it actually looks like attribute syntax.
        if "=" in prefix and not re.search(r"[{}\[\]]", prefix):
            body = "|".join(parts[1:])
            for name, value in _SPAN_ATTR.findall(prefix):
                if name.lower() == "rowspan":
                    rowspan = max(1, int(value))
                else:
                    colspan = max(1, int(value))
    text = strip_markup(body, remove_tables=True)
    return " ".join(text.split()), rowspan, colspan


def _expand_spans(cell_rows: list[list[tuple[str, int, int]]]) -> list[list[str]]:
    """Duplicate rowspan/colspan cell values into a rectangular grid."""
    grid: list[list[str]] = []
    carry: dict[int, list] = {}  # column -> [value, rows remaining]
    for cells in cell_rows:
        row: list[str] = []
        col = 0
        queue = list(cells)
        while queue or (col in carry):
            if col in carry:
                value, remaining = carry[col]
                row.append(value)
                if remaining > 1:
                    carry[col][1] = remaining - 1
                else:
                    del carry[col]
                col += 1
                continue
            text, rowspan, colspan = queue.pop(0)
            for _ in range(colspan):
                row.append(text)
                if rowspan > 1:
                    carry[col] = [text, rowspan - 1]
                col += 1
        grid.append(row)
    return grid


def _parse_table_block(block: str, offset: int, revision_id=None) -> RawTable | None:
    """Parse one table block (nested tables already blanked out).

    Rows break at ``|-`` only, matching MediaWiki semantics; ``!`` and ``|``
    lines add cells to the current row. The first grid row is the header.
    """
    body = block
    if body.startswith("{|"):
        body = body[2:]
    stripped_tail = body.rstrip()
    if stripped_tail.endswith("|}"):
        body = stripped_tail[:-2]
    lines = body.split("\n")[1:]  # everything on the {| line is attributes

    cell_rows: list[list[tuple[str, int, int]]] = []
    current: list[tuple[str, int, int]] | None = None

    def flush():
        nonlocal current
        if current:
            cell_rows.append(current)
        current = None

    for line in lines:
        text = line.strip()
        if not text:
            continue
        if text.startswith("|-"):
            flush()
        elif text.startswith("|+"):
            continue  # caption
        elif text.startswith("!"):
            if current is None:
                current = []
            for chunk in _split_protected(text[1:], ("!!", "||")):
                current.append(_parse_cell(chunk.strip()))
        elif text.startswith("|"):
            if current is None:
                current = []
            for chunk in _split_protected(text[1:], ("||",)):
                current.append(_parse_cell(chunk.strip()))
        elif current:
            # Continuation of the previous cell's content.
            prev_text, rs, cs = current[-1]
            extra, _, _ = _parse_cell(text)
            current[-1] = ((prev_text + " " + extra).strip(), rs, cs)
    flush()

    if not cell_rows:
        logger.warning(
            "skipping table with no rows (revision %s, offset %d)", revision_id, offset
        )
        return None
    grid = _expand_spans(cell_rows)
    header = grid[0]
    width = len(header)
    if width == 0:
        logger.warning(
            "skipping table with empty header (revision %s, offset %d)", revision_id, offset
        )
        return None
    rows = []
    for row in grid[1:]:
        if len(row) < width:
            row = row + [""] * (width - len(row))
        rows.append(row[:width])
    return RawTable(header=header, rows=rows, source_span=(offset, offset + len(block)))


def parse_tables(wikitext: str, revision_id: int | None = None) -> list[RawTable]:
    """Extract every well-formed table as a RawTable, in document order.

    Nested tables yield their own RawTable; their markup is blanked out of
    the enclosing block so outer cells stay clean. Malformed blocks are
    skipped with a warning, never raised.
    """
    spans = _find_table_spans(wikitext)
    results: list[tuple[int, RawTable]] = []
    for start, end, depth in sorted(spans, key=lambda s: -s[2]):
        block = wikitext[start:end]
        for s2, e2, d2 in spans:
            if s2 > start and e2 <= end and d2 > depth:
                rel_s, rel_e = s2 - start, e2 - start
                block = block[:rel_s] + " " * (rel_e - rel_s) + block[rel_e:]
        table = _parse_table_block(block, start, revision_id)
        if table is not None:
            results.append((start, table))
    results.sort(key=lambda pair: pair[0])
    return [table for _, table in results]


# ---------------------------------------------------------------------------
# sentences and tokens
# ---------------------------------------------------------------------------

def _sentence_spans(text: str) -> list[tuple[int, int]]:
    """Sentence spans covering the whole input.

    Splits at ``[.?!]`` plus optional bracketed citation remnants plus
    whitespace before an uppercase letter or digit, unless the word ending
    at the punctuation is a known abbreviation.
    """
    spans = []
    prev = 0
    for match in _SENTENCE_BOUNDARY.finditer(text):
        punct_idx = match.start()
        word_start = punct_idx
        while word_start > 0 and not text[word_start - 1].isspace():
            word_start -= 1
        word = text[word_start:punct_idx + 1]
        if word in ABBREVIATIONS:
            continue
        spans.append((prev, match.end()))
        prev = match.end()
    if prev < len(text) or not spans:
        spans.append((prev, len(text)))
    return spans


def split_sentences(text: str, source_revision: int | None = None) -> list[Sentence]:
    """Split plain text into Sentence objects (tokenized, whitespace-trimmed).

    Lines are treated independently; blank output sentences are dropped.
    """
    sentences = []
    for line in text.split("\n"):
        for start, end in _sentence_spans(line):
            chunk = line[start:end].strip()
            if not chunk:
                continue
            tokens = tokenize(chunk)
            if not tokens:
                continue
            sentences.append(
                Sentence(text=chunk, tokens=tokens, source_revision=source_revision)
            )
    return sentences


def tokenize(sentence_text: str) -> list[str]:
    """Whitespace tokenizer that detaches leading/trailing punctuation.

    Internal punctuation survives, so "16,000" and "mother-to-child" stay
    single tokens while "died." becomes ["died", "."].
    """
    tokens: list[str] = []
    for chunk in sentence_text.split():
        leading: list[str] = []
        trailing: list[str] = []
        while chunk and chunk[0] in _PUNCT_CHARS:
            leading.append(chunk[0])
            chunk = chunk[1:]
        while chunk and chunk[-1] in _PUNCT_CHARS:
            trailing.append(chunk[-1])
            chunk = chunk[:-1]
        tokens.extend(leading)
        if chunk:
            tokens.append(chunk)
        tokens.extend(reversed(trailing))
    return tokens
