"""Deterministic synthetic training corpus for the tagger.

Template sentences plant DEATHS/INFECTIONS/HOSPITALIZATIONS count phrases
amid background prose. Numbers, places and dates are drawn per sentence, so
held-out folds see surface forms the training folds never contained; the
tagger has to lean on shape and context features rather than memorized
tokens. Includes distractor sentences where entity head words ("cases")
appear without a count.
"""

from __future__ import annotations

import random

from .corpus import LabeledToken, pos_tag

PLACES = (
    "Guinea", "Liberia", "Sierra Leone", "Nigeria", "Senegal", "Mali",
    "Spain", "Conakry", "Monrovia", "Freetown", "Lagos", "Dakar", "Kenema",
)
ORGS = ("the WHO", "the CDC", "UNICEF", "MSF", "the Red Cross")
MONTHS = ("March", "April", "May", "June", "July", "August", "September", "October")
NUMBER_WORDS = (
    "twelve", "twenty", "forty", "sixty-five", "seventy", "ninety", "eleven",
)


def _number(rng: random.Random) -> str:
    if rng.random() < 0.25:
        value = rng.randint(1000, 90000)
        return f"{value:,}"
    return str(rng.randint(2, 980))


def _date(rng: random.Random) -> str:
    return f"{rng.randint(1, 28)} {rng.choice(MONTHS)} 2014"


def _count_phrase(rng: random.Random, entity: str) -> list[tuple[str, str]]:
    """(token, label) pairs for one count phrase of the given entity type."""
    num = _number(rng)
    b, i = f"B-{entity}", f"I-{entity}"
    if entity == "INFECTIONS":
        shapes = (
            [(num, b), ("cases", i)],
            [(num, b), ("new", i), ("cases", i)],
            [(num, b), ("confirmed", i), ("cases", i)],
            [("more", "O"), ("than", "O"), (num, b), ("cases", i)],
            [(num, b), ("patients", i)],
            [("a", "O"), ("total", "O"), ("of", "O"), (num, b), ("infections", i)],
            [(rng.choice(NUMBER_WORDS), b), ("cases", i)],
        )
    elif entity == "DEATHS":
        shapes = (
            [(num, b), ("deaths", i)],
            [(num, b), ("dead", i)],
            [(num, b), ("fatalities", i)],
            [("at", "O"), ("least", "O"), (num, b), ("deaths", i)],
            [(rng.choice(NUMBER_WORDS), b), ("deaths", i)],
        )
    else:  # HOSPITALIZATIONS
        shapes = (
            [(num, b), ("hospitalizations", i)],
            [(num, b), ("hospitalized", i)],
            [(num, b), ("people", i), ("hospitalized", i)],
        )
    return list(rng.choice(shapes))


def _literal(text: str) -> list[tuple[str, str]]:
    return [(tok, "O") for tok in text.split()]


def _fill(rng: random.Random, template: tuple) -> list[tuple[str, str]]:
    out: list[tuple[str, str]] = []
    for part in template:
        if part == "{INF}":
            out.extend(_count_phrase(rng, "INFECTIONS"))
        elif part == "{DEATH}":
            out.extend(_count_phrase(rng, "DEATHS"))
        elif part == "{HOSP}":
            out.extend(_count_phrase(rng, "HOSPITALIZATIONS"))
        elif part == "{place}":
            out.extend(_literal(rng.choice(PLACES)))
        elif part == "{org}":
            out.extend(_literal(rng.choice(ORGS)))
        elif part == "{date}":
            out.extend(_literal(_date(rng)))
        else:
            out.extend(_literal(part))
    return out


_TEMPLATES = (
    ("On", "{date}", ", the ministry reported", "{INF}", "in", "{place}", "."),
    ("By", "{date}", ",", "{place}", "had recorded", "{INF}", ", including", "{DEATH}", "."),
    ("Officials in", "{place}", "confirmed", "{DEATH}", "on", "{date}", "."),
    ("The outbreak caused", "{INF}", "and", "{DEATH}", "in", "{place}", "."),
    ("{org}", "announced", "{HOSP}", "in", "{place}", "on", "{date}", "."),
    ("There were", "{INF}", "across", "{place}", "by", "{date}", "."),
    ("Doctors counted", "{HOSP}", ", while", "{DEATH}", "were recorded", "."),
    ("A report on", "{date}", "described", "{INF}", ", with", "{HOSP}", "."),
    ("{org}", "said", "{place}", "reported", "{DEATH}", "on", "{date}", "."),
    # Background and distractors.
    ("The virus continued to spread through", "{place}", "during the rainy season", "."),
    ("In some cases , symptoms appeared within two weeks", "."),
    ("Health workers from", "{org}", "traveled to", "{place}", "to assist", "."),
    ("The number of reported cases remained uncertain", "."),
    ("Hospitals in", "{place}", "struggled to isolate patients", "."),
)


def generate_labeled_corpus(n_sentences: int = 500, seed: int = 7) -> list[list[LabeledToken]]:
    """Labeled sentences, POS-tagged, reproducible for a given seed."""
    rng = random.Random(seed)
    corpus = []
    for i in range(n_sentences):
        template = _TEMPLATES[i % len(_TEMPLATES)]
        pairs = _fill(rng, template)
        tokens = [tok for tok, _ in pairs]
        labels = [lab for _, lab in pairs]
        tags = pos_tag(tokens)
        corpus.append([
            LabeledToken(token=tok, pos=tag, label=lab)
            for tok, tag, lab in zip(tokens, tags, labels)
        ])
    return corpus
