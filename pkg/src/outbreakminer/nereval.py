"""Tagger evaluation: confusion counts, P/R/F1, k-fold CV, n-gram sweep.

Token-level scoring with B-X and I-X as distinct labels and O as background.
Cross-validation reports the unweighted mean of per-fold metrics; the fold
unit is the sentence.
"""

from __future__ import annotations

import logging
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import LABELS, LabeledToken
from .crf import FeatureConfig, train, viterbi, with_max_ngram
from .errors import TrainingError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def support(self) -> int:
        return self.tp + self.fn


@dataclass(frozen=True)
class LabelMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MetricsReport:
    """Cross-validation outcome: per-label and aggregate means over folds."""

    per_label: dict[str, LabelMetrics]
    aggregate: tuple[float, float, float]
    folds: int
    config: FeatureConfig

    def to_dict(self) -> dict:
        return {
            "kind": "metrics_report",
            "folds": self.folds,
            "config": {
                "max_ngram_len": self.config.max_ngram_len,
                "window": self.config.window,
                "use_pos": self.config.use_pos,
                "use_shape": self.config.use_shape,
                "l2_lambda": self.config.l2_lambda,
            },
            "aggregate": {
                "precision": self.aggregate[0],
                "recall": self.aggregate[1],
                "f1": self.aggregate[2],
            },
            "per_label": {
                label: {
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "support": m.support,
                }
                for label, m in self.per_label.items()
            },
        }


@dataclass(frozen=True)
class SweepRow:
    max_ngram_len: int
    precision: float
    recall: float
    f1: float


def score_labels(gold: Sequence[Sequence[str]], predicted: Sequence[Sequence[str]],
                 labels: Iterable[str] | None = None) -> dict[str, ConfusionCounts]:
    """Token-level confusion counts per non-O label.

    ``gold`` and ``predicted`` must have identical sentence/token structure.
    """
    if len(gold) != len(predicted):
        raise ValueError(
            f"gold has {len(gold)} sentences, predicted has {len(predicted)}"
        )
    for i, (g, p) in enumerate(zip(gold, predicted)):
        if len(g) != len(p):
            raise ValueError(
                f"sentence {i}: gold has {len(g)} tokens, predicted has {len(p)}"
            )
    if labels is None:
        seen = {lab for sent in gold for lab in sent}
        seen.update(lab for sent in predicted for lab in sent)
        labels = sorted(seen - {"O"})
    total = sum(len(sent) for sent in gold)
    counts = {}
    for label in labels:
        tp = fp = fn = 0
        for g_sent, p_sent in zip(gold, predicted):
            for g, p in zip(g_sent, p_sent):
                if g == label and p == label:
                    tp += 1
                elif p == label:
                    fp += 1
                elif g == label:
                    fn += 1
        counts[label] = ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=total - tp - fp - fn)
    return counts


def precision_recall_f1(counts: ConfusionCounts) -> tuple[float, float, float]:
    """P = tp/(tp+fp), R = tp/(tp+fn), F1 = 2PR/(P+R); 0/0 -> 0 throughout."""
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    f1 = (2 * precision * recall / (precision + recall)) if precision + recall else 0.0
    return precision, recall, f1


def k_fold_split(corpus: Sequence, k: int, seed: int) -> list[list]:
    """Shuffle sentences with the given seed, then deal round-robin into k folds."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k > len(corpus):
        raise ValueError(f"k={k} exceeds corpus size {len(corpus)}")
    order = list(range(len(corpus)))
    random.Random(seed).shuffle(order)
    folds: list[list] = [[] for _ in range(k)]
    for rank, idx in enumerate(order):
        folds[rank % k].append(corpus[idx])
    return folds


def _fold_counts(payload) -> dict[str, tuple[int, int, int, int]]:
    """Train on one fold's complement and score its held-out sentences."""
    train_set, test_set, config, max_iter = payload
    model = train(train_set, config, max_iter=max_iter)
    gold = [[tok.label for tok in sent] for sent in test_set]
    predicted = []
    for sent in test_set:
        tokens = [tok.token for tok in sent]
        pos = [tok.pos for tok in sent]
        predicted.append(viterbi(model, tokens, pos).labels)
    counts = score_labels(gold, predicted, labels=[l for l in LABELS if l != "O"])
    return {label: (c.tp, c.fp, c.fn, c.tn) for label, c in counts.items()}


def cross_validate(corpus: Sequence[Sequence[LabeledToken]], config: FeatureConfig,
                   k: int = 10, seed: int = 0, *, max_iter: int = 150,
                   n_jobs: int = 1) -> MetricsReport:
    """Mean per-fold precision/recall/F1, per label and micro-aggregated.

    Folds train independently (optionally in parallel); results reduce in
    fold-index order so repeated runs are identical.
    """
    folds = k_fold_split(corpus, k, seed)
    payloads = []
    for i in range(k):
        train_set = [sent for j in range(k) if j != i for sent in folds[j]]
        payloads.append((train_set, folds[i], config, max_iter))

    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            try:
                fold_results = list(pool.map(_fold_counts, payloads))
            except TrainingError:
                raise
    else:
        fold_results = []
        for i, payload in enumerate(payloads):
            try:
                fold_results.append(_fold_counts(payload))
            except TrainingError as exc:
                raise TrainingError(f"fold {i}: {exc}", iteration=exc.iteration) from exc

    score_labels_list = [l for l in LABELS if l != "O"]
    per_label_acc = {label: [0.0, 0.0, 0.0, 0] for label in score_labels_list}
    agg_acc = [0.0, 0.0, 0.0]
    for result in fold_results:
        agg_tp = agg_fp = agg_fn = 0
        for label in score_labels_list:
            tp, fp, fn, tn = result[label]
            p, r, f1 = precision_recall_f1(ConfusionCounts(tp, fp, fn, tn))
            acc = per_label_acc[label]
            acc[0] += p
            acc[1] += r
            acc[2] += f1
            acc[3] += tp + fn
            agg_tp += tp
            agg_fp += fp
            agg_fn += fn
        p, r, f1 = precision_recall_f1(ConfusionCounts(agg_tp, agg_fp, agg_fn, 0))
        agg_acc[0] += p
        agg_acc[1] += r
        agg_acc[2] += f1

    per_label = {
        label: LabelMetrics(
            precision=acc[0] / k, recall=acc[1] / k, f1=acc[2] / k, support=acc[3]
        )
        for label, acc in per_label_acc.items()
    }
    aggregate = (agg_acc[0] / k, agg_acc[1] / k, agg_acc[2] / k)
    return MetricsReport(per_label=per_label, aggregate=aggregate, folds=k, config=config)


def sweep_ngram(corpus: Sequence[Sequence[LabeledToken]], k: int, seed: int,
                ngram_values: Iterable[int] = range(1, 13),
                config: FeatureConfig | None = None, *, max_iter: int = 150,
                n_jobs: int = 1) -> list[SweepRow]:
    """Cross-validate once per n-gram cap; one report row per cap."""
    base = config if config is not None else FeatureConfig()
    rows = []
    for value in ngram_values:
        report = cross_validate(
            corpus, with_max_ngram(base, value), k, seed,
            max_iter=max_iter, n_jobs=n_jobs,
        )
        rows.append(SweepRow(
            max_ngram_len=value,
            precision=report.aggregate[0],
            recall=report.aggregate[1],
            f1=report.aggregate[2],
        ))
        logger.info(
            "sweep cap %d: P %.3f R %.3f F1 %.3f",
            value, rows[-1].precision, rows[-1].recall, rows[-1].f1,
        )
    return rows
