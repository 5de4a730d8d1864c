"""Keyphrase metrics: recall@k, micro-averaged recall, ROUGE-L F1 and diversity."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .core import SourceDocument

Phrase = tuple[int, ...]

# Pooled first-token diversity of ground-truth keyphrases reported for the
# reference datasets; quoted in reports as a reference magnitude only.
REFERENCE_GOLD_DIVERSITY = 0.942


@dataclass(frozen=True)
class GoldSet:
    doc_id: str
    phrases: tuple[Phrase, ...]
    present_mask: tuple[bool, ...]

    @property
    def present(self) -> list[Phrase]:
        return [p for p, m in zip(self.phrases, self.present_mask) if m]

    @property
    def absent(self) -> list[Phrase]:
        return [p for p, m in zip(self.phrases, self.present_mask) if not m]


def split_present_absent(doc: SourceDocument, phrases: Iterable[Sequence[int]]) -> GoldSet:
    phrases = tuple(tuple(p) for p in phrases)
    return GoldSet(doc.id, phrases, tuple(doc.contains(p) for p in phrases))


def _matched(preds: Sequence[Phrase], gold: Sequence[Phrase], k: int) -> int:
    if k < 1:
        raise ValueError("k must be >= 1")
    top = {tuple(p) for p in preds[:k]}
    return sum(1 for g in gold if tuple(g) in top)


def recall_at_k(preds: Sequence[Phrase], gold: Sequence[Phrase], k: int) -> float | None:
    """Fraction of gold phrases found among the top ``k`` predictions.

    Returns None for an empty gold list.
    """
    if not gold:
        return None
    return _matched(preds, gold, k) / len(gold)


def micro_avg_recall(preds_per_doc: Sequence[Sequence[Phrase]], gold_per_doc: Sequence[Sequence[Phrase]], k: int) -> float:
    matched = total = 0
    for preds, gold in zip(preds_per_doc, gold_per_doc, strict=True):
        if not gold:
            continue
        matched += _matched(preds, gold, k)
        total += len(gold)
    return matched / total if total else 0.0


def lcs_length(a: Sequence, b: Sequence) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l_f1(pred: Sequence, gold: Sequence) -> float:
    lcs = lcs_length(pred, gold)
    if lcs == 0:
        return 0.0
    p = lcs / len(pred)
    r = lcs / len(gold)
    return 2 * p * r / (p + r)


def corpus_rouge_l(preds_per_doc: Sequence[Sequence[Phrase]], gold_per_doc: Sequence[Sequence[Phrase]]) -> float:
    """Mean over all gold phrases of the best ROUGE-L F1 against that document's predictions."""
    scores = []
    for preds, gold in zip(preds_per_doc, gold_per_doc, strict=True):
        for g in gold:
            scores.append(max((rouge_l_f1(p, g) for p in preds), default=0.0))
    return sum(scores) / len(scores) if scores else 0.0


def diversity_score(phrases: Sequence[Sequence]) -> float:
    """Distinct first tokens over the number of phrases."""
    if not phrases:
        raise ValueError("diversity of an empty phrase list is undefined")
    return len({p[0] for p in phrases}) / len(phrases)


@dataclass
class MetricsReport:
    dataset: str
    mode: str
    recall_at: dict[int, float] = field(default_factory=dict)
    micro_recall: float = 0.0
    rouge_l_f1: float = 0.0
    div_score: float = 0.0
    counts: dict[str, int] = field(default_factory=dict)

    def as_record(self) -> dict:
        rec = {"dataset": self.dataset, "mode": self.mode}
        for k in sorted(self.recall_at):
            rec[f"R@{k}"] = round(self.recall_at[k], 6)
        rec["R"] = round(self.micro_recall, 6)
        rec["rouge_l_f1"] = round(self.rouge_l_f1, 6)
        rec["div_score"] = round(self.div_score, 6)
        rec.update(self.counts)
        return rec
