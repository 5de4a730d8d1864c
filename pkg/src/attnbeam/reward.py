"""Attention rewards and penalties applied to candidate log scores."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .annotate import AttentionAnnotation
from .core import PENALTY_FLOOR, SourceDocument


@dataclass(frozen=True)
class WordAttentionTable:
    """Mean attention per distinct source word."""

    table: Mapping[int, float]

    @property
    def max_score(self) -> float:
        return max(self.table.values(), default=0.0)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        words = np.fromiter(self.table.keys(), dtype=np.int64, count=len(self.table))
        values = np.fromiter(self.table.values(), dtype=np.float64, count=len(self.table))
        return words, values


def word_attention_table(attention: Sequence[float], doc: SourceDocument) -> WordAttentionTable:
    attention = np.asarray(attention, dtype=np.float64)
    if attention.shape != (len(doc),):
        raise ValueError("attention length does not match the document")
    return WordAttentionTable({w: float(attention[list(pos)].mean()) for w, pos in doc.position_index.items()})


def word_reward_augment(log_scores: np.ndarray, table: WordAttentionTable, lam: float) -> np.ndarray:
    """Add ``lam * mean_attention + lam * max_mean_attention`` to every source word."""
    out = np.array(log_scores, dtype=np.float64, copy=True)
    if not table.table:
        return out
    words, values = table.arrays()
    out[words] += lam * values + lam * table.max_score
    return out


class Tag(enum.Enum):
    FULL_MATCH = "full_match"
    PREFIX = "prefix"
    PARTIAL = "partial"
    NO_OVERLAP = "no_overlap"


@dataclass(frozen=True)
class SeqClass:
    tag: Tag
    score: float = 0.0


def classify_sequence(seq: Sequence[int], annot: AttentionAnnotation, end: int | None = None) -> SeqClass:
    seq = tuple(seq)
    if end is not None and seq and seq[-1] == end:
        seq = seq[:-1]
    if not seq:
        raise ValueError("cannot classify an empty sequence")
    score = annot.entries.get(seq)
    if score is not None:
        return SeqClass(Tag.FULL_MATCH, score)
    if seq in annot.prefixes:
        return SeqClass(Tag.PREFIX)
    if any(t in annot.annotated_words for t in seq):
        return SeqClass(Tag.PARTIAL)
    return SeqClass(Tag.NO_OVERLAP)


def ngram_adjust(
    cls: SeqClass,
    base_log_score: float,
    lam: float,
    penalty_prob: float = -0.05,
    max_annotation_score: float = 0.0,
) -> tuple[float, bool]:
    """Adjusted last-token score and penalized flag for one candidate.

    ``penalty_prob`` is the invalid (negative) probability marking a penalty;
    it is realized as ``PENALTY_FLOOR`` in the log domain.
    """
    if cls.tag is Tag.FULL_MATCH:
        return base_log_score + lam * cls.score + lam * max_annotation_score, False
    if cls.tag is Tag.PARTIAL:
        if penalty_prob >= 0:
            raise ValueError("penalty_prob must be a negative (invalid) probability")
        return PENALTY_FLOOR, True
    return base_log_score, False
