"""Attention annotations: n-grams from the above-threshold regions of the source."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import DecodeConfig, SourceDocument


@dataclass(frozen=True)
class AttentionAnnotation:
    entries: Mapping[tuple[int, ...], float]
    annotated_words: frozenset[int]
    threshold: float
    prefixes: frozenset[tuple[int, ...]] = field(default=frozenset(), repr=False)

    @classmethod
    def from_entries(cls, entries: Mapping[tuple[int, ...], float], threshold: float = 0.0) -> "AttentionAnnotation":
        entries = {tuple(k): float(v) for k, v in entries.items()}
        words = frozenset(t for k in entries for t in k)
        prefixes = frozenset(k[:i] for k in entries for i in range(1, len(k)))
        return cls(entries, words, threshold, prefixes)

    @classmethod
    def empty(cls) -> "AttentionAnnotation":
        return cls.from_entries({})

    @property
    def max_score(self) -> float:
        return max(self.entries.values(), default=0.0)

    def __len__(self) -> int:
        return len(self.entries)


def attention_threshold(attention: Sequence[float], percentile: float) -> float:
    """Nearest-rank percentile of the attention values."""
    values = np.sort(np.asarray(attention, dtype=np.float64))
    if values.size == 0:
        raise ValueError("empty attention vector")
    if not 0 <= percentile <= 100:
        raise ValueError("percentile must lie in [0, 100]")
    idx = math.ceil(percentile * values.size / 100) - 1
    idx = min(max(idx, 0), values.size - 1)
    return float(values[idx])


def binarize(attention: Sequence[float], tau: float) -> np.ndarray:
    return np.where(np.asarray(attention, dtype=np.float64) > tau, 1, -1)


def above_threshold_runs(mask: Sequence[int]) -> list[tuple[int, int]]:
    """Maximal half-open ``[start, stop)`` runs of +1 entries."""
    runs = []
    start = None
    for pos, m in enumerate(mask):
        if m > 0 and start is None:
            start = pos
        elif m <= 0 and start is not None:
            runs.append((start, pos))
            start = None
    if start is not None:
        runs.append((start, len(mask)))
    return runs


def extract_annotations(doc: SourceDocument, attention_t0: Sequence[float], cfg: DecodeConfig) -> AttentionAnnotation:
    attention = np.asarray(attention_t0, dtype=np.float64)
    if attention.shape != (len(doc),):
        raise ValueError(f"attention has length {attention.size}, document {doc.id} has {len(doc)} tokens")
    tau = attention_threshold(attention, cfg.percentile)
    mask = binarize(attention, tau)
    entries: dict[tuple[int, ...], float] = {}
    for start, stop in above_threshold_runs(mask):
        for n in range(1, min(stop - start, cfg.max_ngram) + 1):
            for i in range(start, stop - n + 1):
                ngram = doc.tokens[i:i + n]
                score = float(attention[i:i + n].mean())
                if score > entries.get(ngram, -1.0):
                    entries[ngram] = score
    return AttentionAnnotation.from_entries(entries, tau)
