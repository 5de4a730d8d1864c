"""Shared domain types: vocabulary, documents, step outputs, hypotheses and config."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

START = "<start>"
END = "<end>"
UNK = "<unk>"

# Per-token log score given to penalized hypotheses. Any genuine log-probability
# (plus bounded rewards) sits far above this.
PENALTY_FLOOR = -1e4


class DecodeError(Exception):
    """Raised for invalid decoding inputs or failed model steps."""


class Mode(str, enum.Enum):
    BS = "BS"
    BS_PLUS = "BS_PLUS"
    BSDAR = "BSDAR"

    @classmethod
    def parse(cls, value: str) -> "Mode":
        key = value.strip().upper().replace("++", "_PLUS").replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown decoding mode {value!r}") from None


class Vocabulary:
    """Dense token <-> index mapping with `<start>`, `<end>` and `<unk>` specials."""

    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        for special in (START, END, UNK):
            if special not in tokens:
                raise ValueError(f"vocabulary is missing special token {special}")
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary tokens must be unique")
        self.tokens = tuple(tokens)
        self._index = {tok: i for i, tok in enumerate(self.tokens)}
        self.start = self._index[START]
        self.end = self._index[END]
        self.unk = self._index[UNK]

    @classmethod
    def build(cls, words: Iterable[str], max_size: int | None = None) -> "Vocabulary":
        """Specials first, then distinct words in sorted order.

        With ``max_size`` the most frequent words are kept (ties broken by the
        word itself) so that the total size including specials is at most
        ``max_size``.
        """
        counts: dict[str, int] = {}
        for w in words:
            if w in (START, END, UNK):
                continue
            counts[w] = counts.get(w, 0) + 1
        kept = sorted(counts)
        if max_size is not None:
            budget = max(max_size - 3, 0)
            by_freq = sorted(counts, key=lambda w: (-counts[w], w))[:budget]
            kept = sorted(by_freq)
        return cls([START, END, UNK, *kept])

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def lookup(self, token: str) -> int:
        return self._index.get(token, self.unk)

    def token(self, index: int) -> str:
        return self.tokens[index]

    def encode(self, words: Sequence[str]) -> tuple[int, ...]:
        return tuple(self.lookup(w) for w in words)

    def decode(self, indices: Sequence[int]) -> list[str]:
        return [self.tokens[i] for i in indices]


def build_position_index(tokens: Sequence[int]) -> dict[int, tuple[int, ...]]:
    """Map every word index to the ascending positions where it occurs."""
    if len(tokens) == 0:
        raise DecodeError("empty document")
    index: dict[int, list[int]] = {}
    for pos, tok in enumerate(tokens):
        index.setdefault(int(tok), []).append(pos)
    return {w: tuple(p) for w, p in index.items()}


@dataclass(frozen=True)
class SourceDocument:
    id: str
    tokens: tuple[int, ...]
    position_index: Mapping[int, tuple[int, ...]] = field(repr=False, compare=False)

    @classmethod
    def from_tokens(cls, doc_id: str, tokens: Sequence[int]) -> "SourceDocument":
        tokens = tuple(int(t) for t in tokens)
        return cls(doc_id, tokens, build_position_index(tokens))

    def __len__(self) -> int:
        return len(self.tokens)

    def contains(self, phrase: Sequence[int]) -> bool:
        """True when ``phrase`` occurs contiguously in the document."""
        phrase = tuple(phrase)
        n = len(phrase)
        if n == 0:
            return False
        for start in self.position_index.get(phrase[0], ()):
            if self.tokens[start:start + n] == phrase:
                return True
        return False


@dataclass(frozen=True)
class StepOutput:
    """Next-token log-probabilities plus the attention over source positions."""

    log_scores: np.ndarray
    attention: np.ndarray

    def __post_init__(self):
        log_scores = np.asarray(self.log_scores, dtype=np.float64)
        attention = np.asarray(self.attention, dtype=np.float64)
        if log_scores.ndim != 1 or attention.ndim != 1:
            raise ValueError("log_scores and attention must be vectors")
        if not np.all(np.isfinite(log_scores)):
            raise ValueError("log_scores must be finite")
        if attention.size == 0 or np.any(attention < 0):
            raise ValueError("attention must be non-empty and non-negative")
        if abs(attention.sum() - 1.0) > 1e-6:
            raise ValueError(f"attention must sum to 1 (got {attention.sum():.9f})")
        log_scores.setflags(write=False)
        attention.setflags(write=False)
        object.__setattr__(self, "log_scores", log_scores)
        object.__setattr__(self, "attention", attention)


@dataclass(frozen=True)
class Hypothesis:
    """A node of the beam tree.

    ``token_seq`` excludes `<start>`; ``parent_id`` is the token sequence of the
    hypothesis this one was expanded from, which is unique within one tree.
    """

    token_seq: tuple[int, ...]
    step_log_scores: tuple[float, ...]
    parent_id: tuple[int, ...] | None
    penalized: bool = False
    completed: bool = False

    def __post_init__(self):
        if len(self.token_seq) != len(self.step_log_scores):
            raise ValueError("token_seq and step_log_scores differ in length")

    @property
    def running_score(self) -> float:
        return math.fsum(self.step_log_scores)

    @property
    def phrase(self) -> tuple[int, ...]:
        """Tokens without the trailing `<end>` of a completed hypothesis."""
        return self.token_seq[:-1] if self.completed else self.token_seq

    def extend(self, token: int, score: float, end: int, penalized: bool) -> "Hypothesis":
        return Hypothesis(
            self.token_seq + (int(token),),
            self.step_log_scores + (float(score),),
            self.token_seq,
            penalized,
            token == end,
        )


def joint_score(hyp: Hypothesis) -> float:
    """Length-normalized joint log score; `<end>` counts as a token."""
    if not hyp.token_seq:
        raise DecodeError("cannot score an empty hypothesis")
    return math.fsum(hyp.step_log_scores) / len(hyp.step_log_scores)


@dataclass(frozen=True)
class DecodeConfig:
    beam_size_t0: int = 100
    beam_size: int = 50
    num_hyps: int = 200
    max_steps: int = 6
    lam: float = 2.0
    penalty_prob: float = -0.05
    percentile: float = 10.0
    max_ngram: int = 5
    pre_intra_top: int = 3
    post_intra_top: int = 1
    post_inter_top: int = 5
    mode: Mode = Mode.BSDAR

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode.parse(self.mode) if isinstance(self.mode, str) else self.mode)
        counts = ("beam_size_t0", "beam_size", "num_hyps", "max_steps", "max_ngram",
                  "pre_intra_top", "post_intra_top", "post_inter_top")
        for name in counts:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.beam_size <= self.beam_size_t0 <= self.num_hyps:
            raise ValueError("require beam_size <= beam_size_t0 <= num_hyps")
        if not 0 <= self.percentile <= 100:
            raise ValueError("percentile must lie in [0, 100]")

    @property
    def reranks(self) -> bool:
        return self.mode is not Mode.BS
