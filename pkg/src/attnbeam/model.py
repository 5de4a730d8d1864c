"""Step models: the synthetic oracle, trace replay, and a recording wrapper."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import numpy as np
from scipy.special import log_softmax

from .core import DecodeError, SourceDocument, StepOutput

NUM_DISTRACTORS = 10
TRACE_FLOOR = -20.0


class StepModel(Protocol):
    def step(self, doc: SourceDocument, prefix: tuple[int, ...]) -> StepOutput: ...


@dataclass(frozen=True)
class OracleSpec:
    """Planted signal for one document.

    Phrases are token-index tuples. Present phrases must occur contiguously in
    the document, absent ones must not.
    """

    planted_present: tuple[tuple[int, ...], ...] = ()
    planted_absent: tuple[tuple[int, ...], ...] = ()
    attention_gain: float = 8.0
    end_bias: float = 3.0
    distractor_gain: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "planted_present", tuple(tuple(int(t) for t in p) for p in self.planted_present))
        object.__setattr__(self, "planted_absent", tuple(tuple(int(t) for t in p) for p in self.planted_absent))
        if self.attention_gain <= 1:
            raise ValueError("attention_gain must exceed 1")
        if self.end_bias < 0:
            raise ValueError("end_bias must be non-negative")

    def validate(self, doc: SourceDocument, max_ngram: int = 5) -> None:
        for phrase in self.planted_present + self.planted_absent:
            if not 1 <= len(phrase) <= max_ngram:
                raise ValueError(f"planted phrase {phrase} has length outside 1..{max_ngram}")
        for phrase in self.planted_present:
            if not doc.contains(phrase):
                raise ValueError(f"present phrase {phrase} does not occur in document {doc.id}")
        for phrase in self.planted_absent:
            if doc.contains(phrase):
                raise ValueError(f"absent phrase {phrase} occurs in document {doc.id}")

    def to_record(self) -> dict:
        return {
            "planted_present": [list(p) for p in self.planted_present],
            "planted_absent": [list(p) for p in self.planted_absent],
            "attention_gain": self.attention_gain,
            "end_bias": self.end_bias,
            "distractor_gain": self.distractor_gain,
            "seed": self.seed,
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "OracleSpec":
        return cls(
            planted_present=tuple(tuple(p) for p in rec.get("planted_present", ())),
            planted_absent=tuple(tuple(p) for p in rec.get("planted_absent", ())),
            attention_gain=float(rec.get("attention_gain", 8.0)),
            end_bias=float(rec.get("end_bias", 3.0)),
            distractor_gain=float(rec.get("distractor_gain", 1.0)),
            seed=int(rec.get("seed", 0)),
        )


def oracle_attention(spec: OracleSpec, doc: SourceDocument) -> np.ndarray:
    weights = np.ones(len(doc), dtype=np.float64)
    for phrase in spec.planted_present:
        n = len(phrase)
        for start in doc.position_index.get(phrase[0], ()):
            if doc.tokens[start:start + n] == phrase:
                weights[start:start + n] = spec.attention_gain
    return weights / weights.sum()


def distractor_tokens(spec: OracleSpec, vocab_size: int, reserved: Sequence[int] = (0, 1, 2)) -> np.ndarray:
    pool = np.array([i for i in range(vocab_size) if i not in set(reserved)], dtype=np.int64)
    rng = np.random.default_rng(spec.seed)
    k = min(NUM_DISTRACTORS, pool.size)
    return np.sort(rng.choice(pool, size=k, replace=False))


def oracle_step(
    spec: OracleSpec,
    doc: SourceDocument,
    prefix: Sequence[int],
    vocab_size: int,
    end: int = 1,
    max_steps: int = 6,
    distractors: np.ndarray | None = None,
) -> StepOutput:
    """One deterministic step of the synthetic model.

    Raw scores: ``attention_gain`` for any token continuing a planted phrase
    consistent with ``prefix``, ``end_bias`` for `<end>` when the prefix is a
    whole planted phrase (half of it otherwise), ``distractor_gain`` for the
    seeded distractor set, 0 elsewhere; then log-softmax.
    """
    prefix = tuple(prefix)
    if len(prefix) >= max_steps:
        raise DecodeError(f"prefix of length {len(prefix)} exceeds max_steps={max_steps}")
    if distractors is None:
        distractors = distractor_tokens(spec, vocab_size, reserved=(0, end, 2))
    raw = np.zeros(vocab_size, dtype=np.float64)
    raw[distractors] = spec.distractor_gain
    n = len(prefix)
    complete = False
    for phrase in spec.planted_present + spec.planted_absent:
        if phrase[:n] != prefix:
            continue
        if len(phrase) > n:
            raw[phrase[n]] = spec.attention_gain
        else:
            complete = True
    raw[end] = spec.end_bias if complete else 0.5 * spec.end_bias
    return StepOutput(log_softmax(raw), oracle_attention(spec, doc))


class OracleModel:
    """Synthetic step model keyed by document id."""

    def __init__(self, specs: Mapping[str, OracleSpec], vocab_size: int, end: int = 1, max_steps: int = 6):
        self.specs = dict(specs)
        self.vocab_size = vocab_size
        self.end = end
        self.max_steps = max_steps
        self._distractors = {
            doc_id: distractor_tokens(spec, vocab_size, reserved=(0, end, 2))
            for doc_id, spec in self.specs.items()
        }
        self._cache: dict[tuple[str, tuple[int, ...]], StepOutput] = {}

    def step(self, doc: SourceDocument, prefix: tuple[int, ...]) -> StepOutput:
        key = (doc.id, tuple(prefix))
        out = self._cache.get(key)
        if out is None:
            try:
                spec = self.specs[doc.id]
            except KeyError:
                raise DecodeError(f"no oracle spec for document {doc.id!r}") from None
            out = oracle_step(spec, doc, prefix, self.vocab_size, self.end,
                              self.max_steps, self._distractors[doc.id])
            self._cache[key] = out
        return out


def trace_step(trace: Mapping[tuple[int, ...], StepOutput], prefix: Sequence[int]) -> StepOutput:
    try:
        return trace[tuple(prefix)]
    except KeyError:
        raise DecodeError(f"trace has no record for prefix {list(prefix)}") from None


class TraceModel:
    """Replays recorded step outputs; one trace per document id."""

    def __init__(self, traces: Mapping[str, Mapping[tuple[int, ...], StepOutput]]):
        self.traces = dict(traces)

    @classmethod
    def from_dir(cls, directory: str | Path, vocab_size: int) -> "TraceModel":
        directory = Path(directory)
        if not directory.is_dir():
            raise ValueError(f"trace directory {directory} does not exist")
        traces = {}
        for path in sorted(directory.glob("*.jsonl")):
            traces[path.stem] = read_trace(path, vocab_size)
        return cls(traces)

    def step(self, doc: SourceDocument, prefix: tuple[int, ...]) -> StepOutput:
        try:
            trace = self.traces[doc.id]
        except KeyError:
            raise DecodeError(f"no trace for document {doc.id!r}") from None
        return trace_step(trace, prefix)


class RecordingModel:
    """Wraps a model and remembers every step output it served."""

    def __init__(self, inner: StepModel):
        self.inner = inner
        self.records: dict[str, dict[tuple[int, ...], StepOutput]] = {}

    def step(self, doc: SourceDocument, prefix: tuple[int, ...]) -> StepOutput:
        out = self.inner.step(doc, prefix)
        self.records.setdefault(doc.id, {})[tuple(prefix)] = out
        return out


def _fill_value(scores: np.ndarray) -> float:
    """Most frequent score (smallest on ties); entries equal to it are not written."""
    values, counts = np.unique(scores, return_counts=True)
    return float(values[np.argmax(counts)])


def write_trace(path: str | Path, trace: Mapping[tuple[int, ...], StepOutput]) -> None:
    if () not in trace:
        raise ValueError("trace must contain the empty prefix")
    with open(path, "w", encoding="utf-8") as fh:
        for prefix in sorted(trace, key=lambda p: (len(p), p)):
            out = trace[prefix]
            fill = _fill_value(out.log_scores)
            scores = {str(i): float(v) for i, v in enumerate(out.log_scores) if v != fill}
            rec = {"prefix": list(prefix), "fill": fill, "log_scores": scores,
                   "attention": [float(a) for a in out.attention]}
            fh.write(json.dumps(rec) + "\n")


def read_trace(path: str | Path, vocab_size: int) -> dict[tuple[int, ...], StepOutput]:
    trace: dict[tuple[int, ...], StepOutput] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                scores = np.full(vocab_size, float(rec.get("fill", TRACE_FLOOR)))
                for idx, val in rec["log_scores"].items():
                    scores[int(idx)] = float(val)
                out = StepOutput(scores, np.asarray(rec["attention"], dtype=np.float64))
                prefix = tuple(int(t) for t in rec["prefix"])
            except (KeyError, ValueError, TypeError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed trace record ({exc})") from exc
            trace[prefix] = out
    if () not in trace:
        raise ValueError(f"{path}: trace has no record for the empty prefix")
    return trace
