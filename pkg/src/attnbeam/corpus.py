"""Corpus records, line-delimited I/O and the seeded synthetic corpus generator."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import SourceDocument, Vocabulary
from .model import OracleSpec


@dataclass(frozen=True)
class CorpusRecord:
    id: str
    tokens: tuple[str, ...]
    keyphrases: tuple[tuple[str, ...], ...]

    def to_record(self) -> dict:
        return {"id": self.id, "tokens": list(self.tokens), "keyphrases": [list(k) for k in self.keyphrases]}


def _parse_record(obj, where: str) -> CorpusRecord:
    if not isinstance(obj, dict):
        raise ValueError(f"{where}: record must be an object")
    doc_id = obj.get("id")
    tokens = obj.get("tokens")
    keyphrases = obj.get("keyphrases", [])
    if not isinstance(doc_id, str) or not doc_id:
        raise ValueError(f"{where}: missing or invalid 'id'")
    if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
        raise ValueError(f"{where}: 'tokens' must be a list of strings")
    if not isinstance(keyphrases, list) or not all(
        isinstance(k, list) and all(isinstance(t, str) for t in k) for k in keyphrases
    ):
        raise ValueError(f"{where}: 'keyphrases' must be a list of token lists")
    tokens = tuple(t.lower() for t in tokens if t.strip())
    if not tokens:
        raise ValueError(f"{where}: document {doc_id!r} has no tokens")
    phrases = tuple(tuple(t.lower() for t in k if t.strip()) for k in keyphrases)
    return CorpusRecord(doc_id, tokens, tuple(p for p in phrases if p))


def ingest_corpus(path: str | Path) -> list[CorpusRecord]:
    """Read a line-delimited corpus; tokens are lowercased."""
    records: list[CorpusRecord] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{where}: malformed record ({exc.msg})") from None
            rec = _parse_record(obj, where)
            if rec.id in seen:
                raise ValueError(f"{where}: duplicate document id {rec.id!r}")
            seen.add(rec.id)
            records.append(rec)
    return records


def write_corpus(path: str | Path, records: Iterable[CorpusRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_record()) + "\n")


def build_vocabulary(records: Sequence[CorpusRecord], max_size: int | None = None) -> Vocabulary:
    words = [t for r in records for t in r.tokens]
    words += [t for r in records for k in r.keyphrases for t in k]
    return Vocabulary.build(words, max_size)


def to_documents(records: Sequence[CorpusRecord], vocab: Vocabulary) -> list[SourceDocument]:
    return [SourceDocument.from_tokens(r.id, vocab.encode(r.tokens)) for r in records]


def encode_gold(records: Sequence[CorpusRecord], vocab: Vocabulary) -> list[list[tuple[int, ...]]]:
    return [[vocab.encode(k) for k in r.keyphrases] for r in records]


# Oracle spec files store phrases as token strings so they survive vocabulary rebuilds.

def write_oracle_specs(path: str | Path, specs: Mapping[str, Mapping]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc_id, rec in specs.items():
            fh.write(json.dumps({"id": doc_id, **rec}) + "\n")


def read_oracle_specs(path: str | Path, vocab: Vocabulary) -> dict[str, OracleSpec]:
    specs = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                doc_id = rec["id"]
                encoded = dict(rec)
                for key in ("planted_present", "planted_absent"):
                    encoded[key] = [vocab.encode(p) for p in rec.get(key, [])]
                specs[doc_id] = OracleSpec.from_record(encoded)
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed oracle spec ({exc})") from exc
    return specs


@dataclass(frozen=True)
class SyntheticCorpus:
    records: list[CorpusRecord]
    specs: dict[str, dict]  # doc id -> oracle spec record with string phrases


def generate_corpus(
    n_docs: int = 100,
    vocab_size: int = 1000,
    doc_len: tuple[int, int] = (30, 60),
    n_present: int = 2,
    n_absent: int = 1,
    phrase_len: tuple[int, int] = (1, 5),
    attention_gain: float = 8.0,
    end_bias: float | None = None,
    distractor_gain: float = 1.0,
    seed: int = 0,
) -> SyntheticCorpus:
    """Documents with planted present and absent keyphrases.

    Planted phrases use distinct words, never repeat elsewhere in their
    document and are separated by at least one filler word. ``end_bias``
    defaults to ``4 * attention_gain``.
    """
    if end_bias is None:
        end_bias = 4.0 * attention_gain
    rng = np.random.default_rng(seed)
    words = np.array([f"w{i:04d}" for i in range(vocab_size)])
    lo, hi = phrase_len
    records, specs = [], {}
    width = len(str(max(n_docs - 1, 1)))
    for d in range(n_docs):
        lengths = rng.integers(lo, hi + 1, size=n_present + n_absent)
        chosen = rng.choice(vocab_size, size=int(lengths.sum()), replace=False)
        phrases, offset = [], 0
        for n in lengths:
            phrases.append(tuple(words[chosen[offset:offset + n]]))
            offset += n
        present, absent = phrases[:n_present], phrases[n_present:]
        planted = set(chosen.tolist())
        fillers = np.array([i for i in range(vocab_size) if i not in planted])
        n_tokens = max(int(rng.integers(doc_len[0], doc_len[1] + 1)),
                       sum(len(p) for p in present) + n_present + 1)
        n_filler = n_tokens - sum(len(p) for p in present)
        body = list(words[rng.choice(fillers, size=n_filler, replace=True)])
        # distinct gaps keep planted phrases out of each other's runs
        slots = np.sort(rng.choice(np.arange(1, n_filler + 1), size=n_present, replace=False))
        tokens: list[str] = []
        prev = 0
        for slot, phrase in zip(slots, present):
            tokens.extend(body[prev:slot])
            tokens.extend(phrase)
            prev = slot
        tokens.extend(body[prev:])
        doc_id = f"doc{d:0{width}d}"
        records.append(CorpusRecord(doc_id, tuple(tokens), tuple(present + absent)))
        specs[doc_id] = {
            "planted_present": [list(p) for p in present],
            "planted_absent": [list(p) for p in absent],
            "attention_gain": attention_gain,
            "end_bias": end_bias,
            "distractor_gain": distractor_gain,
            "seed": int(rng.integers(0, 2**31 - 1)),
        }
    return SyntheticCorpus(records, specs)
