from __future__ import annotations

from dataclasses import dataclass

import pytest

from attnbeam.core import DecodeConfig, Mode, SourceDocument, Vocabulary
from attnbeam.corpus import (
    SyntheticCorpus,
    build_vocabulary,
    encode_gold,
    generate_corpus,
    to_documents,
)
from attnbeam.model import OracleModel, OracleSpec
from attnbeam.search import RankedPhrase, decode

ACCEPTANCE_LINES: list[str] = []


def report_criterion(number: int, title: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {title}  [{detail}]")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@dataclass
class OracleCorpus:
    synth: SyntheticCorpus
    vocab: Vocabulary
    docs: list[SourceDocument]
    gold: list[list[tuple[int, ...]]]
    specs: dict[str, OracleSpec]

    def model(self, max_steps: int = 6) -> OracleModel:
        return OracleModel(self.specs, len(self.vocab), max_steps=max_steps)


def encode_specs(synth: SyntheticCorpus, vocab: Vocabulary) -> dict[str, OracleSpec]:
    specs = {}
    for doc_id, rec in synth.specs.items():
        enc = dict(rec)
        for key in ("planted_present", "planted_absent"):
            enc[key] = [vocab.encode(p) for p in rec[key]]
        specs[doc_id] = OracleSpec.from_record(enc)
    return specs


def oracle_corpus(**kwargs) -> OracleCorpus:
    synth = generate_corpus(**kwargs)
    vocab = build_vocabulary(synth.records)
    docs = to_documents(synth.records, vocab)
    return OracleCorpus(synth, vocab, docs, encode_gold(synth.records, vocab), encode_specs(synth, vocab))


@pytest.fixture(scope="session")
def small_corpus() -> OracleCorpus:
    return oracle_corpus(n_docs=12, vocab_size=150, doc_len=(12, 25), seed=3)


@dataclass
class PathologyRun:
    corpus: OracleCorpus
    preds: dict[Mode, list[list[RankedPhrase]]]
    seconds: float


@pytest.fixture(scope="session")
def pathology() -> PathologyRun:
    """The length-bias corpus decoded once with every mode."""
    import time

    start = time.perf_counter()
    corpus = oracle_corpus(n_docs=100, vocab_size=1000, seed=0)
    model = corpus.model()
    preds = {mode: [decode(model, d, DecodeConfig(mode=mode)) for d in corpus.docs] for mode in Mode}
    return PathologyRun(corpus, preds, time.perf_counter() - start)
