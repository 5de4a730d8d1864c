"""Command-line harness: decode corpora, evaluate, sweep settings and generate synthetic data."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .annotate import extract_annotations
from .core import DecodeConfig, DecodeError, Mode, SourceDocument, Vocabulary
from .corpus import (
    CorpusRecord,
    build_vocabulary,
    encode_gold,
    generate_corpus,
    ingest_corpus,
    read_oracle_specs,
    to_documents,
    write_corpus,
    write_oracle_specs,
)
from .metrics import (
    REFERENCE_GOLD_DIVERSITY,
    MetricsReport,
    corpus_rouge_l,
    diversity_score,
    micro_avg_recall,
    split_present_absent,
)
from .model import OracleModel, RecordingModel, StepModel, TraceModel, write_trace
from .search import RankedPhrase, decode_corpus

log = logging.getLogger(__name__)

WORKERS_ENV = "ATTNBEAM_WORKERS"
DEFAULT_KS = (10, 50, 200)
ALL_MODES = (Mode.BS, Mode.BS_PLUS, Mode.BSDAR)


@dataclass(frozen=True)
class RunConfig:
    decode: DecodeConfig
    corpus: Path
    output_dir: Path
    oracle_spec: Path | None = None
    trace_dir: Path | None = None
    ks: tuple[int, ...] = DEFAULT_KS
    modes: tuple[Mode, ...] = ALL_MODES
    max_vocab: int | None = None
    workers: int = 1
    record_trace: Path | None = None

    def __post_init__(self):
        if (self.oracle_spec is None) == (self.trace_dir is None):
            raise ValueError("exactly one of --oracle-spec and --trace-dir must be given")
        if not self.ks or min(self.ks) < 1:
            raise ValueError("metric ks must be positive")


@dataclass
class Workspace:
    """Everything a run needs once the corpus and model are loaded."""

    records: list[CorpusRecord]
    vocab: Vocabulary
    docs: list[SourceDocument]
    gold: list[list[tuple[int, ...]]]
    model: StepModel
    dataset: str = field(default="corpus")


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _dump(obj) -> str:
    """JSON text with every float written to 6 decimals."""
    if isinstance(obj, float):
        return _fmt(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_dump(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_dump(v) for v in obj) + "]"
    return json.dumps(obj, ensure_ascii=False)


def load_workspace(cfg: RunConfig) -> Workspace:
    records = ingest_corpus(cfg.corpus)
    if not records:
        raise ValueError(f"{cfg.corpus}: corpus is empty")
    vocab = build_vocabulary(records, cfg.max_vocab)
    docs = to_documents(records, vocab)
    if cfg.oracle_spec is not None:
        specs = read_oracle_specs(cfg.oracle_spec, vocab)
        known = set(specs)
        for doc in docs:
            if doc.id in specs:
                specs[doc.id].validate(doc, cfg.decode.max_ngram)
        model: StepModel = OracleModel(specs, len(vocab), max_steps=cfg.decode.max_steps)
    else:
        tm = TraceModel.from_dir(cfg.trace_dir, len(vocab))
        known = set(tm.traces)
        model = tm
    missing = [d.id for d in docs if d.id not in known]
    if missing:
        shown = ", ".join(missing[:5]) + (" ..." if len(missing) > 5 else "")
        raise DecodeError(f"model has no entry for {len(missing)} document(s): {shown}")
    return Workspace(records, vocab, docs, encode_gold(records, vocab), model, Path(cfg.corpus).stem)


def run_mode(ws: Workspace, cfg: RunConfig, dcfg: DecodeConfig) -> list[list[RankedPhrase]]:
    # recording needs every step in this process
    workers = 1 if isinstance(ws.model, RecordingModel) else cfg.workers
    return decode_corpus(ws.model, ws.docs, dcfg, workers=workers)


def _start_recording(ws: Workspace, cfg: RunConfig) -> None:
    if cfg.record_trace is not None:
        ws.model = RecordingModel(ws.model)


def _finish_recording(ws: Workspace, cfg: RunConfig) -> None:
    if isinstance(ws.model, RecordingModel):
        out = Path(cfg.record_trace)
        out.mkdir(parents=True, exist_ok=True)
        for doc_id, trace in sorted(ws.model.records.items()):
            write_trace(out / f"{doc_id}.jsonl", trace)


def prediction_lines(ws: Workspace, preds: Sequence[Sequence[RankedPhrase]]) -> list[str]:
    lines = []
    for doc, ranked in zip(ws.docs, preds, strict=True):
        phrases = [{"tokens": ws.vocab.decode(rp.phrase), "score": rp.score, "penalized": rp.penalized}
                   for rp in ranked]
        lines.append(_dump({"id": doc.id, "phrases": phrases}))
    return lines


def evaluate(ws: Workspace, preds: Sequence[Sequence[RankedPhrase]], mode: Mode, ks: Sequence[int]) -> MetricsReport:
    """Metrics over documents that keep at least one gold phrase."""
    keep = [i for i, g in enumerate(ws.gold) if g]
    phrases = [[rp.phrase for rp in preds[i]] for i in keep]
    gold = [ws.gold[i] for i in keep]
    splits = [split_present_absent(ws.docs[i], ws.gold[i]) for i in keep]
    pooled = [p for ps in phrases for p in ps]
    report = MetricsReport(
        dataset=ws.dataset,
        mode=mode.value,
        recall_at={k: micro_avg_recall(phrases, gold, k) for k in ks},
        micro_recall=micro_avg_recall(phrases, gold, max(1, max(map(len, phrases), default=1))),
        rouge_l_f1=corpus_rouge_l(phrases, gold),
        div_score=diversity_score(pooled) if pooled else 0.0,
        counts={
            "n_docs": len(keep),
            "n_gold": sum(map(len, gold)),
            "n_present": sum(len(s.present) for s in splits),
            "n_absent": sum(len(s.absent) for s in splits),
            "n_preds": len(pooled),
        },
    )
    return report


def gold_diversity(ws: Workspace) -> float:
    pooled = [g for gs in ws.gold for g in gs]
    return diversity_score(pooled) if pooled else 0.0


def _record_line(report: MetricsReport) -> str:
    return _dump(report.as_record())


def report_table(ws: Workspace, reports: Sequence[MetricsReport], ks: Sequence[int]) -> str:
    header = [
        f"# reference gold diversity (pooled, published): {_fmt(REFERENCE_GOLD_DIVERSITY)}",
        f"# gold diversity (pooled, this corpus): {_fmt(gold_diversity(ws))}",
    ]
    cols = ["dataset", "mode", *(f"R@{k}" for k in ks), "R", "rouge_l_f1", "div_score",
            "n_docs", "n_gold", "n_present", "n_absent", "n_preds"]
    rows = ["\t".join(cols)]
    for r in reports:
        vals = [r.dataset, r.mode, *(_fmt(r.recall_at[k]) for k in ks), _fmt(r.micro_recall),
                _fmt(r.rouge_l_f1), _fmt(r.div_score), *(str(r.counts[c]) for c in cols[-5:])]
        rows.append("\t".join(vals))
    return "\n".join(header + rows) + "\n"


def _write_lines(path: Path, lines: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")


def cmd_decode(cfg: RunConfig) -> None:
    ws = load_workspace(cfg)
    _start_recording(ws, cfg)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    for mode in cfg.modes:
        preds = run_mode(ws, cfg, dataclasses.replace(cfg.decode, mode=mode))
        _write_lines(cfg.output_dir / f"predictions_{mode.name.lower()}.jsonl", prediction_lines(ws, preds))
    _finish_recording(ws, cfg)


def cmd_eval(cfg: RunConfig) -> None:
    ws = load_workspace(cfg)
    _start_recording(ws, cfg)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    reports = []
    for mode in cfg.modes:
        preds = run_mode(ws, cfg, dataclasses.replace(cfg.decode, mode=mode))
        _write_lines(cfg.output_dir / f"predictions_{mode.name.lower()}.jsonl", prediction_lines(ws, preds))
        reports.append(evaluate(ws, preds, mode, cfg.ks))
    _finish_recording(ws, cfg)
    _write_lines(cfg.output_dir / "metrics.jsonl", [_record_line(r) for r in reports])
    table = report_table(ws, reports, cfg.ks)
    (cfg.output_dir / "report.tsv").write_text(table, encoding="utf-8")
    sys.stdout.write(table)


def sweep_rows(ws: Workspace, cfg: RunConfig, axis: str, values: Sequence[int]) -> list[dict]:
    rows = []
    for mode in cfg.modes:
        for value in values:
            changes = {axis: value, "mode": mode}
            if axis == "beam_size":
                changes["beam_size_t0"] = max(cfg.decode.beam_size_t0, value)
                changes["num_hyps"] = max(cfg.decode.num_hyps, changes["beam_size_t0"])
            dcfg = dataclasses.replace(cfg.decode, **changes)
            preds = decode_corpus(ws.model, ws.docs, dcfg, workers=cfg.workers)
            report = evaluate(ws, preds, mode, (10, 50))
            rows.append({"mode": mode.value, axis: value, "R@10": report.recall_at[10],
                         "R@50": report.recall_at[50], "div_score": report.div_score})
    return rows


def cmd_sweep(cfg: RunConfig, axis: str, values: Sequence[int]) -> None:
    ws = load_workspace(cfg)
    rows = sweep_rows(ws, cfg, axis, values)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    lines = ["\t".join(["mode", axis, "R@10", "R@50", "div_score"])]
    for r in rows:
        lines.append("\t".join([r["mode"], str(r[axis]), _fmt(r["R@10"]), _fmt(r["R@50"]), _fmt(r["div_score"])]))
    _write_lines(cfg.output_dir / f"sweep_{axis}.tsv", lines)
    sys.stdout.write("\n".join(lines) + "\n")


def cmd_dump_annotations(cfg: RunConfig) -> None:
    ws = load_workspace(cfg)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for doc in ws.docs:
        annot = extract_annotations(doc, ws.model.step(doc, ()).attention, cfg.decode)
        for ngram, score in sorted(annot.entries.items(), key=lambda kv: (-kv[1], kv[0])):
            lines.append(_dump({"id": doc.id, "ngram": list(ngram), "score": score}))
    _write_lines(cfg.output_dir / "annotations.jsonl", lines)


def cmd_gen_corpus(args: argparse.Namespace) -> None:
    synth = generate_corpus(
        n_docs=args.n_docs,
        vocab_size=args.vocab_size,
        doc_len=(args.min_doc_len, args.max_doc_len),
        n_present=args.n_present,
        n_absent=args.n_absent,
        phrase_len=(args.min_phrase_len, args.max_phrase_len),
        attention_gain=args.attention_gain,
        end_bias=args.end_bias,
        distractor_gain=args.distractor_gain,
        seed=args.seed,
    )
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_corpus(out / "corpus.jsonl", synth.records)
    write_oracle_specs(out / "oracle_specs.jsonl", synth.specs)
    print(f"wrote {len(synth.records)} documents to {out}")


def _add_run_args(p: argparse.ArgumentParser, modes_default: Sequence[Mode]) -> None:
    d = DecodeConfig()
    p.add_argument("--corpus", type=Path, required=True, help="line-delimited corpus records")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--oracle-spec", type=Path, help="oracle spec file (one record per document)")
    src.add_argument("--trace-dir", type=Path, help="directory of <doc id>.jsonl step traces")
    p.add_argument("--output-dir", type=Path, required=True)
    p.add_argument("--modes", nargs="+", default=[m.value for m in modes_default],
                   help="decoder modes: BS, BS++, BSDAR")
    p.add_argument("--ks", nargs="+", type=int, default=list(DEFAULT_KS))
    p.add_argument("--max-vocab", type=int, default=None)
    p.add_argument("--record-trace", type=Path, default=None,
                   help="write the step outputs served during decoding to this directory")
    for f in dataclasses.fields(DecodeConfig):
        if f.name == "mode":
            continue
        p.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, type=type(getattr(d, f.name)),
                       default=getattr(d, f.name))


def _run_config(args: argparse.Namespace) -> RunConfig:
    dkw = {f.name: getattr(args, f.name) for f in dataclasses.fields(DecodeConfig) if f.name != "mode"}
    workers = int(os.environ.get(WORKERS_ENV, "1") or "1")
    return RunConfig(
        decode=DecodeConfig(**dkw),
        corpus=args.corpus,
        output_dir=args.output_dir,
        oracle_spec=args.oracle_spec,
        trace_dir=args.trace_dir,
        ks=tuple(args.ks),
        modes=tuple(Mode.parse(m) for m in args.modes),
        max_vocab=args.max_vocab,
        workers=max(1, workers),
        record_trace=args.record_trace,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="attnbeam", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decode", help="decode a corpus and write ranked phrases per document")
    _add_run_args(p, (Mode.BSDAR,))
    p = sub.add_parser("eval", help="decode and write metric records and a report table")
    _add_run_args(p, ALL_MODES)
    p = sub.add_parser("sweep", help="metrics as a function of beam size or maximum length")
    _add_run_args(p, ALL_MODES)
    p.add_argument("--axis", choices=("beam_size", "max_steps"), required=True)
    p.add_argument("--values", nargs="+", type=int, required=True)
    p = sub.add_parser("dump-annotations", help="write the attention annotation of every document")
    _add_run_args(p, (Mode.BSDAR,))

    p = sub.add_parser("gen-corpus", help="write a seeded synthetic corpus and its oracle specs")
    p.add_argument("--output-dir", type=Path, required=True)
    p.add_argument("--n-docs", type=int, default=100)
    p.add_argument("--vocab-size", type=int, default=1000)
    p.add_argument("--min-doc-len", type=int, default=30)
    p.add_argument("--max-doc-len", type=int, default=60)
    p.add_argument("--n-present", type=int, default=2)
    p.add_argument("--n-absent", type=int, default=1)
    p.add_argument("--min-phrase-len", type=int, default=1)
    p.add_argument("--max-phrase-len", type=int, default=5)
    p.add_argument("--attention-gain", type=float, default=8.0)
    p.add_argument("--end-bias", type=float, default=None, help="defaults to 4 x attention gain")
    p.add_argument("--distractor-gain", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "gen-corpus":
            cmd_gen_corpus(args)
            return 0
        cfg = _run_config(args)
        if args.command == "decode":
            cmd_decode(cfg)
        elif args.command == "eval":
            cmd_eval(cfg)
        elif args.command == "sweep":
            cmd_sweep(cfg, args.axis, args.values)
        elif args.command == "dump-annotations":
            cmd_dump_annotations(cfg)
    except (DecodeError, ValueError, OSError) as exc:
        print(f"attnbeam: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
