"""Beam-search drivers: plain BS, heuristic BS++ and attention-rewarded BSDAR."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Iterable, Sequence

import numpy as np

from .annotate import AttentionAnnotation, extract_annotations
from .core import (
    PENALTY_FLOOR,
    DecodeConfig,
    DecodeError,
    Hypothesis,
    Mode,
    SourceDocument,
    StepOutput,
    joint_score,
)
from .model import StepModel
from .reward import (
    WordAttentionTable,
    classify_sequence,
    ngram_adjust,
    word_attention_table,
    word_reward_augment,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RankedPhrase:
    phrase: tuple[int, ...]
    score: float
    penalized: bool = False


@dataclass
class BeamTree:
    live: list[Hypothesis] = field(default_factory=list)
    results: list[Hypothesis] = field(default_factory=list)
    step_counter: int = 0


def _top_tokens(scores: np.ndarray, width: int) -> np.ndarray:
    """Indices of the ``width`` best scores; ties go to the lower token index."""
    width = min(width, scores.size)
    if width < scores.size:
        cut = np.partition(-scores, width - 1)[width - 1]
        idx = np.flatnonzero(-scores <= cut)
    else:
        idx = np.arange(scores.size)
    order = np.lexsort((idx, -scores[idx]))
    return idx[order][:width]


def _hyp_order(hyp: Hypothesis) -> tuple:
    return (-hyp.running_score, hyp.token_seq)


def _cand_order(hyp: Hypothesis) -> tuple:
    return (-hyp.step_log_scores[-1], hyp.token_seq)


Scored = tuple[int, float, bool]  # token, adjusted last-token score, penalized


def _scored_bs(hyp: Hypothesis, step_out: StepOutput, width: int) -> list[Scored]:
    scores = step_out.log_scores
    tokens = _top_tokens(scores, width).tolist()
    if hyp.penalized:
        return [(t, PENALTY_FLOOR, True) for t in tokens]
    return [(t, float(scores[t]), False) for t in tokens]


def _scored_bsdar(
    hyp: Hypothesis,
    step_out: StepOutput,
    width: int,
    table: WordAttentionTable,
    annot: AttentionAnnotation,
    cfg: DecodeConfig,
    end: int,
) -> list[Scored]:
    augmented = word_reward_augment(step_out.log_scores, table, cfg.lam)
    tokens = _top_tokens(augmented, width).tolist()
    if hyp.penalized:
        return [(t, PENALTY_FLOOR, True) for t in tokens]
    max_p = annot.max_score
    scored = []
    for t in tokens:
        score, flag = float(augmented[t]), False
        if not (t == end and not hyp.token_seq):
            cls = classify_sequence(hyp.token_seq + (t,), annot, end)
            score, flag = ngram_adjust(cls, score, cfg.lam, cfg.penalty_prob, max_p)
        scored.append((t, score, flag))
    scored.sort(key=lambda c: (-c[1], c[0]))
    return scored


def _pre_intra(scored: list[Scored], k: int, end: int) -> list[Scored]:
    ranked = sorted(scored, key=lambda c: (-c[1], c[0]))
    words = [c for c in ranked if c[0] != end][:k]
    return sorted([c for c in ranked if c[0] == end] + words, key=lambda c: (-c[1], c[0]))


def expand_bs(hyp: Hypothesis, step_out: StepOutput, width: int, end: int) -> list[Hypothesis]:
    """Top-``width`` continuations by the model's own log scores."""
    return [hyp.extend(t, s, end, f) for t, s, f in _scored_bs(hyp, step_out, width)]


def expand_bsdar(
    hyp: Hypothesis,
    step_out: StepOutput,
    width: int,
    table: WordAttentionTable,
    annot: AttentionAnnotation,
    cfg: DecodeConfig,
    end: int,
) -> list[Hypothesis]:
    """Top-``width`` continuations after the word reward, then n-gram reward or penalty, re-sorted."""
    return [hyp.extend(t, s, end, f) for t, s, f in _scored_bsdar(hyp, step_out, width, table, annot, cfg, end)]


def pre_intra_sibling_rank(candidates: Sequence[Hypothesis], k: int) -> list[Hypothesis]:
    """Keep the ``k`` best word continuations of one parent by last-token score.

    A completion (`<end>`) does not extend the tree and is not subject to the cut.
    """
    ranked = sorted(candidates, key=_cand_order)
    words = [h for h in ranked if not h.completed][:k]
    return sorted([h for h in ranked if h.completed] + words, key=_cand_order)


def _sibling_key(hyp: Hypothesis) -> tuple[tuple[int, ...], int]:
    phrase = hyp.phrase
    return phrase[:-1], len(phrase)


def post_intra_sibling_rerank(results: Iterable[Hypothesis], k: int = 1) -> list[Hypothesis]:
    """Within each group of completed phrases sharing the same parent phrase and
    length, keep the ``k`` best by joint score."""
    groups: dict[tuple, list[Hypothesis]] = {}
    for hyp in results:
        groups.setdefault(_sibling_key(hyp), []).append(hyp)
    kept = []
    for members in groups.values():
        members.sort(key=lambda h: (-joint_score(h), h.token_seq))
        kept.extend(members[:k])
    return sorted(kept, key=lambda h: (-joint_score(h), h.token_seq))


def post_inter_sibling_rerank(results: Iterable[Hypothesis], k: int = 5) -> list[Hypothesis]:
    """At most ``k`` head entries per first token; the rest follow all heads.

    Penalized hypotheses are ordered after every unpenalized one.
    """
    def split(hyps):
        hyps = sorted(hyps, key=lambda h: (-joint_score(h), h.token_seq))
        heads, tail, seen = [], [], {}
        for h in hyps:
            first = h.token_seq[0]
            if seen.get(first, 0) < k:
                seen[first] = seen.get(first, 0) + 1
                heads.append(h)
            else:
                tail.append(h)
        return heads + tail

    results = list(results)
    return split(h for h in results if not h.penalized) + split(h for h in results if h.penalized)


def _to_ranked(hyps: Iterable[Hypothesis]) -> list[RankedPhrase]:
    seen = set()
    ranked = []
    for h in hyps:
        phrase = h.phrase
        if not phrase or phrase in seen:
            continue
        seen.add(phrase)
        ranked.append(RankedPhrase(phrase, joint_score(h), h.penalized))
    return ranked


def rank_results(results: Sequence[Hypothesis], cfg: DecodeConfig) -> list[RankedPhrase]:
    nonempty = [h for h in results if h.phrase]
    if cfg.mode is Mode.BS:
        ordered = sorted(nonempty, key=lambda h: (h.penalized, -joint_score(h), h.token_seq))
    else:
        ordered = post_inter_sibling_rerank(
            post_intra_sibling_rerank(nonempty, cfg.post_intra_top), cfg.post_inter_top)
    return _to_ranked(ordered)


def _n_valid(results: Iterable[Hypothesis]) -> int:
    """Completed hypotheses that count towards the result budget: non-empty and unpenalized."""
    return sum(1 for h in results if h.phrase and not h.penalized)


def decode(
    model: StepModel,
    doc: SourceDocument,
    cfg: DecodeConfig,
    end: int = 1,
    annotation: AttentionAnnotation | None = None,
) -> list[RankedPhrase]:
    """Decode one document and return its ranked phrases.

    ``annotation`` overrides the one extracted from the t=0 attention.
    """
    tree = decode_tree(model, doc, cfg, end, annotation)
    return rank_results(tree.results, cfg)


def decode_tree(
    model: StepModel,
    doc: SourceDocument,
    cfg: DecodeConfig,
    end: int = 1,
    annotation: AttentionAnnotation | None = None,
) -> BeamTree:
    def step(prefix):
        try:
            return model.step(doc, prefix)
        except Exception as exc:
            raise DecodeError(f"model step failed for document {doc.id!r} at prefix {list(prefix)}: {exc}") from exc

    tree = BeamTree(live=[Hypothesis((), (), None)])
    annot = annotation
    tables: dict[bytes, WordAttentionTable] = {}

    while tree.step_counter < cfg.max_steps and _n_valid(tree.results) < cfg.beam_size and tree.live:
        width = cfg.beam_size_t0 if tree.step_counter == 0 else cfg.beam_size
        # score candidates as plain tuples; only survivors become hypotheses
        pool = []
        for hyp in tree.live:
            out = step(hyp.token_seq)
            if cfg.mode is Mode.BSDAR:
                if annot is None:
                    annot = extract_annotations(doc, out.attention, cfg)
                key = out.attention.tobytes()
                table = tables.get(key)
                if table is None:
                    table = tables[key] = word_attention_table(out.attention, doc)
                scored = _scored_bsdar(hyp, out, width, table, annot, cfg, end)
            else:
                scored = _scored_bs(hyp, out, width)
            if cfg.reranks:
                scored = _pre_intra(scored, cfg.pre_intra_top, end)
            prev = hyp.step_log_scores
            for t, score, flag in scored:
                pool.append((-math.fsum((*prev, score)), hyp.token_seq, t, score, flag, hyp))
        # live hypotheses share one length, so (parent seq, token) orders like the full sequence
        pool.sort(key=lambda e: e[:3])
        pool = [hyp.extend(t, score, end, flag) for _, _, t, score, flag, hyp in pool[:cfg.num_hyps]]
        tree.results.extend(h for h in pool if h.completed)
        tree.live = [h for h in pool if not h.completed]
        tree.step_counter += 1
    log.debug("doc %s: %d steps, %d results", doc.id, tree.step_counter, len(tree.results))
    return tree


def decode_corpus(
    model: StepModel,
    docs: Sequence[SourceDocument],
    cfg: DecodeConfig,
    end: int = 1,
    workers: int = 1,
) -> list[list[RankedPhrase]]:
    """Decode documents independently; output order follows ``docs``."""
    fn = partial(decode, model, cfg=cfg, end=end)
    if workers <= 1 or len(docs) <= 1:
        return [fn(d) for d in docs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, docs, chunksize=max(1, len(docs) // (4 * workers))))
