import numpy as np
import pytest

from attnbeam.annotate import AttentionAnnotation
from attnbeam.core import PENALTY_FLOOR, DecodeConfig, DecodeError, Hypothesis, Mode, SourceDocument, StepOutput
from attnbeam.model import OracleModel, OracleSpec
from attnbeam.reward import WordAttentionTable, word_attention_table
from attnbeam.search import (
    decode,
    decode_corpus,
    decode_tree,
    expand_bs,
    expand_bsdar,
    post_inter_sibling_rerank,
    post_intra_sibling_rerank,
    pre_intra_sibling_rank,
)

END = 1
V = 30
ROOT = Hypothesis((), (), None)


def _step(scores, n_src=4):
    return StepOutput(np.asarray(scores, dtype=np.float64), np.full(n_src, 1 / n_src))


def _done(tokens, scores, penalized=False):
    tokens = tuple(tokens) + (END,)
    return Hypothesis(tokens, tuple(scores), tokens[:-1][:-1], penalized, True)


class TestExpandBS:
    def test_width_one_is_argmax(self):
        scores = np.random.default_rng(0).normal(size=V)
        (cand,) = expand_bs(ROOT, _step(scores), 1, END)
        assert cand.token_seq == (int(np.argmax(scores)),)

    def test_full_width_in_score_order(self):
        scores = np.random.default_rng(1).normal(size=V)
        cands = expand_bs(ROOT, _step(scores), V, END)
        assert [c.token_seq[0] for c in cands] == np.argsort(-scores, kind="stable").tolist()

    def test_matches_full_sort(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            scores = rng.integers(-5, 0, size=V).astype(float)  # plenty of ties
            got = [c.token_seq[0] for c in expand_bs(ROOT, _step(scores), 5, END)]
            assert got == sorted(range(V), key=lambda t: (-scores[t], t))[:5]

    def test_penalized_parent_children_stay_at_floor(self):
        parent = Hypothesis((4,), (PENALTY_FLOOR,), (), penalized=True)
        cands = expand_bs(parent, _step(np.zeros(V)), 3, END)
        assert all(c.penalized and c.step_log_scores[-1] == PENALTY_FLOOR for c in cands)


class TestExpandBSDAR:
    doc = SourceDocument.from_tokens("d", [3, 4, 5, 6])

    def test_reduces_to_bs(self):
        rng = np.random.default_rng(3)
        cfg = DecodeConfig(lam=0.0)
        for _ in range(20):
            out = StepOutput(rng.normal(size=V), rng.dirichlet(np.ones(4)))
            table = word_attention_table(out.attention, self.doc)
            a = expand_bsdar(ROOT, out, 7, table, AttentionAnnotation.empty(), cfg, END)
            b = expand_bs(ROOT, out, 7, END)
            assert [(h.token_seq, h.step_log_scores) for h in a] == [(h.token_seq, h.step_log_scores) for h in b]

    def test_partial_candidate_sinks(self):
        annot = AttentionAnnotation.from_entries({(4, 5): 0.4})
        parent = Hypothesis((9,), (-1.0,), ())
        scores = np.full(V, -5.0)
        scores[4] = -0.1  # "9 4" is partial
        cands = expand_bsdar(parent, _step(scores), 5, WordAttentionTable({}), annot, DecodeConfig(), END)
        partial = [c for c in cands if c.token_seq == (9, 4)][0]
        assert partial.penalized and partial.step_log_scores[-1] == PENALTY_FLOOR
        assert cands[-1] is partial

    def test_full_match_outranks_equal_base(self):
        annot = AttentionAnnotation.from_entries({(4,): 0.3})
        cands = expand_bsdar(ROOT, _step(np.full(V, -2.0)), 5, WordAttentionTable({}), annot, DecodeConfig(), END)
        assert cands[0].token_seq == (4,)
        assert cands[0].step_log_scores[0] == pytest.approx(-2.0 + 0.6 + 0.6)


class TestPreIntra:
    def _cands(self, scores):
        return [ROOT.extend(10 + i, s, END, False) for i, s in enumerate(scores)]

    def test_fewer_than_k(self):
        assert len(pre_intra_sibling_rank(self._cands([-1.0, -2.0]), 3)) == 2

    def test_keeps_best_k(self):
        scores = [-3.0, -1.0, -7.0, -0.5, -2.0, -9.0, -4.0, -6.0, -8.0, -5.0]
        kept = pre_intra_sibling_rank(self._cands(scores), 3)
        assert [h.step_log_scores[0] for h in kept] == [-0.5, -1.0, -2.0]

    def test_ties_are_lexicographic(self):
        kept = pre_intra_sibling_rank(self._cands([-1.0] * 6)[::-1], 3)
        assert [h.token_seq for h in kept] == [(10,), (11,), (12,)]

    def test_completion_does_not_use_a_slot(self):
        cands = self._cands([-2.0, -3.0, -4.0, -5.0]) + [ROOT.extend(END, -0.1, END, False)]
        kept = pre_intra_sibling_rank(cands, 3)
        assert len(kept) == 4 and kept[0].completed


class TestPostIntra:
    def test_distinct_groups_unchanged(self):
        hyps = [_done((5,), (-1.0, -1.0)), _done((5, 6), (-1.0, -2.0, -1.0)), _done((6, 7), (-3.0, -1.0, -1.0))]
        assert post_intra_sibling_rerank(hyps) == hyps

    def test_best_sibling_survives(self):
        a = _done((5, 6), (-1.0, -1.0, -1.0))
        b = _done((5, 7), (-1.0, -3.0, -1.0))
        assert post_intra_sibling_rerank([b, a]) == [a]

    def test_group_by_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            hyps = {}
            for _ in range(25):
                n = int(rng.integers(1, 4))
                tokens = tuple(rng.integers(3, 7, size=n).tolist())
                hyps[tokens] = _done(tokens, tuple(rng.normal(size=n + 1)))
            groups = {}
            for h in hyps.values():
                key = (h.phrase[:-1], len(h.phrase))
                if key not in groups or h.running_score / len(h.token_seq) > \
                        groups[key].running_score / len(groups[key].token_seq):
                    groups[key] = h
            assert set(post_intra_sibling_rerank(hyps.values())) == set(groups.values())


class TestPostInter:
    def test_few_per_first_token_keep_order(self):
        hyps = [_done((5, 6 + i), (-1.0 - i, -1.0, -1.0)) for i in range(5)]
        assert post_inter_sibling_rerank(hyps) == hyps

    def test_overflow_is_demoted(self):
        same = [_done((5, 6 + i), (-1.0 - i, -1.0, -1.0)) for i in range(8)]
        other = _done((9,), (-20.0, -20.0))
        ranked = post_inter_sibling_rerank(same + [other])
        assert ranked == same[:5] + [other] + same[5:]

    def test_head_counts_bounded(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            hyps = {}
            for _ in range(40):
                tokens = tuple(rng.integers(3, 8, size=int(rng.integers(1, 4))).tolist())
                hyps[tokens] = _done(tokens, tuple(rng.normal(size=len(tokens) + 1)))
            ranked = post_inter_sibling_rerank(hyps.values(), k=5)
            assert sorted(ranked, key=id) == sorted(hyps.values(), key=id)
            n_first = len({h.token_seq[0] for h in hyps.values()})
            heads = ranked[:sum(min(5, sum(1 for h in hyps.values() if h.token_seq[0] == f))
                                for f in {h.token_seq[0] for h in hyps.values()})]
            counts = {}
            for h in heads:
                counts[h.token_seq[0]] = counts.get(h.token_seq[0], 0) + 1
            assert len(counts) == n_first and max(counts.values()) <= 5

    def test_penalized_after_unpenalized(self):
        bad = _done((5,), (PENALTY_FLOOR, PENALTY_FLOOR), penalized=True)
        good = _done((6,), (-30.0, -30.0))
        assert post_inter_sibling_rerank([bad, good]) == [good, bad]


class EndModel:
    """Puts almost all probability on `<end>` at every step."""

    def step(self, doc, prefix):
        scores = np.full(V, -30.0)
        scores[END] = -1e-9
        return StepOutput(scores, np.full(len(doc), 1 / len(doc)))


class FailingModel:
    def step(self, doc, prefix):
        raise RuntimeError("boom")


class TestDecode:
    doc = SourceDocument.from_tokens("d", [3, 4, 5, 6])

    def test_degenerate_end_model(self):
        for mode in Mode:
            cfg = DecodeConfig(beam_size_t0=1, beam_size=1, num_hyps=1, mode=mode)
            assert decode(EndModel(), self.doc, cfg) == []

    def test_planted_phrase_in_top5(self):
        model = OracleModel({"d": OracleSpec(planted_present=[(4, 5)], seed=1)}, V)
        top = [rp.phrase for rp in decode(model, self.doc, DecodeConfig())[:5]]
        assert (4, 5) in top

    def test_length_bias_pathology(self):
        doc = SourceDocument.from_tokens("p", [3, 4, 5, 6, 7, 8, 9])
        spec = OracleSpec(planted_present=[(5, 6, 7)], attention_gain=8.0, end_bias=32.0, seed=2)
        model = OracleModel({"p": spec}, V)
        bs = decode(model, doc, DecodeConfig(mode=Mode.BS))
        dar = decode(model, doc, DecodeConfig(mode=Mode.BSDAR))
        assert len(bs[0].phrase) == 1
        assert (5, 6, 7) in [rp.phrase for rp in dar[:5]]

    def test_tree_invariants(self, small_corpus):
        cfg = DecodeConfig(num_hyps=120, beam_size_t0=100)
        model = small_corpus.model()
        for doc in small_corpus.docs[:4]:
            tree = decode_tree(model, doc, cfg)
            assert tree.step_counter <= cfg.max_steps
            assert len(tree.live) <= cfg.num_hyps
            assert all(h.completed for h in tree.results)
            assert not {h.token_seq for h in tree.live} & {h.token_seq for h in tree.results}

    def test_ranked_phrases_shape(self, small_corpus):
        model = small_corpus.model()
        for mode in Mode:
            for doc in small_corpus.docs:
                ranked = decode(model, doc, DecodeConfig(mode=mode))
                phrases = [rp.phrase for rp in ranked]
                assert len(set(phrases)) == len(phrases)
                assert all(phrases) and all(END not in p for p in phrases)
                if mode is Mode.BS:
                    keys = [(-rp.score, rp.phrase) for rp in ranked]
                    assert keys == sorted(keys)

    def test_deterministic(self, small_corpus):
        model = small_corpus.model()
        doc = small_corpus.docs[0]
        assert decode(model, doc, DecodeConfig()) == decode(small_corpus.model(), doc, DecodeConfig())

    def test_model_failure_names_document(self):
        with pytest.raises(DecodeError, match="'d'"):
            decode(FailingModel(), self.doc, DecodeConfig())

    def test_parallel_matches_sequential(self, small_corpus):
        model = small_corpus.model()
        docs = small_corpus.docs[:6]
        assert decode_corpus(model, docs, DecodeConfig(), workers=2) == decode_corpus(model, docs, DecodeConfig())
