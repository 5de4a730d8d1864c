"""Attention-rewarded beam search for keyphrase generation.

Three decoders share one engine: plain beam search (``Mode.BS``), beam search
with sibling re-ranking (``Mode.BS_PLUS``) and beam search with word- and
n-gram-level attention rewards (``Mode.BSDAR``). Any object with a
``step(doc, prefix) -> StepOutput`` method can drive them.
"""

from .annotate import AttentionAnnotation, attention_threshold, extract_annotations
from .core import (
    PENALTY_FLOOR,
    DecodeConfig,
    DecodeError,
    Hypothesis,
    Mode,
    SourceDocument,
    StepOutput,
    Vocabulary,
    joint_score,
)
from .corpus import CorpusRecord, generate_corpus, ingest_corpus
from .metrics import (
    MetricsReport,
    corpus_rouge_l,
    diversity_score,
    micro_avg_recall,
    recall_at_k,
    rouge_l_f1,
    split_present_absent,
)
from .model import OracleModel, OracleSpec, RecordingModel, TraceModel
from .reward import Tag, classify_sequence, ngram_adjust, word_attention_table, word_reward_augment
from .search import RankedPhrase, decode, decode_corpus, decode_tree

__all__ = [
    "PENALTY_FLOOR", "AttentionAnnotation", "CorpusRecord", "DecodeConfig", "DecodeError", "Hypothesis",
    "MetricsReport", "Mode", "OracleModel", "OracleSpec", "RankedPhrase", "RecordingModel", "SourceDocument",
    "StepOutput", "Tag", "TraceModel", "Vocabulary", "attention_threshold", "classify_sequence",
    "corpus_rouge_l", "decode", "decode_corpus", "decode_tree", "diversity_score", "extract_annotations",
    "generate_corpus", "ingest_corpus", "joint_score", "micro_avg_recall", "ngram_adjust", "recall_at_k",
    "rouge_l_f1", "split_present_absent", "word_attention_table", "word_reward_augment",
]
