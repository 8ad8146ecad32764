"""Code summarization toolkit: corpus mining, seq2seq training, evaluation."""

from .corpus import (
    Corpus,
    CorpusFormatError,
    Histogram,
    Origin,
    Sample,
    SplitSpec,
    deduplicate,
    filter_by_length,
    length_histogram,
    load_jsonl,
    save_jsonl,
    split,
)
from .estimator import Seq2SeqSummarizer
from .gitmine import (
    CommitRecord,
    FileModification,
    MiningConfig,
    MiningError,
    clean_diff,
    clean_message,
    interleave,
    mine_repository,
    walk_commits,
)
from .metrics import (
    MetricReport,
    PrfScore,
    bleu,
    corpus_bleu,
    evaluate_corpus,
    modified_precision,
    rouge_l,
    rouge_n,
    rouge_w,
)
from .model import (
    CheckpointError,
    Hyperparams,
    ModelError,
    ModelParams,
    TrainingHistory,
    greedy_decode,
    load_checkpoint,
    save_checkpoint,
    summarize_text,
    train,
)
from .vocab import END, OOV, PAD, START, Vocabulary, pad_batch

__version__ = "0.1.0"

__all__ = [
    "Corpus", "CorpusFormatError", "Histogram", "Origin", "Sample",
    "SplitSpec", "deduplicate", "filter_by_length", "length_histogram",
    "load_jsonl", "save_jsonl", "split",
    "Seq2SeqSummarizer",
    "CommitRecord", "FileModification", "MiningConfig", "MiningError",
    "clean_diff", "clean_message", "interleave", "mine_repository",
    "walk_commits",
    "MetricReport", "PrfScore", "bleu", "corpus_bleu", "evaluate_corpus",
    "modified_precision", "rouge_l", "rouge_n", "rouge_w",
    "CheckpointError", "Hyperparams", "ModelError", "ModelParams",
    "TrainingHistory", "greedy_decode", "load_checkpoint", "save_checkpoint",
    "summarize_text", "train",
    "END", "OOV", "PAD", "START", "Vocabulary", "pad_batch",
    "__version__",
]
