"""Scikit-learn style wrapper around the seq2seq summarizer.

``Seq2SeqSummarizer`` exposes the fit/predict/score surface so the model
composes with pipelines, grid search and anything else speaking the
estimator protocol.  X is a sequence of source texts (code or diffs), y the
matching summaries.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import model
from .corpus import Corpus, Origin, Sample
from .metrics import MetricReport, evaluate_corpus
from .validation import check_same_length, check_text_list
from .vocab import Vocabulary


class Seq2SeqSummarizer(BaseEstimator):
    """Stacked-LSTM encoder-decoder with additive attention.

    Parameters mirror the training hyperparameters; all are plain values so
    ``get_params``/``set_params``/``clone`` behave as sklearn expects.

    Attributes set by ``fit``: ``params_`` (trained weights), ``vocab_src_``,
    ``vocab_tgt_`` (vocabularies built from the fit data), ``hyper_`` (the
    hyperparameters the weights were trained under; prediction uses these,
    so later ``set_params`` calls only affect future fits), and ``history_``
    (per-epoch loss and teacher-forced token accuracy).
    """

    def __init__(self, embed_dim: int = 128, hidden_dim: int = 256,
                 attn_dim: int = 128, num_layers: int = 2,
                 learning_rate: float = 1e-3, epochs: int = 10,
                 batch_size: int = 32, max_len: int = 40, seed: int = 0,
                 grad_clip_norm: float = 5.0, vocab_size: int = 20000,
                 vocab_mode: str = "word", attention: bool = True):
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.attn_dim = attn_dim
        self.num_layers = num_layers
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.max_len = max_len
        self.seed = seed
        self.grad_clip_norm = grad_clip_norm
        self.vocab_size = vocab_size
        self.vocab_mode = vocab_mode
        self.attention = attention

    def _hyper(self) -> model.Hyperparams:
        return model.Hyperparams(
            embed_dim=self.embed_dim,
            hidden_dim=self.hidden_dim,
            attn_dim=self.attn_dim,
            num_layers=self.num_layers,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            max_len=self.max_len,
            seed=self.seed,
            grad_clip_norm=self.grad_clip_norm,
            attention=self.attention,
        )

    def fit(self, X, y) -> "Seq2SeqSummarizer":
        """Train on (source text, summary text) pairs."""
        sources = check_text_list(X, "X")
        targets = check_text_list(y, "y")
        check_same_length(sources, targets)
        corpus = Corpus(
            samples=[
                Sample(id=f"fit-{i}", source=src, target=tgt,
                       origin=Origin.FUNCTION_PAIR)
                for i, (src, tgt) in enumerate(zip(sources, targets))
            ],
            provenance="fit",
        )
        self.vocab_src_ = Vocabulary.build(
            sources, mode=self.vocab_mode, max_size=self.vocab_size
        )
        self.vocab_tgt_ = Vocabulary.build(
            targets, mode=self.vocab_mode, max_size=self.vocab_size
        )
        self.hyper_ = self._hyper()
        self.params_, self.history_ = model.train(
            corpus, corpus, self.vocab_src_, self.vocab_tgt_, self.hyper_
        )
        return self

    def predict(self, X) -> list[str]:
        """Greedy-decode a summary for each source text."""
        check_is_fitted(self, "params_")
        sources = check_text_list(X, "X")
        return [
            model.summarize_text(src, self.params_, self.vocab_src_,
                                 self.vocab_tgt_, self.hyper_)
            for src in sources
        ]

    def score(self, X, y) -> float:
        """Mean sentence-level BLEU of predictions against ``y``."""
        predictions = self.predict(X)
        targets = check_text_list(y, "y")
        check_same_length(predictions, targets)
        return evaluate_corpus(list(zip(predictions, targets))).bleu

    def evaluate(self, X, y) -> MetricReport:
        """Full BLEU + ROUGE report of predictions against ``y``."""
        predictions = self.predict(X)
        targets = check_text_list(y, "y")
        check_same_length(predictions, targets)
        return evaluate_corpus(list(zip(predictions, targets)))
