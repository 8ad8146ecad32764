"""Text-overlap scoring: BLEU and ROUGE-{1,2,3,4,L,W} with p/r/f breakdown.

All scoring operates on token lists.  ``evaluate_corpus`` normalizes raw text
on both sides with the word tokenizer first, so casing and punctuation noise
do not dominate the overlap.  Empty candidates score 0 everywhere rather than
erroring: greedy decoding may legitimately emit the end tag immediately.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .vocab import word_tokens

ROUGE_VARIANTS = ("rouge-1", "rouge-2", "rouge-3", "rouge-4", "rouge-l", "rouge-w")

BLEU_EPSILON = 1e-9


@dataclass(frozen=True)
class PrfScore:
    p: float
    r: float
    f: float

    @classmethod
    def from_pr(cls, p: float, r: float) -> "PrfScore":
        f = 2.0 * p * r / (p + r) if p + r > 0.0 else 0.0
        return cls(p=p, r=r, f=f)


@dataclass
class MetricReport:
    bleu: float
    rouge: dict[str, PrfScore]
    n_samples: int

    def __post_init__(self):
        missing = set(ROUGE_VARIANTS) - set(self.rouge)
        if missing:
            raise ValueError(f"report missing rouge variants: {sorted(missing)}")


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def modified_precision(
    cand: Sequence[str], refs: Sequence[Sequence[str]], n: int
) -> tuple[int, int]:
    """Clipped n-gram matches and the candidate n-gram total.

    Each candidate n-gram count is clipped by the maximum count of that
    n-gram over all references.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    total = max(0, len(cand) - n + 1)
    if total == 0:
        return 0, 0
    cand_counts = _ngram_counts(cand, n)
    max_ref: Counter = Counter()
    for ref in refs:
        for gram, count in _ngram_counts(ref, n).items():
            if count > max_ref[gram]:
                max_ref[gram] = count
    clipped = sum(min(count, max_ref[gram]) for gram, count in cand_counts.items())
    return clipped, total


def bleu(
    cand: Sequence[str],
    refs: Sequence[Sequence[str]],
    max_n: int = 4,
    mode: str = "add_epsilon",
) -> float:
    """Geometric mean of modified n-gram precisions times the brevity penalty.

    ``corpus_zero`` zeroes the whole score when any precision is zero;
    ``add_epsilon`` substitutes 1e-9 instead, the usual sentence-level
    smoothing.  Orders for which the candidate has no n-grams at all are
    excluded from the mean (their weight stays 1/max_n), so a candidate
    identical to its reference scores 1 regardless of length.  An empty
    candidate scores 0 by convention.
    """
    if mode not in ("corpus_zero", "add_epsilon"):
        raise ValueError(f"unknown bleu mode: {mode!r}")
    if not refs:
        raise ValueError("bleu requires at least one reference")
    c = len(cand)
    if c == 0:
        return 0.0
    precisions = []
    for n in range(1, max_n + 1):
        clipped, total = modified_precision(cand, refs, n)
        if total > 0:
            precisions.append(clipped / total)
    if mode == "corpus_zero" and any(p == 0.0 for p in precisions):
        return 0.0
    precisions = [p if p > 0.0 else BLEU_EPSILON for p in precisions]
    # Closest reference length; ties favour the shorter reference.
    r = min((abs(len(ref) - c), len(ref)) for ref in refs)[1]
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * math.exp(sum(math.log(p) for p in precisions) / max_n)


def corpus_bleu(pairs: Sequence[tuple[Sequence[str], Sequence[str]]],
                max_n: int = 4) -> float:
    """Corpus-level BLEU: n-gram counts pooled over all pairs before scoring.

    Clipped matches and totals are summed per order across the corpus, the
    brevity penalty uses the summed candidate and reference lengths, and any
    pooled precision of zero zeroes the score (no smoothing).
    """
    if not pairs:
        raise ValueError("corpus_bleu requires at least one pair")
    clipped_sums = [0] * max_n
    total_sums = [0] * max_n
    cand_len = 0
    ref_len = 0
    for cand, ref in pairs:
        cand_len += len(cand)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            clipped, total = modified_precision(cand, [ref], n)
            clipped_sums[n - 1] += clipped
            total_sums[n - 1] += total
    if cand_len == 0:
        return 0.0
    precisions = [
        clipped / total
        for clipped, total in zip(clipped_sums, total_sums)
        if total > 0
    ]
    if not precisions or any(p == 0.0 for p in precisions):
        return 0.0
    bp = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)
    return bp * math.exp(sum(math.log(p) for p in precisions) / max_n)


def rouge_n(cand: Sequence[str], ref: Sequence[str], n: int) -> PrfScore:
    """N-gram co-occurrence: overlap of clipped counts over each side's total."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cand_counts = _ngram_counts(cand, n)
    ref_counts = _ngram_counts(ref, n)
    overlap = sum(min(count, ref_counts[g]) for g, count in cand_counts.items())
    cand_total = sum(cand_counts.values())
    ref_total = sum(ref_counts.values())
    p = overlap / cand_total if cand_total > 0 else 0.0
    r = overlap / ref_total if ref_total > 0 else 0.0
    return PrfScore.from_pr(p, r)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    m, n = len(a), len(b)
    prev = [0] * (n + 1)
    for i in range(1, m + 1):
        cur = [0] * (n + 1)
        for j in range(1, n + 1):
            if a[i - 1] == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[n]


def rouge_l(cand: Sequence[str], ref: Sequence[str]) -> PrfScore:
    """Longest-common-subsequence overlap; an empty side scores all zeros."""
    if not cand or not ref:
        return PrfScore(0.0, 0.0, 0.0)
    lcs = _lcs_length(cand, ref)
    return PrfScore.from_pr(lcs / len(cand), lcs / len(ref))


def _wlcs_weight(cand: Sequence[str], ref: Sequence[str], alpha: float) -> float:
    """Maximal total run weight over all common subsequences.

    A run of k matches consecutive in BOTH sequences weighs k**alpha.  The
    run length is part of the DP state (extending a run of k adds
    (k+1)**alpha - k**alpha), swept bottom-up over suffix pairs; unlike the
    classic two-table recurrence, skipping a match is allowed, which matters
    because the weight is convex.  O(len(cand) * len(ref) * min(len)).
    """
    m, n = len(cand), len(ref)
    kmax = min(m, n)
    gain = np.array([(k + 1.0) ** alpha - float(k) ** alpha
                     for k in range(kmax)])
    nxt = np.zeros((n + 1, kmax + 1))
    for i in range(m - 1, -1, -1):
        cur = np.zeros((n + 1, kmax + 1))
        for j in range(n - 1, -1, -1):
            skip = max(nxt[j, 0], cur[j + 1, 0])
            cur[j, :] = skip
            if cand[i] == ref[j]:
                extended = gain + nxt[j + 1, 1 : kmax + 1]
                np.maximum(cur[j, :kmax], extended, out=cur[j, :kmax])
        nxt = cur
    return float(nxt[0, 0])


def rouge_w(cand: Sequence[str], ref: Sequence[str], alpha: float = 1.2) -> PrfScore:
    """Weighted LCS favouring consecutive matches.

    Precision and recall invert the run weighting:
    (WLCS / len**alpha) ** (1/alpha).
    """
    if alpha <= 1.0:
        raise ValueError("alpha must be > 1")
    m, n = len(cand), len(ref)
    if m == 0 or n == 0:
        return PrfScore(0.0, 0.0, 0.0)
    wlcs = _wlcs_weight(cand, ref, alpha)
    inv = 1.0 / alpha
    p = (wlcs / m**alpha) ** inv
    r = (wlcs / n**alpha) ** inv
    return PrfScore.from_pr(p, r)


def score_pair(cand: Sequence[str], ref: Sequence[str]) -> dict[str, PrfScore]:
    """All six ROUGE variants for one tokenized (candidate, reference) pair."""
    scores = {f"rouge-{n}": rouge_n(cand, ref, n) for n in range(1, 5)}
    scores["rouge-l"] = rouge_l(cand, ref)
    scores["rouge-w"] = rouge_w(cand, ref)
    return scores


def evaluate_corpus(pairs: Sequence[tuple[str, str]],
                    corpus_level_bleu: bool = False) -> MetricReport:
    """Score (predicted, reference) text pairs individually, then average.

    Both sides are normalized with the word tokenizer before scoring.  Each
    p/r/f component is averaged independently over samples; the report's f is
    deliberately NOT recomputed from mean p and mean r.  By default the bleu
    field is the mean sentence-level score with epsilon smoothing, matching
    the per-sample methodology; ``corpus_level_bleu`` switches it to the
    pooled-count aggregate.
    """
    if not pairs:
        raise ValueError("evaluate_corpus requires at least one pair")
    sums = {v: [0.0, 0.0, 0.0] for v in ROUGE_VARIANTS}
    bleu_sum = 0.0
    tokenized = []
    for predicted, reference in pairs:
        cand = word_tokens(predicted)
        ref = word_tokens(reference)
        tokenized.append((cand, ref))
        for variant, s in score_pair(cand, ref).items():
            acc = sums[variant]
            acc[0] += s.p
            acc[1] += s.r
            acc[2] += s.f
        bleu_sum += bleu(cand, [ref], mode="add_epsilon") if cand else 0.0
    n = len(pairs)
    rouge = {
        v: PrfScore(p=acc[0] / n, r=acc[1] / n, f=acc[2] / n)
        for v, acc in sums.items()
    }
    bleu_value = corpus_bleu(tokenized) if corpus_level_bleu else bleu_sum / n
    return MetricReport(bleu=bleu_value, rouge=rouge, n_samples=n)


def report_to_dict(report: MetricReport) -> dict:
    return {
        "bleu": report.bleu,
        "rouge": {
            v: {"f": s.f, "p": s.p, "r": s.r} for v, s in report.rouge.items()
        },
        "n_samples": report.n_samples,
    }


def report_to_json(report: MetricReport) -> str:
    return json.dumps(report_to_dict(report), indent=2) + "\n"


def format_report_table(report: MetricReport) -> str:
    """Plain-text table: one column per variant, rows f / p / r."""
    width = 10
    header = " " * 2 + "".join(v.rjust(width) for v in ROUGE_VARIANTS)
    lines = [header]
    for component in ("f", "p", "r"):
        cells = "".join(
            f"{getattr(report.rouge[v], component):.4f}".rjust(width)
            for v in ROUGE_VARIANTS
        )
        lines.append(component + " " + cells)
    lines.append(f"bleu {report.bleu:.4f}  (n={report.n_samples})")
    return "\n".join(lines) + "\n"


def _csv_quote(text: str) -> str:
    return '"' + text.replace('"', '""') + '"'


def write_comparison_csv(
    rows: Sequence[tuple[str, str, str]], path: str | Path
) -> None:
    """Write the per-sample listing of original vs predicted summaries."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write("id,original,predicted\n")
        for sample_id, original, predicted in rows:
            fh.write(
                f"{_csv_quote(sample_id)},{_csv_quote(original)},"
                f"{_csv_quote(predicted)}\n"
            )
