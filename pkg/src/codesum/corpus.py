"""Paired (source, target) datasets: JSONL I/O, dedup, filtering, splits, profiling.

A corpus holds samples at either granularity: a code segment paired with its
comment, or a commit diff paired with its commit message.  The interchange
format is JSON Lines, one object per line with keys ``id``, ``source``,
``target``, ``origin`` and optional ``language_hint``.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .rng import SplitMix64, shuffled


class CorpusFormatError(ValueError):
    """Raised for malformed corpus files or invalid sample data."""


class Origin(enum.Enum):
    """Pairing granularity of a sample."""

    FUNCTION_PAIR = "function_pair"
    COMMIT_PAIR = "commit_pair"


@dataclass(frozen=True)
class Sample:
    id: str
    source: str
    target: str
    origin: Origin
    language_hint: str | None = None

    def __post_init__(self):
        if not self.id:
            raise CorpusFormatError("sample id must be non-empty")
        if not self.source.strip():
            raise CorpusFormatError(f"sample {self.id!r}: source is empty")
        if not self.target.strip():
            raise CorpusFormatError(f"sample {self.id!r}: target is empty")


@dataclass
class Corpus:
    """An ordered list of samples plus free-text provenance."""

    samples: list[Sample] = field(default_factory=list)
    provenance: str = ""

    def __post_init__(self):
        seen = set()
        for s in self.samples:
            if s.id in seen:
                raise CorpusFormatError(f"duplicate id: {s.id!r}")
            seen.add(s.id)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def ids(self) -> list[str]:
        return [s.id for s in self.samples]


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.8
    val_frac: float = 0.1
    test_frac: float = 0.1
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f < 0.0 or f > 1.0 for f in fracs):
            raise ValueError(f"fractions must lie in [0, 1], got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError(f"fractions must sum to 1, got {sum(fracs)!r}")


@dataclass
class Histogram:
    """Token-length frequency histogram with fixed-width bins."""

    bin_width: int
    bins: dict[int, int]

    def total(self) -> int:
        return sum(self.bins.values())

    def to_csv(self) -> str:
        lines = ["bin_lower,count"]
        for lower in sorted(self.bins):
            lines.append(f"{lower},{self.bins[lower]}")
        return "\n".join(lines) + "\n"


_REQUIRED_KEYS = ("id", "source", "target", "origin")
_ALLOWED_KEYS = frozenset(_REQUIRED_KEYS) | {"language_hint"}


def load_jsonl(path: str | Path) -> Corpus:
    """Load a corpus from a JSON Lines file, preserving line order.

    Blank lines are skipped.  Errors carry the 1-based line number.
    """
    path = Path(path)
    try:
        # utf-8-sig tolerates a BOM from corpora exported by other tools
        text = path.read_text(encoding="utf-8-sig")
    except OSError as exc:
        raise CorpusFormatError(f"cannot read corpus file {path}: {exc}") from exc

    samples: list[Sample] = []
    seen: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusFormatError(f"malformed JSON at line {lineno}: {exc}") from exc
        if not isinstance(obj, dict):
            raise CorpusFormatError(f"expected a JSON object at line {lineno}")
        for key in _REQUIRED_KEYS:
            if key not in obj:
                raise CorpusFormatError(f"missing key: {key} at line {lineno}")
        unknown = set(obj) - _ALLOWED_KEYS
        if unknown:
            raise CorpusFormatError(
                f"unknown key: {sorted(unknown)[0]} at line {lineno}"
            )
        try:
            origin = Origin(obj["origin"])
        except ValueError:
            raise CorpusFormatError(
                f"invalid origin {obj['origin']!r} at line {lineno}"
            ) from None
        if obj["id"] in seen:
            raise CorpusFormatError(f"duplicate id: {obj['id']!r} at line {lineno}")
        seen.add(obj["id"])
        try:
            samples.append(
                Sample(
                    id=obj["id"],
                    source=obj["source"],
                    target=obj["target"],
                    origin=origin,
                    language_hint=obj.get("language_hint"),
                )
            )
        except (CorpusFormatError, TypeError) as exc:
            raise CorpusFormatError(f"invalid sample at line {lineno}: {exc}") from exc
    return Corpus(samples=samples, provenance=str(path))


def save_jsonl(corpus: Corpus, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for s in corpus:
            obj: dict = {
                "id": s.id,
                "source": s.source,
                "target": s.target,
                "origin": s.origin.value,
            }
            if s.language_hint is not None:
                obj["language_hint"] = s.language_hint
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def deduplicate(corpus: Corpus, key_mode: str = "exact_pair") -> Corpus:
    """Drop samples repeating an earlier key; the first occurrence survives.

    ``exact_pair`` keys on (source, target) after whitespace trimming,
    ``target_only`` keys on the trimmed target alone.
    """
    if key_mode not in ("exact_pair", "target_only"):
        raise ValueError(f"unknown dedup key_mode: {key_mode!r}")
    seen = set()
    kept = []
    for s in corpus:
        key = (
            (s.source.strip(), s.target.strip())
            if key_mode == "exact_pair"
            else s.target.strip()
        )
        if key in seen:
            continue
        seen.add(key)
        kept.append(s)
    return Corpus(samples=kept, provenance=corpus.provenance)


def _token_count(text: str) -> int:
    return len(text.split())


def filter_by_length(
    corpus: Corpus, max_source_tokens: int, max_target_tokens: int
) -> Corpus:
    """Keep samples whose whitespace-token counts fit both bounds (inclusive)."""
    if max_source_tokens < 1 or max_target_tokens < 1:
        raise ValueError("length bounds must be >= 1")
    kept = [
        s
        for s in corpus
        if _token_count(s.source) <= max_source_tokens
        and _token_count(s.target) <= max_target_tokens
    ]
    return Corpus(samples=kept, provenance=corpus.provenance)


def split(corpus: Corpus, spec: SplitSpec) -> tuple[Corpus, Corpus, Corpus]:
    """Shuffle deterministically, then cut into (train, val, test).

    The shuffle is Fisher-Yates under SplitMix64 seeded with ``spec.seed``.
    Cut points are floor(n * train_frac) and floor(n * (train_frac + val_frac));
    the remainder lands in test.
    """
    order = shuffled(corpus.samples, SplitMix64(spec.seed))
    n = len(order)
    cut1 = math.floor(n * spec.train_frac)
    cut2 = math.floor(n * (spec.train_frac + spec.val_frac))

    def part(samples):
        return Corpus(samples=list(samples), provenance=corpus.provenance)

    return part(order[:cut1]), part(order[cut1:cut2]), part(order[cut2:])


def length_histogram(corpus: Corpus, field_name: str, bin_width: int) -> Histogram:
    """Histogram of whitespace-token lengths of ``source`` or ``target``."""
    if field_name not in ("source", "target"):
        raise ValueError(f"field must be 'source' or 'target', got {field_name!r}")
    if bin_width < 1:
        raise ValueError("bin_width must be >= 1")
    bins: dict[int, int] = {}
    for s in corpus:
        length = _token_count(getattr(s, field_name))
        lower = bin_width * (length // bin_width)
        bins[lower] = bins.get(lower, 0) + 1
    return Histogram(bin_width=bin_width, bins=bins)
