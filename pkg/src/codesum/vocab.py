"""Capped, frequency-ranked vocabularies and integer encoding of text.

Word mode lowercases, replaces filtered characters with spaces and splits on
whitespace; char mode treats every lowercased character as a token.  Four
indices are reserved: PAD=0, OOV=1, START=2, END=3.  Everything else is
ranked by descending corpus frequency with first-occurrence tie-break.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence

import numpy as np

PAD = 0
OOV = 1
START = 2
END = 3
N_SPECIALS = 4

OOV_TOKEN = "<unk>"

# Punctuation stripped in word mode (apostrophe deliberately kept).
DEFAULT_FILTER_CHARS = '!"#$%&()*+,-./:;<=>?@[\\]^_`{|}~\t\n'


def word_tokens(text: str, filter_set: frozenset[str] | None = None) -> list[str]:
    """Lowercase, blank out filtered characters, split on whitespace."""
    chars = DEFAULT_FILTER_CHARS if filter_set is None else filter_set
    table = {ord(c): " " for c in chars}
    return text.lower().translate(table).split()


def char_tokens(text: str) -> list[str]:
    return list(text.lower())


class Vocabulary:
    """Token/index bijection with reserved specials and a total-size cap."""

    def __init__(self, mode: str, max_size: int, tokens: Sequence[str],
                 filter_set: Iterable[str] | None = None):
        if mode not in ("word", "char"):
            raise ValueError(f"mode must be 'word' or 'char', got {mode!r}")
        if max_size < N_SPECIALS + 1:
            raise ValueError(f"max_size must be >= {N_SPECIALS + 1}, got {max_size}")
        if len(tokens) > max_size - N_SPECIALS:
            raise ValueError("token list exceeds max_size")
        self.mode = mode
        self.max_size = max_size
        self.filter_set = frozenset(
            DEFAULT_FILTER_CHARS if filter_set is None else filter_set
        )
        self._index_to_token = list(tokens)
        self._token_to_index = {
            tok: N_SPECIALS + i for i, tok in enumerate(self._index_to_token)
        }
        if len(self._token_to_index) != len(self._index_to_token):
            raise ValueError("token list contains duplicates")

    @property
    def size(self) -> int:
        """Total number of indices, specials included."""
        return N_SPECIALS + len(self._index_to_token)

    def __len__(self) -> int:
        return self.size

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_index

    @classmethod
    def build(cls, texts: Iterable[str], mode: str = "word",
              max_size: int = 20000,
              filter_set: Iterable[str] | None = None) -> "Vocabulary":
        """Count token frequencies over ``texts`` and keep the most frequent.

        Indices 4.. are assigned by descending frequency; ties keep the token
        seen first.  At most ``max_size - 4`` tokens survive the cap.
        """
        if max_size < N_SPECIALS + 1:
            raise ValueError(f"max_size must be >= {N_SPECIALS + 1}, got {max_size}")
        fset = frozenset(DEFAULT_FILTER_CHARS if filter_set is None else filter_set)
        counts: dict[str, int] = {}
        first_seen: dict[str, int] = {}
        pos = 0
        for text in texts:
            toks = word_tokens(text, fset) if mode == "word" else char_tokens(text)
            for tok in toks:
                counts[tok] = counts.get(tok, 0) + 1
                if tok not in first_seen:
                    first_seen[tok] = pos
                    pos += 1
        ranked = sorted(counts, key=lambda t: (-counts[t], first_seen[t]))
        return cls(mode, max_size, ranked[: max_size - N_SPECIALS], fset)

    def tokenize(self, text: str) -> list[str]:
        if self.mode == "word":
            return word_tokens(text, self.filter_set)
        return char_tokens(text)

    def encode(self, text: str, add_bounds: bool = False) -> list[int]:
        """Map text to indices; unknown tokens become OOV.

        With ``add_bounds`` the result is wrapped as [START, ..., END].
        """
        ids = [self._token_to_index.get(tok, OOV) for tok in self.tokenize(text)]
        if add_bounds:
            return [START, *ids, END]
        return ids

    def decode(self, indices: Sequence[int]) -> str:
        """Render indices back to text, dropping PAD/START/END.

        OOV renders as the literal ``<unk>``.  Word mode joins with single
        spaces, char mode concatenates.
        """
        parts = []
        for idx in indices:
            idx = int(idx)
            if idx < 0 or idx >= self.size:
                raise ValueError(f"index out of range: {idx} (size {self.size})")
            if idx in (PAD, START, END):
                continue
            if idx == OOV:
                parts.append(OOV_TOKEN)
            else:
                parts.append(self._index_to_token[idx - N_SPECIALS])
        sep = " " if self.mode == "word" else ""
        return sep.join(parts)

    def to_dict(self) -> dict:
        """JSON-ready form; specials are implicit and never serialized."""
        return {
            "mode": self.mode,
            "max_size": self.max_size,
            "filter_set": "".join(sorted(self.filter_set)),
            "tokens": list(self._index_to_token),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "Vocabulary":
        try:
            return cls(obj["mode"], obj["max_size"], obj["tokens"],
                       obj["filter_set"])
        except KeyError as exc:
            raise ValueError(f"vocabulary object missing key {exc}") from exc

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Vocabulary)
            and self.mode == other.mode
            and self.max_size == other.max_size
            and self.filter_set == other.filter_set
            and self._index_to_token == other._index_to_token
        )


def pad_batch(seqs: Sequence[Sequence[int]], max_len: int) -> np.ndarray:
    """Right-pad (or truncate) sequences into a (batch, max_len) int matrix.

    Truncation keeps the END tag when the original sequence carried one, by
    overwriting the final kept position.
    """
    if max_len < 2:
        raise ValueError("max_len must be >= 2")
    out = np.full((len(seqs), max_len), PAD, dtype=np.int64)
    for row, seq in enumerate(seqs):
        seq = list(seq)
        if len(seq) > max_len:
            cut = seq[:max_len]
            if seq[-1] == END:
                cut[-1] = END
            seq = cut
        out[row, : len(seq)] = seq
    return out
