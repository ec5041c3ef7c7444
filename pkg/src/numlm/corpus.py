"""Tokenisation, numeral normalisation, vocabulary construction and corpus
statistics.

Documents are one per line. Tokens are lowercased and whitespace delimited;
'-' and '/' adjacent to digits are split off so that all numeral values are
non-negative. A numeral surface after normalisation matches digits['.'digits];
the thousands separator is ',' and '.' is always the decimal separator.
Trailing decimal zeros are kept ("0.50" and "0.5" are distinct types) because
the decimal precision r feeds the precision-pattern model downstream.
"""
from __future__ import annotations

import json
import re
import statistics
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Optional, Sequence, Tuple

UNK_WORD = "<UNK_WORD>"
UNK_NUM = "<UNK_NUM>"

_NUMERAL_RE = re.compile(r"^\d+(\.\d+)?$")
# a raw numeral possibly carrying ',' thousands separators
_RAW_NUMERAL_RE = re.compile(r"^(\d{1,3}(,\d{3})+|\d+)(\.\d+)?$")


class Kind(Enum):
    Word = "word"
    Numeral = "numeral"


@dataclass(frozen=True)
class Token:
    surface: str
    kind: Kind
    value: Optional[float] = None
    precision: Optional[int] = None

    @property
    def is_numeral(self) -> bool:
        return self.kind is Kind.Numeral


def normalize_numeral(raw: str) -> str:
    """Drop thousands separators and leading integer-part zeros.

    A single zero is kept before the decimal point; trailing decimal zeros
    are preserved since they encode precision. Raises ValueError on
    non-numeral input.
    """
    if not _RAW_NUMERAL_RE.match(raw):
        raise ValueError(f"not a numeral: {raw!r}")
    s = raw.replace(",", "")
    if "." in s:
        int_part, frac = s.split(".", 1)
        int_part = int_part.lstrip("0") or "0"
        return f"{int_part}.{frac}"
    return s.lstrip("0") or "0"


def parse_value(surface: str) -> Tuple[float, int]:
    """Value and decimal precision r of a normalised numeral surface."""
    if not _NUMERAL_RE.match(surface):
        raise ValueError(f"malformed numeral: {surface!r}")
    if "." in surface:
        r = len(surface.split(".", 1)[1])
    else:
        r = 0
    return float(surface), r


def _classify(piece: str) -> Token:
    if _RAW_NUMERAL_RE.match(piece):
        surface = normalize_numeral(piece)
        value, r = parse_value(surface)
        return Token(surface, Kind.Numeral, value, r)
    return Token(piece, Kind.Word)


def _split_math_symbols(piece: str) -> List[str]:
    """Split '-' and '/' into their own tokens when adjacent to digits."""
    out: List[str] = []
    buf = ""
    for i, ch in enumerate(piece):
        if ch in "-/" and (
            (i > 0 and piece[i - 1].isdigit()) or
            (i + 1 < len(piece) and piece[i + 1].isdigit())
        ):
            if buf:
                out.append(buf)
                buf = ""
            out.append(ch)
        else:
            buf += ch
    if buf:
        out.append(buf)
    return out


def tokenize(text: str) -> List[Token]:
    """Lowercase, whitespace-split, split digit-adjacent '-'/'/', classify."""
    tokens: List[Token] = []
    for piece in text.lower().split():
        for sub in _split_math_symbols(piece):
            tokens.append(_classify(sub))
    return tokens


def tokenize_corpus(lines: Iterable[str]) -> List[List[Token]]:
    return [tokenize(line) for line in lines]


class Vocabulary:
    """Closed word/numeral inventories with dense, deterministic indices.

    Words occupy indices [0, n_words); numerals [n_words, size). The last
    word is UNK_WORD and the last numeral is UNK_NUM.
    """

    def __init__(self, words: Sequence[str], numerals: Sequence[str]):
        if words[-1] != UNK_WORD or numerals[-1] != UNK_NUM:
            raise ValueError("inventories must end with their UNK symbols")
        self.words = list(words)
        self.numerals = list(numerals)
        overlap = set(self.words) & set(self.numerals)
        if overlap:
            raise ValueError(f"word/numeral inventories overlap: {sorted(overlap)[:5]}")
        self._index = {w: i for i, w in enumerate(self.words)}
        for j, s in enumerate(self.numerals):
            self._index[s] = len(self.words) + j

    @property
    def size(self) -> int:
        return len(self.words) + len(self.numerals)

    @property
    def n_words(self) -> int:
        return len(self.words)

    @property
    def n_numerals(self) -> int:
        return len(self.numerals)

    @property
    def unk_word_index(self) -> int:
        return len(self.words) - 1

    @property
    def unk_numeral_index(self) -> int:
        return self.size - 1

    def surface(self, index: int) -> str:
        if index < len(self.words):
            return self.words[index]
        return self.numerals[index - len(self.words)]

    def index(self, token: Token) -> int:
        """Index of the token, mapping OOV to the class UNK."""
        i = self._index.get(token.surface)
        if i is not None:
            return i
        return self.unk_numeral_index if token.is_numeral else self.unk_word_index

    def contains(self, surface: str) -> bool:
        return surface in self._index

    def index_of(self, surface: str, default: Optional[int] = None) -> Optional[int]:
        return self._index.get(surface, default)

    def is_oov(self, token: Token) -> bool:
        return token.surface not in self._index

    def numeral_branch_index(self, token: Token) -> int:
        """Index within the numeral inventory (UNK_NUM for OOV numerals)."""
        if not token.is_numeral:
            raise ValueError("not a numeral token")
        i = self._index.get(token.surface)
        if i is None or i < len(self.words):
            return len(self.numerals) - 1
        return i - len(self.words)

    def word_branch_index(self, token: Token) -> int:
        if token.is_numeral:
            raise ValueError("not a word token")
        i = self._index.get(token.surface, self.unk_word_index)
        return i

    def in_vocab_numerals(self) -> List[str]:
        return self.numerals[:-1]

    # -- serialisation ---------------------------------------------------
    def save(self, path: str):
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"#words={self.n_words} #numerals={self.n_numerals}\n")
            for w in self.words:
                f.write(w + "\n")
            for s in self.numerals:
                f.write(s + "\n")

    @classmethod
    def load(cls, path: str) -> "Vocabulary":
        with open(path, encoding="utf-8") as f:
            header = f.readline().strip()
            m = re.match(r"#words=(\d+) #numerals=(\d+)$", header)
            if not m:
                raise ValueError(f"bad vocabulary header: {header!r}")
            n_words, n_numerals = int(m.group(1)), int(m.group(2))
            entries = [f.readline().rstrip("\n") for _ in range(n_words + n_numerals)]
        return cls(entries[:n_words], entries[n_words:])


def build_vocabulary(corpus: Sequence[Sequence[Token]], cap: int) -> Vocabulary:
    """Keep the `cap` most frequent types overall; ties go to earlier first
    occurrence; split into word/numeral inventories and append UNKs."""
    if not corpus or all(len(doc) == 0 for doc in corpus):
        raise ValueError("empty corpus")
    counts: Counter = Counter()
    first_seen: dict = {}
    kinds: dict = {}
    pos = 0
    for doc in corpus:
        for tok in doc:
            counts[tok.surface] += 1
            if tok.surface not in first_seen:
                first_seen[tok.surface] = pos
                kinds[tok.surface] = tok.kind
            pos += 1
    ranked = sorted(counts, key=lambda s: (-counts[s], first_seen[s]))[:cap]
    words = [s for s in ranked if kinds[s] is Kind.Word]
    numerals = [s for s in ranked if kinds[s] is Kind.Numeral]
    return Vocabulary(words + [UNK_WORD], numerals + [UNK_NUM])


@dataclass
class CorpusStats:
    n_instances: int
    max_length: int
    avg_length: float
    pct_words: float
    pct_numerals: float
    value_min: Optional[float]
    value_median: Optional[float]
    value_mean: Optional[float]
    value_max: Optional[float]
    oov_rate_words: float
    oov_rate_numerals: float

    def to_dict(self) -> dict:
        return {
            "n_instances": self.n_instances,
            "max_length": self.max_length,
            "avg_length": self.avg_length,
            "pct_words": self.pct_words,
            "pct_numerals": self.pct_numerals,
            "values": {
                "min": self.value_min,
                "median": self.value_median,
                "mean": self.value_mean,
                "max": self.value_max,
            },
            "oov_rate": {
                "words": self.oov_rate_words,
                "numerals": self.oov_rate_numerals,
            },
        }


def corpus_stats(corpus: Sequence[Sequence[Token]],
                 vocab: Optional[Vocabulary] = None) -> CorpusStats:
    lengths = [len(doc) for doc in corpus]
    n_tokens = sum(lengths)
    n_nums = sum(1 for doc in corpus for t in doc if t.is_numeral)
    n_words = n_tokens - n_nums
    values = [t.value for doc in corpus for t in doc if t.is_numeral]
    oov_w = oov_n = 0
    if vocab is not None:
        for doc in corpus:
            for t in doc:
                if vocab.is_oov(t):
                    if t.is_numeral:
                        oov_n += 1
                    else:
                        oov_w += 1
    return CorpusStats(
        n_instances=len(corpus),
        max_length=max(lengths) if lengths else 0,
        avg_length=n_tokens / len(corpus) if corpus else 0.0,
        pct_words=100.0 * n_words / n_tokens if n_tokens else 0.0,
        pct_numerals=100.0 * n_nums / n_tokens if n_tokens else 0.0,
        value_min=min(values) if values else None,
        value_median=statistics.median(values) if values else None,
        value_mean=sum(values) / len(values) if values else None,
        value_max=max(values) if values else None,
        oov_rate_words=oov_w / n_words if (vocab is not None and n_words) else 0.0,
        oov_rate_numerals=oov_n / n_nums if (vocab is not None and n_nums) else 0.0,
    )


def read_corpus_file(path: str) -> List[List[Token]]:
    with open(path, encoding="utf-8") as f:
        lines = [line.rstrip("\n") for line in f if line.strip()]
    return tokenize_corpus(lines)


def write_stats(stats: CorpusStats, path: str):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(stats.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
