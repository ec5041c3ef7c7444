"""Token embeddings, the character-level numeral encoder, and the gated
token-character input embedding used for numerals.
"""
from __future__ import annotations

from typing import Dict, List, Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .compute import LstmCell, ParamStore, uniform_init

# character inventory for numeral surfaces: SOS/EOS bracket the digits
CHAR_SOS = "<s>"
CHAR_EOS = "</s>"
CHARS = [str(d) for d in range(10)] + [".", CHAR_EOS, CHAR_SOS]
CHAR_INDEX = {c: i for i, c in enumerate(CHARS)}
N_CHARS = len(CHARS)  # 13
# symbols a numeral model may emit (everything except SOS)
EMIT_CHARS = CHARS[:-1]
N_EMIT = len(EMIT_CHARS)  # 12
EOS_INDEX = CHAR_INDEX[CHAR_EOS]


class EmbeddingTable:
    """One D-vector per vocabulary index, stored as rows of a (|V|, D) matrix."""

    def __init__(self, params: ParamStore, name: str, n_types: int, dim: int,
                 rng: np.random.Generator):
        self.n_types = n_types
        self.dim = dim
        self.E = params.create(name, uniform_init(rng, (n_types, dim)))

    def __call__(self, index: int) -> Tensor:
        if not 0 <= index < self.n_types:
            raise IndexError(f"embedding index {index} out of range [0, {self.n_types})")
        return self.E[index]

    def load_pretrained(self, path: str, surfaces: List[str]) -> int:
        """Initialise rows whose surface appears in the embedding file.

        File format: one line per token, the token then D floats. Returns the
        number of rows initialised.
        """
        vectors: Dict[str, np.ndarray] = {}
        with open(path, encoding="utf-8") as f:
            for line in f:
                parts = line.rstrip("\n").split(" ")
                if len(parts) != self.dim + 1:
                    raise ValueError(
                        f"pretrained row for {parts[0]!r} has {len(parts) - 1} dims, expected {self.dim}")
                vectors[parts[0]] = np.array([float(x) for x in parts[1:]])
        hits = 0
        for i, s in enumerate(surfaces):
            v = vectors.get(s)
            if v is not None:
                self.E.value[i] = v
                hits += 1
        return hits


class CharEncoder:
    """Character-level LSTM over a numeral's digits; output is the final
    hidden state, dimension D."""

    def __init__(self, params: ParamStore, name: str, dim: int,
                 rng: np.random.Generator, char_dim: Optional[int] = None):
        self.dim = dim
        self.char_dim = char_dim or dim
        self.chars = EmbeddingTable(params, f"{name}.chars", N_CHARS, self.char_dim, rng)
        self.cell = LstmCell(params, f"{name}.lstm", self.char_dim, dim, rng)

    def __call__(self, surface: str) -> Tensor:
        h, c = self.cell.initial_state()
        for ch in [CHAR_SOS] + list(surface) + [CHAR_EOS]:
            idx = CHAR_INDEX.get(ch)
            if idx is None:
                raise ValueError(f"character {ch!r} outside the numeral character set")
            h, c = self.cell.step(self.chars(idx), (h, c))
        return h


class GatedInputEmbed:
    """e = g * token_vec + (1 - g) * char_vec with a per-dimension gate
    computed from the token embedding."""

    def __init__(self, params: ParamStore, name: str, dim: int,
                 rng: np.random.Generator):
        self.Wg = params.create(f"{name}.Wg", uniform_init(rng, (dim, dim)))
        self.bg = params.create(f"{name}.bg", uniform_init(rng, (dim,)))

    def __call__(self, token_vec: Tensor, char_vec: Tensor) -> Tensor:
        g = ad.sigmoid((self.Wg @ token_vec) + self.bg)
        return (g * token_vec) + ((1.0 - g) * char_vec)
