"""Token-level recurrent backbone and output strategies.

Model kinds:
  softmax, softmax+rnn      one softmax over the joint word/numeral vocabulary
  h-softmax, h-softmax+rnn  class gate + independent per-class softmaxes
  d-rnn, mog, combination   class gate + an open-vocabulary numeral branch

All models share the input side: plain token embeddings for words, gated
token-character embeddings for numerals.
"""
from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import log_softmax as np_log_softmax, logsumexp as np_logsumexp

from . import autodiff as ad
from .autodiff import Tensor
from .compute import LstmCell, ParamStore, dropout, uniform_init
from .corpus import Token, Vocabulary
from .embed import CharEncoder, EmbeddingTable, GatedInputEmbed
from .gmm import GaussianMixtureBank
from .numeral_heads import Candidate, CombinationHead, DigitRnn, MogHead

MODEL_KINDS = ("softmax", "softmax+rnn", "h-softmax", "h-softmax+rnn",
               "d-rnn", "mog", "combination")
OPEN_NUMERAL_KINDS = ("d-rnn", "mog", "combination")


def canonical_kind(name: str) -> str:
    k = name.strip().lower().replace("_", "-")
    if k == "drnn":
        k = "d-rnn"
    if k not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {name!r}; choose from {MODEL_KINDS}")
    return k


def _log_sigmoid(x: Tensor) -> Tensor:
    # log sigma(x) = -log(1 + e^-x), stable in both tails
    return -ad.logsumexp(ad.stack([Tensor(0.0), -x]))


def _log_one_minus_sigmoid(x: Tensor) -> Tensor:
    return -ad.logsumexp(ad.stack([Tensor(0.0), x]))


class FlatSoftmax:
    """Single softmax over the full vocabulary; the +rnn variant adds a
    character-composed score to in-vocabulary numeral columns."""

    def __init__(self, params: ParamStore, vocab: Vocabulary, dim: int,
                 rng: np.random.Generator, plus_rnn: bool):
        self.vocab = vocab
        self.dim = dim
        self.plus_rnn = plus_rnn
        self.E_out = params.create("out.E_out", uniform_init(rng, (vocab.size, dim)))
        self.char_out: Optional[CharEncoder] = None
        if plus_rnn:
            self.char_out = CharEncoder(params, "out.char", dim, rng)
        self._char_cols: Optional[List[Tensor]] = None

    def prepare(self):
        """Recompute the character-composed output columns (call once per
        optimiser step; they depend on parameters, not on the state)."""
        if self.char_out is not None:
            self._char_cols = [self.char_out(s) for s in self.vocab.in_vocab_numerals()]

    def logits(self, h: Tensor) -> Tensor:
        base = self.E_out @ h
        if not self.plus_rnn:
            return base
        if self._char_cols is None:
            self.prepare()
        # words and UNKs keep their token column twice; in-vocab numerals get
        # the character-composed column instead on the second term
        n_words = self.vocab.n_words
        char_scores = ad.stack([col @ h for col in self._char_cols]) \
            if self._char_cols else None
        pieces = [base[slice(0, n_words)]]
        if char_scores is not None:
            pieces.append(char_scores)
        pieces.append(base[slice(self.vocab.size - 1, self.vocab.size)])
        return base + ad.concat(pieces)

    def log_prob(self, h: Tensor, token: Token) -> Tensor:
        return ad.log_softmax(self.logits(h))[self.vocab.index(token)]

    def full_log_probs_np(self, hv: np.ndarray) -> np.ndarray:
        with ad.no_grad():
            return np_log_softmax(self.logits(Tensor(hv)).value)

    def numeral_candidate_log_probs(self, hv: np.ndarray,
                                    candidates: Sequence[Candidate],
                                    **_) -> np.ndarray:
        lp = self.full_log_probs_np(hv)
        class_mass = np_logsumexp(lp[self.vocab.n_words:])
        unk = self.vocab.unk_numeral_index
        out = np.empty(len(candidates))
        for i, c in enumerate(candidates):
            idx = self.vocab.index_of(c.surface, unk)
            out[i] = lp[idx] - class_mass
        return out


class ClosedNumeralBranch:
    """Softmax over the numeral inventory (UNK included); optional +rnn
    character columns for in-vocabulary numerals."""

    def __init__(self, params: ParamStore, vocab: Vocabulary, dim: int,
                 rng: np.random.Generator, plus_rnn: bool):
        self.vocab = vocab
        self.plus_rnn = plus_rnn
        self.E_out = params.create("out.num.E_out",
                                   uniform_init(rng, (vocab.n_numerals, dim)))
        self.char_out: Optional[CharEncoder] = None
        if plus_rnn:
            self.char_out = CharEncoder(params, "out.num.char", dim, rng)
        self._char_cols: Optional[List[Tensor]] = None

    def prepare(self):
        if self.char_out is not None:
            self._char_cols = [self.char_out(s) for s in self.vocab.in_vocab_numerals()]

    def logits(self, h: Tensor) -> Tensor:
        base = self.E_out @ h
        if not self.plus_rnn:
            return base
        if self._char_cols is None:
            self.prepare()
        n = self.vocab.n_numerals
        char_scores = ad.stack([col @ h for col in self._char_cols]) \
            if self._char_cols else None
        pieces = []
        if char_scores is not None:
            pieces.append(char_scores)
        pieces.append(base[slice(n - 1, n)])
        return base + ad.concat(pieces)

    def log_prob_token(self, h: Tensor, token: Token) -> Tensor:
        return ad.log_softmax(self.logits(h))[self.vocab.numeral_branch_index(token)]

    def branch_log_probs_np(self, hv: np.ndarray) -> np.ndarray:
        with ad.no_grad():
            return np_log_softmax(self.logits(Tensor(hv)).value)

    def candidate_log_probs(self, hv: np.ndarray,
                            candidates: Sequence[Candidate], **_) -> np.ndarray:
        lp = self.branch_log_probs_np(hv)
        out = np.empty(len(candidates))
        unk = self.vocab.n_numerals - 1
        inv = {s: i for i, s in enumerate(self.vocab.in_vocab_numerals())}
        for i, c in enumerate(candidates):
            out[i] = lp[inv.get(c.surface, unk)]
        return out


class Hierarchical:
    """Class gate p(numeral | h) = sigma(h . b) over independently
    normalised word and numeral branches; the branches share no parameters."""

    def __init__(self, params: ParamStore, vocab: Vocabulary, dim: int,
                 rng: np.random.Generator, numeral_branch):
        self.vocab = vocab
        self.b = params.create("out.class_gate.b", uniform_init(rng, (dim,)))
        self.E_word = params.create("out.word.E_out",
                                    uniform_init(rng, (vocab.n_words, dim)))
        self.numeral_branch = numeral_branch

    def prepare(self):
        if hasattr(self.numeral_branch, "prepare"):
            self.numeral_branch.prepare()

    def class_probs(self, h: Tensor) -> Tuple[float, float]:
        with ad.no_grad():
            p_num = float(ad.sigmoid(self.b @ h).value)
        return 1.0 - p_num, p_num

    def word_log_prob(self, h: Tensor, token: Token) -> Tensor:
        return ad.log_softmax(self.E_word @ h)[self.vocab.word_branch_index(token)]

    def log_prob(self, h: Tensor, token: Token) -> Tensor:
        score = self.b @ h
        if token.is_numeral:
            return _log_sigmoid(score) + self.numeral_branch.log_prob_token(h, token)
        return _log_one_minus_sigmoid(score) + self.word_log_prob(h, token)

    def numeral_candidate_log_probs(self, hv: np.ndarray,
                                    candidates: Sequence[Candidate],
                                    **kw) -> np.ndarray:
        return self.numeral_branch.candidate_log_probs(hv, candidates, **kw)


class NumerateLM:
    """A token-level LSTM language model with a pluggable output strategy."""

    def __init__(self, kind: str, vocab: Vocabulary, dim: int, seed: int = 0,
                 bank: Optional[GaussianMixtureBank] = None):
        self.kind = canonical_kind(kind)
        self.vocab = vocab
        self.dim = dim
        self.seed = seed
        self._bank = bank
        rng = np.random.default_rng(seed)
        params = ParamStore()
        self.params = params

        self.in_table = EmbeddingTable(params, "in.E", vocab.size, dim, rng)
        self.in_char = CharEncoder(params, "in.char", dim, rng)
        self.gate = GatedInputEmbed(params, "in.gate", dim, rng)
        self.cell = LstmCell(params, "rnn", dim, dim, rng)

        if self.kind in ("softmax", "softmax+rnn"):
            self.strategy = FlatSoftmax(params, vocab, dim, rng,
                                        plus_rnn=self.kind.endswith("+rnn"))
        else:
            if self.kind in ("h-softmax", "h-softmax+rnn"):
                branch = ClosedNumeralBranch(params, vocab, dim, rng,
                                             plus_rnn=self.kind.endswith("+rnn"))
            elif self.kind == "d-rnn":
                branch = DigitRnn(params, "out.drnn", dim, rng)
            elif self.kind == "mog":
                branch = MogHead(params, "out.mog", dim, bank, rng)
            else:
                branch = CombinationHead(params, "out.comb", dim, vocab, bank, rng)
            self.strategy = Hierarchical(params, vocab, dim, rng, branch)

    @property
    def open_numeral_vocab(self) -> bool:
        return self.kind in OPEN_NUMERAL_KINDS

    @property
    def hierarchical(self) -> bool:
        return isinstance(self.strategy, Hierarchical)

    # -- input side -------------------------------------------------------
    def input_embedding(self, token: Token) -> Tensor:
        tok_vec = self.in_table(self.vocab.index(token))
        if token.is_numeral:
            return self.gate(tok_vec, self.in_char(token.surface))
        return tok_vec

    def initial_state(self):
        return self.cell.initial_state()

    def advance(self, state, token: Token, *, train: bool = False,
                drop_rate: float = 0.0, rng=None):
        x = dropout(self.input_embedding(token), drop_rate, rng, train)
        return self.cell.step(x, state)

    # -- scoring ----------------------------------------------------------
    def prepare(self):
        if hasattr(self.strategy, "prepare"):
            self.strategy.prepare()

    def token_log_prob(self, h: Tensor, token: Token) -> Tensor:
        return self.strategy.log_prob(h, token)

    def doc_log_probs(self, tokens: Sequence[Token], *, train: bool = False,
                      drop_rate: float = 0.0, rng=None) -> List[Tensor]:
        """Per-token log probabilities; token t is predicted from the state
        after consuming tokens < t (zero initial state)."""
        self.prepare()
        out: List[Tensor] = []
        state = self.initial_state()
        for tok in tokens:
            h = dropout(state[0], drop_rate, rng, train)
            out.append(self.token_log_prob(h, tok))
            state = self.advance(state, tok, train=train,
                                 drop_rate=drop_rate, rng=rng)
        return out

    def score_doc(self, tokens: Sequence[Token],
                  collect_numeral_states: bool = False):
        """Grad-free scoring. Returns (log-prob array, [(position, h)] at
        numeral positions if requested)."""
        with ad.no_grad():
            self.prepare()
            logps = np.empty(len(tokens))
            states: List[Tuple[int, np.ndarray]] = []
            state = self.initial_state()
            for t, tok in enumerate(tokens):
                if collect_numeral_states and tok.is_numeral:
                    states.append((t, state[0].value.copy()))
                logps[t] = float(self.token_log_prob(state[0], tok).value)
                state = self.advance(state, tok)
        return logps, states

    def numeral_candidate_log_probs(self, hv: np.ndarray,
                                    candidates: Sequence[Candidate],
                                    **kw) -> np.ndarray:
        """log p(candidate | numeral class, h), grad-free."""
        return self.strategy.numeral_candidate_log_probs(hv, candidates, **kw)
