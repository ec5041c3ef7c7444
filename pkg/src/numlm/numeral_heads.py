"""Open-vocabulary numeral strategies: digit-by-digit generation, a
discretised mixture of Gaussians with a precision-pattern model, and a gated
combination of strategies.

Every branch exposes:
  log_prob(h, token)            graph-mode scalar Tensor
  candidate_log_probs(hv, cs)   grad-free numpy scoring for decoding
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import erf, log_softmax as np_log_softmax

from . import autodiff as ad
from .autodiff import Tensor
from .compute import LstmCell, ParamStore, uniform_init
from .corpus import Token
from .embed import CHAR_INDEX, CHAR_SOS, CHARS, EMIT_CHARS, EOS_INDEX, N_CHARS, N_EMIT, EmbeddingTable
from .gmm import GaussianMixtureBank


@dataclass(frozen=True)
class Candidate:
    surface: str
    value: float
    precision: int


def _np_sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


class DigitRnn:
    """Character-level LSTM over {0-9, '.', EOS}, conditioned on the token
    state via the initial hidden state. Normalised one symbol at a time."""

    def __init__(self, params: ParamStore, name: str, dim: int,
                 rng: np.random.Generator):
        self.dim = dim
        self.chars = EmbeddingTable(params, f"{name}.chars", N_CHARS, dim, rng)
        self.cell = LstmCell(params, f"{name}.lstm", dim, dim, rng)
        self.Wout = params.create(f"{name}.out.W", uniform_init(rng, (N_EMIT, dim)))
        self.bout = params.create(f"{name}.out.b", uniform_init(rng, (N_EMIT,)))

    def _symbols(self, surface: str) -> List[int]:
        try:
            return [CHAR_INDEX[ch] for ch in surface]
        except KeyError as e:
            raise ValueError(f"character outside digit vocabulary: {e}") from None

    def log_prob(self, h: Tensor, surface: str) -> Tensor:
        targets = self._symbols(surface) + [EOS_INDEX]
        state = (h, Tensor(np.zeros(self.dim)))
        prev = CHAR_INDEX[CHAR_SOS]
        total = None
        for tgt in targets:
            state = self.cell.step(self.chars(prev), state)
            lp = ad.log_softmax((self.Wout @ state[0]) + self.bout)[tgt]
            total = lp if total is None else total + lp
            prev = tgt
        return total

    def log_prob_token(self, h: Tensor, token: Token) -> Tensor:
        return self.log_prob(h, token.surface)

    # -- grad-free helpers ------------------------------------------------
    def first_emission_probs(self, hv: np.ndarray) -> np.ndarray:
        """Distribution over the 12 emission symbols for the first step."""
        h = hv[None, :]
        c = np.zeros_like(h)
        x = self.chars.E.value[CHAR_INDEX[CHAR_SOS]][None, :]
        h, c = self.cell.step_batch(x, h, c)
        logits = h @ self.Wout.value.T + self.bout.value
        return np.exp(np_log_softmax(logits[0]))

    def candidate_log_probs(self, hv: np.ndarray,
                            candidates: Sequence[Candidate]) -> np.ndarray:
        seqs = [[CHAR_INDEX[ch] for ch in c.surface] + [EOS_INDEX] for c in candidates]
        n = len(seqs)
        max_len = max(len(s) for s in seqs)
        targets = np.full((n, max_len), -1, dtype=int)
        for i, s in enumerate(seqs):
            targets[i, :len(s)] = s
        inputs = np.full((n, max_len), CHAR_INDEX[CHAR_SOS], dtype=int)
        inputs[:, 1:] = targets[:, :-1]
        H = np.repeat(hv[None, :], n, axis=0)
        C = np.zeros_like(H)
        out = np.zeros(n)
        for t in range(max_len):
            active = targets[:, t] >= 0
            x = self.chars.E.value[np.maximum(inputs[:, t], 0)]
            H2, C2 = self.cell.step_batch(x, H, C)
            H = np.where(active[:, None], H2, H)
            C = np.where(active[:, None], C2, C)
            logits = H @ self.Wout.value.T + self.bout.value
            lp = np_log_softmax(logits, axis=1)
            idx = np.maximum(targets[:, t], 0)
            out += np.where(active, lp[np.arange(n), idx], 0.0)
        return out

    def trie_mass(self, hv: np.ndarray, depth: int) -> float:
        """Terminated mass over all symbol strings of length <= depth plus
        the continuation mass of unterminated depth-length prefixes.
        Telescopes to 1 for a properly normalised model."""
        cont_syms = list(range(N_EMIT - 1))  # digits and '.', EOS excluded
        H = hv[None, :].copy()
        C = np.zeros_like(H)
        X = self.chars.E.value[CHAR_INDEX[CHAR_SOS]][None, :]
        H, C = self.cell.step_batch(X, H, C)
        logp = np.zeros(1)
        total = 0.0
        for level in range(depth):
            lp = np_log_softmax(H @ self.Wout.value.T + self.bout.value, axis=1)
            total += float(np.exp(logp + lp[:, EOS_INDEX]).sum())
            n = H.shape[0]
            new_logp = (logp[:, None] + lp[:, cont_syms]).T.reshape(-1)
            newH = np.empty((n * len(cont_syms), self.dim))
            newC = np.empty_like(newH)
            for j, sym in enumerate(cont_syms):
                x = np.repeat(self.chars.E.value[sym][None, :], n, axis=0)
                h2, c2 = self.cell.step_batch(x, H, C)
                newH[j * n:(j + 1) * n] = h2
                newC[j * n:(j + 1) * n] = c2
            H, C, logp = newH, newC, new_logp
        lp = np_log_softmax(H @ self.Wout.value.T + self.bout.value, axis=1)
        total += float(np.exp(logp + lp[:, EOS_INDEX]).sum())  # EOS at final level
        cont = float(np.exp(logp[:, None] + lp[:, cont_syms]).sum())
        return total + cont


# pattern-model inventories
PATTERN_INT = 0
PATTERN_POINT = 1
PATTERN_DIGIT = 2
PATTERN_EOS = 3
N_PATTERN_EMIT = 4
PATTERN_SOS = 4  # input-only symbol


def _pattern_transition_masks() -> np.ndarray:
    """Additive log-masks restricting each conditional to the valid pattern
    grammar, so that p(r) sums to 1 over r. Rows indexed by the previous
    symbol (SOS included), columns by the 4 emissions."""
    masks = np.full((5, N_PATTERN_EMIT), -np.inf)
    masks[PATTERN_SOS, PATTERN_INT] = 0.0
    masks[PATTERN_INT, [PATTERN_POINT, PATTERN_EOS]] = 0.0
    masks[PATTERN_POINT, PATTERN_DIGIT] = 0.0
    masks[PATTERN_DIGIT, [PATTERN_DIGIT, PATTERN_EOS]] = 0.0
    return masks


class PrecisionPatternModel:
    """Sequence model over {INT_PART, '.', \\d, EOS} giving p(r), the
    distribution over decimal precision, conditioned on the token state.

    Emissions that would leave the valid pattern language are masked out of
    every conditional, so the distribution is proper over r = 0, 1, 2, ...
    """

    MASKS = _pattern_transition_masks()

    def __init__(self, params: ParamStore, name: str, dim: int,
                 rng: np.random.Generator):
        self.dim = dim
        self.emb = EmbeddingTable(params, f"{name}.emb", 5, dim, rng)
        self.cell = LstmCell(params, f"{name}.lstm", dim, dim, rng)
        self.Wout = params.create(f"{name}.out.W", uniform_init(rng, (N_PATTERN_EMIT, dim)))
        self.bout = params.create(f"{name}.out.b", uniform_init(rng, (N_PATTERN_EMIT,)))

    @staticmethod
    def pattern_targets(r: int) -> List[int]:
        if r < 0:
            raise ValueError("precision must be non-negative")
        if r == 0:
            return [PATTERN_INT, PATTERN_EOS]
        return [PATTERN_INT, PATTERN_POINT] + [PATTERN_DIGIT] * r + [PATTERN_EOS]

    def log_prob(self, h: Tensor, r: int) -> Tensor:
        targets = self.pattern_targets(r)
        state = (h, Tensor(np.zeros(self.dim)))
        prev = PATTERN_SOS
        total = None
        for tgt in targets:
            state = self.cell.step(self.emb(prev), state)
            logits = (self.Wout @ state[0]) + self.bout + Tensor(self.MASKS[prev])
            lp = ad.log_softmax(logits)[tgt]
            total = lp if total is None else total + lp
            prev = tgt
        return total

    def log_probs_upto(self, hv: np.ndarray, r_max: int) -> np.ndarray:
        """log p(r) for r = 0..r_max, grad-free."""
        out = np.empty(r_max + 1)
        for r in range(r_max + 1):
            targets = self.pattern_targets(r)
            h = hv[None, :]
            c = np.zeros_like(h)
            prev = PATTERN_SOS
            lp = 0.0
            for tgt in targets:
                x = self.emb.E.value[prev][None, :]
                h, c = self.cell.step_batch(x, h, c)
                logits = h[0] @ self.Wout.value.T + self.bout.value + self.MASKS[prev]
                lp += np_log_softmax(logits)[tgt]
                prev = tgt
            out[r] = lp
        return out


def precision_half_width(r: int) -> float:
    return 0.5 * 10.0 ** (-r)


def _check_on_grid(value: float, r: int):
    scaled = value * 10.0 ** r
    if abs(scaled - round(scaled)) > 1e-6 * max(1.0, abs(scaled)):
        raise ValueError(f"value {value} is not representable at precision r={r}")


class MogHead:
    """Mixture-of-Gaussians numeral model: fixed component bank, hidden-state
    dependent mixture weights, and the precision-pattern model."""

    def __init__(self, params: ParamStore, name: str, dim: int,
                 bank: GaussianMixtureBank, rng: np.random.Generator):
        if bank is None or bank.size == 0:
            raise ValueError("MoG head needs a non-empty component bank")
        self.dim = dim
        self.bank = bank
        self.means = bank.means.copy()
        self.sigmas = np.sqrt(bank.variances)
        self.B = params.create(f"{name}.B", uniform_init(rng, (bank.size, dim)))
        self.pattern = PrecisionPatternModel(params, f"{name}.pattern", dim, rng)

    def mixture_weights(self, h: Tensor) -> Tensor:
        return ad.softmax(self.B @ h)

    def density(self, h: Tensor, v: float) -> float:
        """pdf value q(v); grad-free."""
        with ad.no_grad():
            pi = self.mixture_weights(h).value
        z = (v - self.means) / self.sigmas
        pdf = np.exp(-0.5 * z * z) / (self.sigmas * math.sqrt(2 * math.pi))
        return float(pi @ pdf)

    def _component_cell_masses(self, values, rs) -> np.ndarray:
        """F_k(v + eps_r) - F_k(v - eps_r) per value (rows) and component (cols)."""
        v = np.atleast_1d(np.asarray(values, dtype=np.float64))
        r = np.broadcast_to(np.asarray(rs, dtype=int), v.shape).astype(np.float64)
        eps = (0.5 * np.power(10.0, -r))[:, None]
        scale = self.sigmas[None, :] * math.sqrt(2)
        hi = (v[:, None] + eps - self.means[None, :]) / scale
        lo = (v[:, None] - eps - self.means[None, :]) / scale
        return 0.5 * (erf(hi) - erf(lo))

    def pmf(self, h: Tensor, v: float, r: int) -> float:
        """Discretised mass Q(v|r) under current mixture weights; grad-free."""
        _check_on_grid(v, r)
        with ad.no_grad():
            pi = self.mixture_weights(h).value
        q = self._component_cell_masses(np.array([v]), r)[0]
        return float(pi @ q)

    def log_prob(self, h: Tensor, token: Token) -> Tensor:
        """log p(s) = log p(r) + log Q(v|r); graph mode."""
        _check_on_grid(token.value, token.precision)
        q = self._component_cell_masses(np.array([token.value]), token.precision)[0]
        pi = self.mixture_weights(h)
        cell_mass = ad.tsum(pi * Tensor(q))
        return self.pattern.log_prob(h, token.precision) + ad.log(cell_mass)

    log_prob_token = log_prob

    def candidate_log_probs(self, hv: np.ndarray,
                            candidates: Sequence[Candidate],
                            q_matrix: Optional[np.ndarray] = None) -> np.ndarray:
        values = np.array([c.value for c in candidates])
        rs = np.array([c.precision for c in candidates])
        if q_matrix is None:
            q_matrix = self._component_cell_masses(values, rs)
        pi = np.exp(np_log_softmax(self.B.value @ hv))
        mass = q_matrix @ pi
        r_max = int(rs.max())
        pattern_lp = self.pattern.log_probs_upto(hv, r_max)
        with np.errstate(divide="ignore"):
            return pattern_lp[rs] + np.log(mass)

    def candidate_q_matrix(self, candidates: Sequence[Candidate]) -> np.ndarray:
        """Per-candidate per-component cell masses; h-independent, cacheable."""
        values = np.array([c.value for c in candidates])
        rs = np.array([c.precision for c in candidates])
        return self._component_cell_masses(values, rs)


class CombinationHead:
    """Gated mixture over {closed softmax without UNK, d-RNN, MoG}.

    The closed constituent is a proper distribution over in-vocabulary
    numerals only; it contributes zero mass to out-of-vocabulary numerals.
    """

    STRATEGIES = ("h-softmax", "d-rnn", "mog")

    def __init__(self, params: ParamStore, name: str, dim: int, vocab,
                 bank: GaussianMixtureBank, rng: np.random.Generator):
        self.dim = dim
        self.vocab = vocab
        self.inventory = vocab.in_vocab_numerals()
        self.inv_index = {s: i for i, s in enumerate(self.inventory)}
        self.E_out = params.create(f"{name}.closed.E_out",
                                   uniform_init(rng, (len(self.inventory), dim)))
        self.drnn = DigitRnn(params, f"{name}.drnn", dim, rng)
        self.mog = MogHead(params, f"{name}.mog", dim, bank, rng)
        self.A = params.create(f"{name}.A", uniform_init(rng, (3, dim)))

    def selection_log_probs(self, h: Tensor) -> Tensor:
        return ad.log_softmax(self.A @ h)

    def selection_probs(self, hv: np.ndarray) -> np.ndarray:
        return np.exp(np_log_softmax(self.A.value @ hv))

    def closed_log_prob(self, h: Tensor, surface: str) -> Optional[Tensor]:
        idx = self.inv_index.get(surface)
        if idx is None:
            return None
        return ad.log_softmax(self.E_out @ h)[idx]

    def log_prob_token(self, h: Tensor, token: Token) -> Tensor:
        log_alpha = self.selection_log_probs(h)
        terms = []
        closed = self.closed_log_prob(h, token.surface)
        if closed is not None:
            terms.append(log_alpha[0] + closed)
        terms.append(log_alpha[1] + self.drnn.log_prob(h, token.surface))
        terms.append(log_alpha[2] + self.mog.log_prob(h, token))
        return ad.logsumexp(ad.stack(terms))

    def candidate_log_probs(self, hv: np.ndarray,
                            candidates: Sequence[Candidate],
                            q_matrix: Optional[np.ndarray] = None) -> np.ndarray:
        la = np_log_softmax(self.A.value @ hv)
        closed_lp = np_log_softmax(self.E_out.value @ hv) if self.inventory else None
        n = len(candidates)
        parts = np.full((3, n), -np.inf)
        for i, c in enumerate(candidates):
            idx = self.inv_index.get(c.surface)
            if idx is not None:
                parts[0, i] = closed_lp[idx]
        parts[1] = self.drnn.candidate_log_probs(hv, candidates)
        parts[2] = self.mog.candidate_log_probs(hv, candidates, q_matrix=q_matrix)
        stacked = la[:, None] + parts
        m = stacked.max(axis=0)
        return m + np.log(np.exp(stacked - m[None, :]).sum(axis=0))
