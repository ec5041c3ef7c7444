"""Perplexity and adjusted perplexity by token class, number-line decoding
with regression metrics, Benford analysis, embedding-similarity reports and
the combination-model strategy-selection report.
"""
from __future__ import annotations

import csv
import json
import math
import statistics
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from .corpus import Kind, Token, Vocabulary
from .gmm import percentile_init
from .heads import NumerateLM
from .numeral_heads import Candidate, CombinationHead, DigitRnn, MogHead


@dataclass
class TokenRecord:
    kind: Kind
    oov: bool
    logp: float


CLASS_FILTERS = ("words", "numerals", "all")


def _in_filter(rec: TokenRecord, class_filter: str) -> bool:
    if class_filter == "all":
        return True
    if class_filter == "words":
        return rec.kind is Kind.Word
    if class_filter == "numerals":
        return rec.kind is Kind.Numeral
    raise ValueError(f"unknown class filter {class_filter!r}")


def score_corpus(model: NumerateLM,
                 corpus: Sequence[Sequence[Token]]) -> List[TokenRecord]:
    records: List[TokenRecord] = []
    for doc in corpus:
        if not doc:
            continue
        logps, _ = model.score_doc(doc)
        for tok, lp in zip(doc, logps):
            records.append(TokenRecord(tok.kind, model.vocab.is_oov(tok), float(lp)))
    return records


def perplexity(records: Sequence[TokenRecord], class_filter: str = "all") -> float:
    logps = [r.logp for r in records if _in_filter(r, class_filter)]
    if not logps:
        return float("nan")
    if any(math.isinf(lp) for lp in logps):
        return math.inf
    return math.exp(-sum(logps) / len(logps))


def oov_type_sets(corpus: Sequence[Sequence[Token]],
                  vocab: Vocabulary) -> Dict[str, Set[str]]:
    """Distinct out-of-vocabulary types per class, from this corpus only."""
    out: Dict[str, Set[str]] = {"word": set(), "numeral": set()}
    for doc in corpus:
        for tok in doc:
            if vocab.is_oov(tok):
                out["numeral" if tok.is_numeral else "word"].add(tok.surface)
    return out


def _adjusted_classes(open_numeral_vocab: bool) -> Tuple[str, ...]:
    # word OOV is always mapped to UNK; numerals only under closed strategies
    return ("word",) if open_numeral_vocab else ("word", "numeral")


def adjusted_perplexity(records: Sequence[TokenRecord],
                        oov_sizes: Dict[str, int],
                        open_numeral_vocab: bool,
                        class_filter: str = "all") -> float:
    """Closed form: exp(H + sum_c H_adjust^c)."""
    sel = [r for r in records if _in_filter(r, class_filter)]
    if not sel:
        return float("nan")
    if any(math.isinf(r.logp) for r in sel):
        return math.inf
    n = len(sel)
    h = -sum(r.logp for r in sel) / n
    h_adj = 0.0
    for cls in _adjusted_classes(open_numeral_vocab):
        kind = Kind.Word if cls == "word" else Kind.Numeral
        m = sum(1 for r in sel if r.oov and r.kind is kind)
        if m == 0:
            continue
        if oov_sizes.get(cls, 0) < 1:
            raise ValueError(f"{cls} tokens are OOV but the OOV type set is empty")
        h_adj += (m / n) * math.log(oov_sizes[cls])
    return math.exp(h + h_adj)


def adjusted_perplexity_redistributed(records: Sequence[TokenRecord],
                                      oov_sizes: Dict[str, int],
                                      open_numeral_vocab: bool,
                                      class_filter: str = "all") -> float:
    """Direct route: divide each OOV token's probability by |OOV_c|."""
    sel = [r for r in records if _in_filter(r, class_filter)]
    if not sel:
        return float("nan")
    adjusted = _adjusted_classes(open_numeral_vocab)
    total = 0.0
    for r in sel:
        lp = r.logp
        cls = "numeral" if r.kind is Kind.Numeral else "word"
        if r.oov and cls in adjusted:
            if oov_sizes.get(cls, 0) < 1:
                raise ValueError(f"{cls} tokens are OOV but the OOV type set is empty")
            lp = lp - math.log(oov_sizes[cls])
        if math.isinf(lp):
            return math.inf
        total += lp
    return math.exp(-total / len(sel))


# -- number-line evaluation --------------------------------------------------
def choose_decimal_limit(precisions: Sequence[int], coverage: float = 0.9) -> int:
    if not 0 < coverage <= 1:
        raise ValueError("coverage must be in (0, 1]")
    if not precisions:
        return 0
    n = 0
    total = len(precisions)
    while sum(1 for r in precisions if r <= n) / total < coverage:
        n += 1
    return n


def build_candidate_set(train_values: Sequence[float], vocab: Vocabulary,
                        n: int) -> List[Candidate]:
    """In-vocabulary numbers plus 100 training percentile points, each
    rendered at every precision r = 0..n; deduplicated by surface."""
    if not train_values:
        raise ValueError("no training values to build candidates from")
    bases = [float(s) for s in vocab.in_vocab_numerals()]
    bases.extend(percentile_init(train_values, 100).tolist())
    seen = {}
    for v in bases:
        for r in range(n + 1):
            surface = f"{v:.{r}f}"
            if surface not in seen:
                seen[surface] = Candidate(surface, float(surface), r)
    return sorted(seen.values(), key=lambda c: (c.value, c.precision))


def _candidate_kwargs(model: NumerateLM, candidates: Sequence[Candidate]) -> dict:
    """Per-checkpoint cacheable pieces of candidate scoring."""
    branch = getattr(model.strategy, "numeral_branch", None)
    if isinstance(branch, MogHead):
        return {"q_matrix": branch.candidate_q_matrix(candidates)}
    if isinstance(branch, CombinationHead):
        return {"q_matrix": branch.mog.candidate_q_matrix(candidates)}
    return {}


def decode_number(model: NumerateLM, hv: np.ndarray,
                  candidates: Sequence[Candidate], **kw) -> Candidate:
    """Most probable candidate under the numeral branch; ties break toward
    smaller value, then fewer decimals."""
    scores = model.numeral_candidate_log_probs(hv, candidates, **kw)
    best = 0
    for i in range(1, len(candidates)):
        ci, cb = candidates[i], candidates[best]
        key_i = (scores[i], -ci.value, -ci.precision)
        key_b = (scores[best], -cb.value, -cb.precision)
        if key_i > key_b:
            best = i
    return candidates[best]


@dataclass
class DecodeResult:
    doc: int
    position: int
    truth: float
    predicted: float
    predicted_surface: str


def decode_corpus(model: NumerateLM, corpus: Sequence[Sequence[Token]],
                  candidates: Sequence[Candidate]) -> List[DecodeResult]:
    kw = _candidate_kwargs(model, candidates)
    results: List[DecodeResult] = []
    for d, doc in enumerate(corpus):
        if not doc:
            continue
        _, states = model.score_doc(doc, collect_numeral_states=True)
        for pos, hv in states:
            pred = decode_number(model, hv, candidates, **kw)
            results.append(DecodeResult(d, pos, doc[pos].value,
                                        pred.value, pred.surface))
    return results


def regression_metrics(truths: Sequence[float], preds: Sequence[float]) -> dict:
    if len(truths) != len(preds):
        raise ValueError("truths and predictions differ in length")
    e = np.asarray(truths, dtype=float) - np.asarray(preds, dtype=float)
    abs_e = np.abs(e)
    nonzero = np.asarray(truths, dtype=float) != 0.0
    excluded = int((~nonzero).sum())
    out = {
        "rmse": float(np.sqrt(np.mean(e * e))) if e.size else None,
        "mae": float(abs_e.mean()) if e.size else None,
        "mdae": float(np.median(abs_e)) if e.size else None,
        "excluded_zero_targets": excluded,
    }
    if nonzero.any():
        pe = np.abs(e[nonzero] / np.asarray(truths, dtype=float)[nonzero])
        out["mape"] = float(pe.mean() * 100.0)
        out["mdape"] = float(np.median(pe) * 100.0)
    else:
        out["mape"] = None
        out["mdape"] = None
    return out


# -- Benford -----------------------------------------------------------------
def benford_reference(position: int = 1) -> np.ndarray:
    """P(digit at the given significant position) under the first-digit law."""
    if position == 1:
        return np.array([math.log10(1 + 1 / d) for d in range(1, 10)])
    lo = 10 ** (position - 2)
    hi = 10 ** (position - 1)
    return np.array([
        sum(math.log10(1 + 1 / (10 * m + d)) for m in range(lo, hi))
        for d in range(10)
    ])


def significant_digit(value: float, position: int = 1) -> Optional[int]:
    """Digit at the given significant position of a positive value."""
    if value <= 0 or not math.isfinite(value):
        return None
    digits = f"{value:.12e}".replace(".", "").split("e")[0].lstrip("0")
    if len(digits) < position:
        return None
    return int(digits[position - 1])


def benford_corpus_distribution(values: Iterable[float],
                                position: int = 1) -> np.ndarray:
    offset = 1 if position == 1 else 0
    counts = np.zeros(10 - offset)
    for v in values:
        d = significant_digit(v, position)
        if d is not None and d >= offset:
            counts[d - offset] += 1
    total = counts.sum()
    return counts / total if total else counts


def benford_model_distribution(model: NumerateLM,
                               corpus: Sequence[Sequence[Token]]) -> np.ndarray:
    """First-digit distribution of a d-RNN branch, marginalising the first
    emission over context states at numeral positions ('0' excluded)."""
    branch = getattr(model.strategy, "numeral_branch", None)
    drnn = branch if isinstance(branch, DigitRnn) else \
        branch.drnn if isinstance(branch, CombinationHead) else None
    if drnn is None:
        raise ValueError("model has no digit-RNN branch")
    acc = np.zeros(9)
    n = 0
    for doc in corpus:
        if not doc:
            continue
        _, states = model.score_doc(doc, collect_numeral_states=True)
        for _, hv in states:
            probs = drnn.first_emission_probs(hv)
            digits = probs[1:10]  # symbols '1'..'9'
            acc += digits / digits.sum()
            n += 1
    if n == 0:
        raise ValueError("no numeral positions in corpus")
    return acc / n


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


# -- representation reports ---------------------------------------------------
def cosine_similarity_matrix(rows: np.ndarray) -> np.ndarray:
    if rows.size == 0:
        return np.zeros((0, 0))
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    unit = rows / np.maximum(norms, 1e-300)
    return unit @ unit.T


def output_embedding_rows(model: NumerateLM, surfaces: Sequence[str]
                          ) -> Tuple[List[str], np.ndarray, List[str]]:
    """Output embedding per requested token; unknown tokens are skipped."""
    vocab = model.vocab
    rows: List[np.ndarray] = []
    kept: List[str] = []
    skipped: List[str] = []
    strategy = model.strategy
    for s in surfaces:
        idx = vocab.index_of(s)
        if idx is None:
            skipped.append(s)
            continue
        if hasattr(strategy, "E_out"):  # flat softmax
            rows.append(strategy.E_out.value[idx])
        else:
            if idx < vocab.n_words:
                rows.append(strategy.E_word.value[idx])
            else:
                branch = strategy.numeral_branch
                if not hasattr(branch, "E_out"):
                    skipped.append(s)
                    continue
                rows.append(branch.E_out.value[idx - vocab.n_words])
        kept.append(s)
    return kept, np.array(rows), skipped


def embedding_similarity_report(model: NumerateLM,
                                surfaces: Sequence[str]
                                ) -> Tuple[List[str], np.ndarray, List[str]]:
    kept, rows, skipped = output_embedding_rows(model, surfaces)
    return kept, cosine_similarity_matrix(rows), skipped


def digit_similarity_report(model: NumerateLM) -> Tuple[List[str], np.ndarray]:
    """Cosine similarities of the digit-RNN output digit embeddings."""
    branch = getattr(model.strategy, "numeral_branch", None)
    drnn = branch if isinstance(branch, DigitRnn) else \
        branch.drnn if isinstance(branch, CombinationHead) else None
    if drnn is None:
        raise ValueError("model has no digit-RNN branch")
    labels = [str(d) for d in range(10)]
    return labels, cosine_similarity_matrix(drnn.Wout.value[:10])


def write_similarity_csv(path: str, labels: Sequence[str], matrix: np.ndarray):
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow([""] + list(labels))
        for lab, row in zip(labels, matrix):
            w.writerow([lab] + [repr(float(x)) for x in row])


# -- combination strategy selection -------------------------------------------
def strategy_selection(model: NumerateLM,
                       corpus: Sequence[Sequence[Token]]) -> List[dict]:
    """Mean selection weights per numeral type under a combination model."""
    branch = getattr(model.strategy, "numeral_branch", None)
    if not isinstance(branch, CombinationHead):
        raise ValueError("strategy selection needs a combination model")
    sums: Dict[str, np.ndarray] = {}
    counts: Dict[str, int] = {}
    for doc in corpus:
        if not doc:
            continue
        _, states = model.score_doc(doc, collect_numeral_states=True)
        for pos, hv in states:
            s = doc[pos].surface
            alpha = branch.selection_probs(hv)
            sums[s] = sums.get(s, np.zeros(3)) + alpha
            counts[s] = counts.get(s, 0) + 1
    rows = []
    for s in sorted(sums, key=lambda k: (-counts[k], k)):
        mean = sums[s] / counts[s]
        rows.append({"surface": s, "count": counts[s],
                     "alpha_h_softmax": float(mean[0]),
                     "alpha_d_rnn": float(mean[1]),
                     "alpha_mog": float(mean[2])})
    return rows


def write_selection_csv(path: str, rows: Sequence[dict]):
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["surface", "count", "alpha_h_softmax", "alpha_d_rnn", "alpha_mog"])
        for r in rows:
            w.writerow([r["surface"], r["count"], repr(r["alpha_h_softmax"]),
                        repr(r["alpha_d_rnn"]), repr(r["alpha_mog"])])


# -- full report ---------------------------------------------------------------
def evaluate(model: NumerateLM,
             test_corpus: Sequence[Sequence[Token]],
             train_corpus: Sequence[Sequence[Token]],
             coverage: float = 0.9) -> dict:
    """End-to-end EvalReport: PP/APP per class, number-line regression over
    the candidate set, and the test-corpus first-digit table."""
    vocab = model.vocab
    records = score_corpus(model, test_corpus)
    oov_sets = oov_type_sets(test_corpus, vocab)
    oov_sizes = {cls: len(types) for cls, types in oov_sets.items()}
    open_num = model.open_numeral_vocab
    pp = {f: perplexity(records, f) for f in CLASS_FILTERS}
    app = {f: adjusted_perplexity(records, oov_sizes, open_num, f)
           for f in CLASS_FILTERS}

    train_numerals = [t for doc in train_corpus for t in doc if t.is_numeral]
    train_values = [t.value for t in train_numerals]
    reg: dict
    benford: dict
    if train_values and any(t.is_numeral for doc in test_corpus for t in doc):
        n = choose_decimal_limit([t.precision for t in train_numerals], coverage)
        candidates = build_candidate_set(train_values, vocab, n)
        decoded = decode_corpus(model, test_corpus, candidates)
        reg = regression_metrics([d.truth for d in decoded],
                                 [d.predicted for d in decoded])
        test_values = [t.value for doc in test_corpus for t in doc if t.is_numeral]
        dist = benford_corpus_distribution(test_values, position=1)
        ref = benford_reference(1)
        benford = {
            "position": 1,
            "digits": {str(d + 1): float(dist[d]) for d in range(9)},
            "reference": {str(d + 1): float(ref[d]) for d in range(9)},
        }
        cand_meta = {"size": len(candidates), "decimal_limit": n}
    else:
        reg = {"rmse": None, "mae": None, "mdae": None, "mape": None,
               "mdape": None, "excluded_zero_targets": 0}
        benford = {"position": 1, "digits": {}, "reference": {}}
        cand_meta = {"size": 0, "decimal_limit": 0}

    return {
        "model": model.kind,
        "pp": pp,
        "app": app,
        "reg": reg,
        "benford": benford,
        "candidates": cand_meta,
        "oov": {
            "word_types": oov_sizes["word"],
            "numeral_types": oov_sizes["numeral"],
            "counting": "distinct OOV types observed in the test split",
            "numeral_class_adjusted": not open_num,
        },
    }


def write_eval_json(report: dict, path: str):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
