"""Numeracy-aware neural language models over float64 numpy."""

from .corpus import (Kind, Token, Vocabulary, build_vocabulary, corpus_stats,
                     normalize_numeral, parse_value, read_corpus_file,
                     tokenize, tokenize_corpus)
from .gmm import GaussianMixtureBank, build_component_bank, em_fit
from .heads import MODEL_KINDS, NumerateLM, canonical_kind
from .train import RunConfig, load_checkpoint, save_checkpoint, train_model

__all__ = [
    "Kind", "Token", "Vocabulary", "build_vocabulary", "corpus_stats",
    "normalize_numeral", "parse_value", "read_corpus_file", "tokenize",
    "tokenize_corpus", "GaussianMixtureBank", "build_component_bank",
    "em_fit", "MODEL_KINDS", "NumerateLM", "canonical_kind", "RunConfig",
    "load_checkpoint", "save_checkpoint", "train_model",
]

__version__ = "0.1.0"
