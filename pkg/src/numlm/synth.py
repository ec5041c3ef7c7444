"""Deterministic synthetic corpus generator.

The clinical/scientific corpora behind the original experiments are not
distributable, so acceptance runs use generated documents whose numeral
slots follow known distributions. A generation spec names templates with
weights and slot distributions; slot metadata (which token positions carry
which attribute) is emitted alongside the text for slot-level evaluation.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .corpus import tokenize


@dataclass
class SlotInstance:
    doc: int
    token_index: int
    label: str
    value: float


@dataclass
class SynthCorpus:
    lines: Dict[str, List[str]]                 # split -> documents
    slots: Dict[str, List[SlotInstance]]        # split -> numeral slot records

    def save(self, out_dir: str):
        import os
        os.makedirs(out_dir, exist_ok=True)
        for split, docs in self.lines.items():
            with open(os.path.join(out_dir, f"{split}.txt"), "w", encoding="utf-8") as f:
                for line in docs:
                    f.write(line + "\n")
        slot_dump = {
            split: [[s.doc, s.token_index, s.label, s.value] for s in recs]
            for split, recs in self.slots.items()
        }
        with open(os.path.join(out_dir, "slots.json"), "w", encoding="utf-8") as f:
            json.dump(slot_dump, f, sort_keys=True)
            f.write("\n")

    @staticmethod
    def load_slots(path: str) -> Dict[str, List[SlotInstance]]:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
        return {split: [SlotInstance(d, t, lab, val) for d, t, lab, val in recs]
                for split, recs in raw.items()}


def _format_value(v: float, precision: int) -> str:
    return f"{v:.{precision}f}"


def _draw_slot(slot: dict, rng: np.random.Generator,
               filler_pool: List[str]):
    """Returns (surface, numeric value or None)."""
    dist = slot["dist"]
    if dist == "normal":
        v = rng.normal(slot["mean"], slot["std"])
        lo = slot.get("min")
        if lo is not None:
            v = max(v, lo)
        r = int(slot.get("precision", 0))
        s = _format_value(v, r)
        return s, float(s)
    if dist == "uniform_int":
        v = int(rng.integers(slot["low"], slot["high"] + 1))
        return str(v), float(v)
    if dist == "log_uniform":
        # uniform in log10 space, then rounded to the requested precision
        lo, hi = np.log10(slot["low"]), np.log10(slot["high"])
        v = 10.0 ** rng.uniform(lo, hi)
        r = int(slot.get("precision", 0))
        s = _format_value(v, r)
        return s, float(s)
    if dist == "choice":
        return str(slot["values"][rng.integers(0, len(slot["values"]))]), None
    if dist == "filler":
        return filler_pool[rng.integers(0, len(filler_pool))], None
    raise ValueError(f"unknown slot distribution {dist!r}")


def generate_synthetic_corpus(spec: dict, seed: int) -> SynthCorpus:
    """Generate train/dev/test splits; fully determined by (spec, seed)."""
    rng = np.random.default_rng(seed)
    filler_pool = [f"w{i:03d}" for i in range(int(spec.get("filler_word_types", 0)))]
    templates = spec["templates"]
    weights = np.array([t.get("weight", 1.0) for t in templates], dtype=float)
    weights = weights / weights.sum()
    sizes = {"train": int(spec["n_train"]), "dev": int(spec["n_dev"]),
             "test": int(spec["n_test"])}
    lines: Dict[str, List[str]] = {}
    slots: Dict[str, List[SlotInstance]] = {}
    for split, n_docs in sizes.items():
        docs: List[str] = []
        recs: List[SlotInstance] = []
        for d in range(n_docs):
            t = templates[rng.choice(len(templates), p=weights)]
            pieces = t["text"].split()
            out_pieces: List[str] = []
            for i, piece in enumerate(pieces):
                if piece.startswith("{") and piece.endswith("}"):
                    name = piece[1:-1]
                    surface, value = _draw_slot(t["slots"][name], rng, filler_pool)
                    if value is not None:
                        recs.append(SlotInstance(d, len(out_pieces),
                                                 t.get("label", name), value))
                    out_pieces.append(surface)
                else:
                    out_pieces.append(piece)
            line = " ".join(out_pieces)
            if len(tokenize(line)) != len(out_pieces):
                raise ValueError(f"template {t['text']!r} retokenises unevenly")
            docs.append(line)
        lines[split] = docs
        slots[split] = recs
    return SynthCorpus(lines, slots)


def default_spec(n_train: int = 2000, n_dev: int = 250, n_test: int = 400,
                 filler_word_types: int = 250) -> dict:
    """A clinical-flavoured mix: one continuous attribute (high numeral OOV),
    integer dimensions, citation years, and numeral-free filler."""
    author_names = [f"author{i:02d}" for i in range(30)]
    return {
        "n_train": n_train, "n_dev": n_dev, "n_test": n_test,
        "filler_word_types": filler_word_types,
        "templates": [
            {"label": "ef", "weight": 2.0,
             "text": "the ejection fraction is {x} % on this scan",
             "slots": {"x": {"dist": "normal", "mean": 58.0, "std": 8.0,
                             "precision": 1, "min": 0.5}}},
            {"label": "dim", "weight": 1.0,
             "text": "the aortic root measured {a} x {b} mm in diameter",
             "slots": {"a": {"dist": "normal", "mean": 38.0, "std": 7.0,
                             "precision": 0, "min": 1.0},
                       "b": {"dist": "normal", "mean": 38.0, "std": 7.0,
                             "precision": 0, "min": 1.0}}},
            {"label": "year", "weight": 1.0,
             "text": "{name} et al . {y} described this finding",
             "slots": {"y": {"dist": "uniform_int", "low": 1990, "high": 2018},
                       "name": {"dist": "choice", "values": author_names}}},
            {"label": "filler", "weight": 2.0,
             "text": "the patient {w1} {w2} and remained {w3} throughout review",
             "slots": {"w1": {"dist": "filler"}, "w2": {"dist": "filler"},
                       "w3": {"dist": "filler"}}},
        ],
    }


def benford_spec(n_train: int = 3000, n_dev: int = 200, n_test: int = 200) -> dict:
    """Single-template corpus of integers log-uniform on [1, 10^6]."""
    return {
        "n_train": n_train, "n_dev": n_dev, "n_test": n_test,
        "filler_word_types": 0,
        "templates": [
            {"label": "mag", "weight": 1.0,
             "text": "value {v} recorded",
             "slots": {"v": {"dist": "log_uniform", "low": 1.0, "high": 1e6,
                             "precision": 0}}},
        ],
    }


def load_spec(path: str) -> dict:
    with open(path, encoding="utf-8") as f:
        return json.load(f)
