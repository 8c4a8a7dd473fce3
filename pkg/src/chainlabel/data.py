"""Datasets of precomputed image features, label vocabularies, and the
synthetic co-occurrence generator.

On disk a dataset is UTF-8 JSON Lines, one object per line::

    {"id": "a", "features": [0.0, 1.0], "labels": ["cat", "dog"]}
"""
from dataclasses import dataclass
import json
import math

import numpy as np

from .numerics import make_rng


@dataclass(frozen=True)
class Example:
    id: str
    features: np.ndarray
    labels: frozenset

    def __eq__(self, other):
        return (
            isinstance(other, Example)
            and self.id == other.id
            and self.labels == other.labels
            and np.array_equal(self.features, other.features)
        )

    def to_json(self):
        return {"id": self.id, "features": [float(x) for x in self.features], "labels": sorted(self.labels)}


class LabelVocab:
    """Label string <-> id map; ids follow sorted label order.

    END and START take ids ``K`` and ``K + 1``.
    """

    def __init__(self, labels):
        labels = list(labels)
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate label in vocabulary")
        self.labels = labels
        self._ids = {s: i for i, s in enumerate(labels)}

    @classmethod
    def from_examples(cls, examples):
        return cls(sorted({lab for ex in examples for lab in ex.labels}))

    def __len__(self):
        return len(self.labels)

    def __eq__(self, other):
        return isinstance(other, LabelVocab) and self.labels == other.labels

    @property
    def end(self):
        return len(self.labels)

    @property
    def start(self):
        return len(self.labels) + 1

    def id(self, label):
        try:
            return self._ids[label]
        except KeyError:
            raise KeyError(f"unknown label {label!r}") from None

    def ids(self, labels):
        return {self.id(s) for s in labels}

    def label(self, i):
        return self.labels[i]


def feature_matrix(examples):
    return np.stack([ex.features for ex in examples])


def parse_example(obj, where=""):
    if not isinstance(obj, dict) or set(obj) != {"id", "features", "labels"}:
        raise ValueError(f"{where}expected an object with exactly id/features/labels")
    if not isinstance(obj["id"], str):
        raise ValueError(f"{where}id must be a string")
    feats = obj["features"]
    if not isinstance(feats, list) or not feats or not all(
        isinstance(x, (int, float)) and not isinstance(x, bool) for x in feats
    ):
        raise ValueError(f"{where}features must be a non-empty list of numbers")
    feats = np.asarray(feats, dtype=np.float64)
    if not np.isfinite(feats).all():
        raise ValueError(f"{where}non-finite feature value")
    labels = obj["labels"]
    if not isinstance(labels, list) or not all(isinstance(s, str) for s in labels):
        raise ValueError(f"{where}labels must be a list of strings")
    if len(set(labels)) != len(labels):
        raise ValueError(f"{where}duplicate label")
    return Example(obj["id"], feats, frozenset(labels))


def load_dataset(path):
    """Read a JSONL dataset; returns ``(examples, vocab)``."""
    examples = []
    seen = set()
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}: "
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{where}malformed JSON ({exc.msg})") from None
            ex = parse_example(obj, where)
            if dim is None:
                dim = ex.features.size
            elif ex.features.size != dim:
                raise ValueError(f"{where}feature dim {ex.features.size}, expected {dim}")
            if ex.id in seen:
                raise ValueError(f"{where}duplicate id {ex.id!r}")
            seen.add(ex.id)
            examples.append(ex)
    return examples, LabelVocab.from_examples(examples)


def dataset_lines(examples):
    for ex in examples:
        yield json.dumps(ex.to_json(), ensure_ascii=False) + "\n"


def save_dataset(examples, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(dataset_lines(examples))


def train_test_split(examples, test_fraction, seed):
    """Seeded shuffle, then the first ``round(n * test_fraction)`` go to test."""
    if not 0.0 <= test_fraction < 1.0:
        raise ValueError("test_fraction must lie in [0, 1)")
    perm = make_rng(seed).permutation(len(examples))
    n_test = int(round(len(examples) * test_fraction))
    test = [examples[i] for i in sorted(perm[:n_test])]
    train = [examples[i] for i in sorted(perm[n_test:])]
    return train, test


@dataclass(frozen=True)
class SynthConfig:
    groups: int = 4
    context_per_group: int = 2
    p_co: float = 0.9
    feature_dim: int = 16
    signal: float = 1.0
    noise: float = 0.3
    per_group: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.groups < 1 or self.context_per_group < 0 or self.per_group < 1:
            raise ValueError("groups, per_group must be >= 1 and context_per_group >= 0")
        if not 0.0 < self.p_co <= 1.0:
            raise ValueError("p_co must lie in (0, 1]")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        if self.feature_dim < self.groups:
            raise ValueError("feature_dim must be >= groups (one signal block per group)")


def dominant_label(g):
    return f"g{g}"


def context_label(g, c):
    return f"g{g}c{c}"


def group_labels(cfg):
    """``[(dominant, [contexts...]), ...]`` per group."""
    return [
        (dominant_label(g), [context_label(g, c) for c in range(cfg.context_per_group)])
        for g in range(cfg.groups)
    ]


def signal_block(cfg, g):
    width = cfg.feature_dim // cfg.groups
    return slice(g * width, (g + 1) * width)


def synth_generate(cfg):
    """Planted co-occurrence data.

    Each example belongs to one group: it always carries the group's dominant
    label and each context label independently with probability ``p_co``.
    Features are ``signal`` on the group's block plus N(0, noise^2) on every
    dimension, so they identify the group but say nothing else about which
    context labels are present.
    """
    rng = make_rng(cfg.seed)
    examples = []
    for g, (dom, ctx) in enumerate(group_labels(cfg)):
        block = signal_block(cfg, g)
        for n in range(cfg.per_group):
            present = rng.random(len(ctx)) < cfg.p_co
            labels = frozenset([dom] + [c for c, keep in zip(ctx, present) if keep])
            x = np.zeros(cfg.feature_dim)
            x[block] = cfg.signal
            x += cfg.noise * rng.standard_normal(cfg.feature_dim)
            examples.append(Example(f"g{g}-{n:05d}", x, labels))
    return examples


def binomial_band(p, n, width=3.0):
    """``p +/- width * sqrt(p (1 - p) / n)``."""
    half = width * math.sqrt(p * (1.0 - p) / n)
    return p - half, p + half
