"""Label ordering, target sequences, rmsprop with momentum, and the
mini-batch training loop."""
from collections import Counter
from dataclasses import asdict, dataclass, field
import logging

import numpy as np

from .model import WEIGHT_NAMES, ModelParams, backward_sequence, forward_sequence, trace_loss
from .numerics import NonFiniteError

log = logging.getLogger(__name__)


class DivergedError(RuntimeError):
    def __init__(self, msg="diverged"):
        super().__init__(msg)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    rms_decay: float = 0.9
    momentum: float = 0.9
    epsilon: float = 1e-6
    weight_decay: float = 1e-4
    dropout_rate: float = 0.5
    batch_size: int = 16
    epochs: int = 20
    seed: int = 0

    def __post_init__(self):
        for name in ("rms_decay", "momentum", "dropout_rate"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")
        if self.learning_rate <= 0 or self.epsilon <= 0:
            raise ValueError("learning_rate and epsilon must be > 0")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")

    def to_dict(self):
        return asdict(self)


class LabelOrder:
    """Global label order, most frequent first; ties by label string."""

    def __init__(self, ids):
        ids = [int(i) for i in ids]
        if sorted(ids) != list(range(len(ids))):
            raise ValueError("label order must be a permutation of 0..K-1")
        self.ids = ids
        self.rank = {lab: r for r, lab in enumerate(ids)}

    def __len__(self):
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)

    def __eq__(self, other):
        return isinstance(other, LabelOrder) and self.ids == other.ids


def label_counts(examples):
    return Counter(lab for ex in examples for lab in ex.labels)


def order_labels(examples, vocab):
    if not examples:
        raise ValueError("cannot order labels of an empty dataset")
    counts = label_counts(examples)
    ordered = sorted(vocab.labels, key=lambda s: (-counts[s], s))
    return LabelOrder([vocab.id(s) for s in ordered])


def build_target_sequence(label_ids, order):
    """Sort a label-id set by the global order and append END (``K``)."""
    unknown = [i for i in label_ids if i not in order.rank]
    if unknown:
        raise KeyError(f"unknown label ids {sorted(unknown)}")
    return sorted(label_ids, key=order.rank.__getitem__) + [len(order)]


def sequence_loss(trace, targets):
    """Mean per-step cross-entropy of ``targets`` under the trace's softmaxes."""
    targets = list(targets)
    if len(targets) != len(trace.steps):
        raise ValueError(f"{len(targets)} targets for a trace of {len(trace.steps)} steps")
    return float(-np.mean([np.log(st.probs[t]) for st, t in zip(trace.steps, targets)]))


@dataclass
class OptimizerState:
    cache: dict
    velocity: dict
    step: int = 0

    @classmethod
    def zeros_like(cls, arrays):
        return cls(
            {n: np.zeros_like(a) for n, a in arrays.items()},
            {n: np.zeros_like(a) for n, a in arrays.items()},
        )


def rmsprop_update(params, grads, state, cfg, decay=WEIGHT_NAMES):
    """One rmsprop-with-momentum step, in place.

    ``params`` and ``grads`` map names to arrays; weight decay is added to
    the gradient only for names in ``decay``.
    """
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise DivergedError(f"diverged: non-finite gradient for {name}")
    for name, theta in params.items():
        g = grads[name]
        if cfg.weight_decay and name in decay:
            g = g + cfg.weight_decay * theta
        cache = state.cache[name]
        cache *= cfg.rms_decay
        cache += (1.0 - cfg.rms_decay) * g * g
        vel = state.velocity[name]
        vel *= cfg.momentum
        vel += cfg.learning_rate * g / (np.sqrt(cache) + cfg.epsilon)
        theta -= vel
        if not np.isfinite(theta).all():
            raise DivergedError(f"diverged: non-finite parameter {name}")
    state.step += 1
    return params, state


def batch_schedule(n, batch_size, rng):
    """One epoch's mini-batches: a fresh permutation cut into slices."""
    perm = rng.permutation(n)
    return [perm[i : i + batch_size].tolist() for i in range(0, n, batch_size)]


def seeded_streams(seed):
    """Independent (init, shuffle, dropout) generators derived from one seed."""
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(3)]


def example_gradient(params, image, seq, cfg, rng):
    try:
        trace = forward_sequence(image, seq, params, "train", rng, cfg.dropout_rate)
    except NonFiniteError:
        raise DivergedError() from None
    return trace_loss(trace), backward_sequence(trace, image, params)


@dataclass
class TrainingData:
    """Examples converted to (features, target sequence) pairs."""

    images: list
    targets: list
    skipped: int = 0
    ids: list = field(default_factory=list)


def prepare(examples, vocab, order):
    data = TrainingData([], [])
    for ex in examples:
        if not ex.labels:
            data.skipped += 1
            continue
        data.images.append(np.asarray(ex.features, dtype=np.float64))
        data.targets.append(build_target_sequence(vocab.ids(ex.labels), order))
        data.ids.append(ex.id)
    if data.skipped:
        log.warning("skipping %d example(s) with no labels", data.skipped)
    return data


def fit(examples, vocab, hyper, cfg, order=None, params=None):
    """Train the recurrent head; returns ``(params, order, history)``."""
    if len(vocab) == 0:
        raise ValueError("empty vocabulary")
    if order is None:
        order = order_labels(examples, vocab)
    init_rng, shuffle_rng, drop_rng = seeded_streams(cfg.seed)
    if params is None:
        params = ModelParams.init(hyper, init_rng)
    data = prepare(examples, vocab, order)
    if not data.images:
        raise ValueError("no labelled examples to train on")
    state = OptimizerState.zeros_like(params.arrays)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        losses = []
        for batch in batch_schedule(len(data.images), cfg.batch_size, shuffle_rng):
            total = None
            for k in batch:
                loss, g = example_gradient(params, data.images[k], data.targets[k], cfg, drop_rng)
                if not np.isfinite(loss):
                    raise DivergedError()
                losses.append(loss)
                if total is None:
                    total = {n: a.copy() for n, a in g.items()}
                else:
                    for n, a in g.items():
                        total[n] += a
            for a in total.values():
                a /= len(batch)
            rmsprop_update(params.arrays, total, state, cfg)
        history.append(
            {"epoch": epoch, "mean_loss": float(np.mean(losses)), "examples_skipped": data.skipped}
        )
        log.info("epoch %d mean loss %.6f", epoch, history[-1]["mean_loss"])
    return params, order, history
