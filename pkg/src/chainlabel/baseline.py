"""Independent-output comparison model: one linear scorer per label on the
same image features, trained with binary cross-entropy (default) or a
multinomial softmax over the label set."""
from dataclasses import dataclass
import logging

import numpy as np

from .data import feature_matrix
from .model import decode_array, encode_array
from .numerics import glorot_init, sigmoid
from .train import DivergedError, OptimizerState, batch_schedule, rmsprop_update, seeded_streams

log = logging.getLogger(__name__)

LOSSES = ("bce", "softmax")


@dataclass
class BaselineParams:
    W: np.ndarray  # K x d_i
    b: np.ndarray  # K
    loss: str = "bce"

    def arrays(self):
        return {"W": self.W, "b": self.b}

    def to_json(self):
        return {"loss": self.loss, "W": encode_array(self.W), "b": encode_array(self.b)}

    @classmethod
    def from_json(cls, obj, hyper):
        W = decode_array(obj["W"], (hyper.K, hyper.d_i), "baseline W")
        b = decode_array(obj["b"], (hyper.K,), "baseline b")
        return cls(W, b, obj.get("loss", "bce"))


def label_matrix(examples, vocab):
    Y = np.zeros((len(examples), len(vocab)))
    for n, ex in enumerate(examples):
        Y[n, sorted(vocab.ids(ex.labels))] = 1.0
    return Y


def _batch_grad(W, b, X, Y, loss):
    z = X @ W.T + b
    if loss == "bce":
        p = sigmoid(z)
        value = np.mean(np.sum(Y * np.logaddexp(0, -z) + (1 - Y) * np.logaddexp(0, z), axis=1))
        dz = (p - Y) / len(X)
    else:
        # target distribution: uniform over the example's labels
        T = Y / np.maximum(Y.sum(axis=1, keepdims=True), 1.0)
        z = z - z.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        value = -np.mean(np.sum(T * logp, axis=1))
        dz = (np.exp(logp) * T.sum(axis=1, keepdims=True) - T) / len(X)
    return value, {"W": dz.T @ X, "b": dz.sum(axis=0)}


def baseline_fit(examples, vocab, cfg, loss="bce"):
    """Fit the per-label scorers with the same optimizer and batch schedule
    as :func:`chainlabel.train.fit`. Returns ``(params, history)``."""
    if loss not in LOSSES:
        raise ValueError(f"unknown baseline loss {loss!r}")
    keep = [ex for ex in examples if ex.labels]
    skipped = len(examples) - len(keep)
    if skipped:
        log.warning("skipping %d example(s) with no labels", skipped)
    X = feature_matrix(keep)
    Y = label_matrix(keep, vocab)
    init_rng, shuffle_rng, _ = seeded_streams(cfg.seed)
    params = BaselineParams(glorot_init(len(vocab), X.shape[1], init_rng), np.zeros(len(vocab)), loss)
    arrays = params.arrays()
    state = OptimizerState.zeros_like(arrays)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        losses = []
        for batch in batch_schedule(len(X), cfg.batch_size, shuffle_rng):
            value, grads = _batch_grad(params.W, params.b, X[batch], Y[batch], loss)
            if not np.isfinite(value):
                raise DivergedError()
            losses.append(value * len(batch))
            rmsprop_update(arrays, grads, state, cfg, decay=("W",))
        history.append({"epoch": epoch, "mean_loss": float(np.sum(losses) / len(X)), "examples_skipped": skipped})
    return params, history


def baseline_scores(features, params):
    z = np.asarray(features, dtype=np.float64) @ params.W.T + params.b
    return sigmoid(z)


def baseline_topk(features, params, k):
    """Label ids by descending score, ties to the smaller id."""
    K = params.W.shape[0]
    if not 1 <= k <= K:
        raise ValueError(f"k must lie in 1..{K}")
    s = baseline_scores(features, params)
    return [int(c) for c in np.argsort(-s, kind="stable")[:k]]


def baseline_predict(features, params, threshold=0.5):
    """Labels whose score clears ``threshold``, ranked."""
    s = baseline_scores(features, params)
    return [int(c) for c in np.argsort(-s, kind="stable") if s[c] >= threshold]
