"""Multi-label evaluation: per-class and overall precision/recall/F1, MAP@N,
and nearest-neighbour queries in the label-embedding space.

Predictions and ground truth are mappings ``image id -> labels``; predicted
lists are ranked (first = most confident). Any 0/0 ratio is taken as 0.
"""
from dataclasses import asdict, dataclass, field
import logging

import numpy as np

log = logging.getLogger(__name__)


def _ratio(num, den):
    return num / den if den else 0.0


def f1(p, r):
    return _ratio(2.0 * p * r, p + r)


def _aligned(predictions, truth):
    if set(predictions) != set(truth):
        missing = set(truth) - set(predictions)
        extra = set(predictions) - set(truth)
        raise ValueError(f"image ids differ: {len(missing)} without prediction, {len(extra)} unknown")
    for i, pred in predictions.items():
        if len(set(pred)) != len(pred):
            raise ValueError(f"duplicate label in prediction for {i!r}")
    return sorted(truth)


def overall_metrics(predictions, truth):
    """Pooled ``(O_P, O_R, O_F1)``; images with empty truth are left out."""
    hits = n_pred = n_true = 0
    skipped = 0
    for i in _aligned(predictions, truth):
        t = set(truth[i])
        if not t:
            skipped += 1
            continue
        p = set(predictions[i])
        hits += len(p & t)
        n_pred += len(p)
        n_true += len(t)
    if skipped:
        log.warning("%d image(s) with empty ground truth excluded", skipped)
    P, R = _ratio(hits, n_pred), _ratio(hits, n_true)
    return P, R, f1(P, R)


@dataclass
class ClassStats:
    label: object
    precision: float
    recall: float
    support: int
    tp: int = 0
    fp: int = 0
    fn: int = 0


def per_class_metrics(predictions, truth, labels):
    """``(C_P, C_R, C_F1, table)`` averaged uniformly over ``labels``."""
    ids = _aligned(predictions, truth)
    tp = dict.fromkeys(labels, 0)
    fp = dict.fromkeys(labels, 0)
    fn = dict.fromkeys(labels, 0)
    for i in ids:
        p, t = set(predictions[i]), set(truth[i])
        unknown = (p | t) - set(tp)
        if unknown:
            raise ValueError(f"labels outside the vocabulary: {sorted(map(str, unknown))}")
        for c in p & t:
            tp[c] += 1
        for c in p - t:
            fp[c] += 1
        for c in t - p:
            fn[c] += 1
    table = [
        ClassStats(c, _ratio(tp[c], tp[c] + fp[c]), _ratio(tp[c], tp[c] + fn[c]), tp[c] + fn[c], tp[c], fp[c], fn[c])
        for c in labels
    ]
    if not table:
        return 0.0, 0.0, 0.0, table
    CP = float(np.mean([row.precision for row in table]))
    CR = float(np.mean([row.recall for row in table]))
    return CP, CR, f1(CP, CR), table


def average_precision(ranked, truth, n):
    ranked = list(ranked)
    if len(set(ranked)) != len(ranked):
        raise ValueError("duplicate label in ranked list")
    truth = set(truth)
    if not truth:
        raise ValueError("empty ground truth")
    hits = 0
    total = 0.0
    for r, lab in enumerate(ranked[:n], 1):
        if lab in truth:
            hits += 1
            total += hits / r
    return total / min(n, len(truth))


def map_at_n(ranked, truth, n):
    """Mean over images of the AP of each image's top-``n`` ranking."""
    ids = _aligned(ranked, truth)
    aps = [average_precision(ranked[i], truth[i], n) for i in ids if truth[i]]
    return float(np.mean(aps)) if aps else 0.0


@dataclass
class MetricsReport:
    k: int
    N: int
    C_P: float
    C_R: float
    C_F1: float
    O_P: float
    O_R: float
    O_F1: float
    MAP: float
    per_class: list = field(default_factory=list)

    def to_json(self):
        doc = asdict(self)
        doc["per_class"] = [
            {"label": row.label, "precision": row.precision, "recall": row.recall, "support": row.support}
            for row in self.per_class
        ]
        return doc


def evaluate(predictions, truth, labels, k, n=None, ranked=None):
    """Full report. ``predictions`` are cut to ``k``; ``ranked`` (defaults to
    ``predictions``) feeds MAP@``n``."""
    n = k if n is None else n
    cut = {i: list(p)[:k] for i, p in predictions.items()}
    OP, OR, OF = overall_metrics(cut, truth)
    CP, CR, CF, table = per_class_metrics(cut, truth, labels)
    ranked = predictions if ranked is None else ranked
    return MetricsReport(k, n, CP, CR, CF, OP, OR, OF, map_at_n(ranked, truth, n), table)


def nearest_labels(query, params, m, exclude=()):
    """The ``m`` real labels whose embedding rows are most cosine-similar to
    ``query``, as ``(label_id, similarity)`` pairs."""
    query = np.asarray(query, dtype=np.float64)
    qn = np.linalg.norm(query)
    if qn == 0:
        raise ValueError("zero-norm query")
    K = params.hyper.K
    exclude = set(exclude)
    if m > K - len(exclude & set(range(K))):
        raise ValueError(f"only {K - len(exclude)} labels available, asked for {m}")
    rows = params.U_l[:K]
    norms = np.linalg.norm(rows, axis=1)
    sims = rows @ query / np.where(norms > 0, norms * qn, 1.0)
    cands = [(c, float(sims[c])) for c in range(K) if c not in exclude]
    cands.sort(key=lambda cs: (-cs[1], cs[0]))
    return cands[:m]


def image_query(image, params):
    """Image position in the joint space, for image-to-label neighbours."""
    return params.U_Ix @ np.asarray(image, dtype=np.float64)
