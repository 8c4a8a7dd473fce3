"""Greedy and beam-search decoding of prediction paths."""
from dataclasses import dataclass, field

import numpy as np

from .model import _joint, embed_label, lstm_step, score_labels
from .numerics import check_distribution, log_softmax


@dataclass(frozen=True)
class BeamConfig:
    """``max_len=None`` means "at most K labels"."""

    beam_width: int = 3
    min_len: int = 0
    max_len: int = None
    top_paths: int = 1

    def __post_init__(self):
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if self.min_len < 0:
            raise ValueError("min_len must be >= 0")
        if self.max_len is not None and self.max_len < self.min_len:
            raise ValueError("max_len must be >= min_len")
        if not 1 <= self.top_paths <= self.beam_width:
            raise ValueError("top_paths must lie in 1..beam_width")

    def resolved_max_len(self, K):
        max_len = K if self.max_len is None else min(self.max_len, K)
        if max_len < self.min_len:
            raise ValueError(f"min_len {self.min_len} exceeds the {K} available labels")
        return max_len


@dataclass
class PredictionPath:
    labels: tuple = ()
    log_prob: float = 0.0
    terminated: bool = False
    state: np.ndarray = field(default=None, repr=False)

    def sort_key(self):
        return (-self.log_prob, self.labels)


def _next_log_probs(path, image, params, min_len):
    """Advance ``path`` by its last label; returns ``(r_t, log_probs)``."""
    h = params.hyper
    prev = path.labels[-1] if path.labels else h.start
    r, o = lstm_step(path.state, embed_label(prev, params), params)
    j, _ = _joint(o, image, params, None)
    mask = set(path.labels)
    if len(path.labels) < min_len:
        mask.add(h.end)
    logp = log_softmax(score_labels(j, params, mask))
    check_distribution(np.exp(logp))
    return r, logp


def _top_tokens(logp, n):
    live = np.flatnonzero(logp > -np.inf)
    # stable sort on -logp keeps ascending ids among ties
    order = live[np.argsort(-logp[live], kind="stable")]
    return [int(t) for t in order[:n]]


def beam_search(image, params, cfg=BeamConfig(), history=None):
    """Return up to ``cfg.top_paths`` terminated paths, best first.

    Every intermediate path is extended by its ``beam_width`` most probable
    tokens; END continuations become candidates, the best ``beam_width`` of
    the rest survive. Search stops once no intermediate path can still beat
    the ``top_paths``-th candidate. If ``history`` is a list, the surviving
    intermediate set of each step is appended to it.
    """
    h = params.hyper
    image = np.asarray(image, dtype=np.float64)
    max_len = cfg.resolved_max_len(h.K)
    N = cfg.beam_width
    beam = [PredictionPath(state=np.zeros(h.d_r))]
    candidates = []

    while beam:
        pool = []
        for path in beam:
            r, logp = _next_log_probs(path, image, params, cfg.min_len)
            if len(path.labels) >= max_len:
                tokens = [h.end]
            else:
                tokens = _top_tokens(logp, N)
            for tok in tokens:
                lp = path.log_prob + float(logp[tok])
                if tok == h.end:
                    candidates.append(PredictionPath(path.labels, lp, True))
                else:
                    pool.append(PredictionPath(path.labels + (tok,), lp, False, r))
        pool.sort(key=PredictionPath.sort_key)
        beam = pool[:N]
        candidates.sort(key=PredictionPath.sort_key)
        if history is not None:
            history.append(list(beam))
        if len(candidates) >= cfg.top_paths and beam:
            if beam[0].log_prob < candidates[cfg.top_paths - 1].log_prob:
                break
    return candidates[: cfg.top_paths]


def greedy_decode(image, params, cfg=BeamConfig(beam_width=1)):
    """Pick the most probable label at every step until END or ``max_len``."""
    h = params.hyper
    image = np.asarray(image, dtype=np.float64)
    max_len = cfg.resolved_max_len(h.K)
    path = PredictionPath(state=np.zeros(h.d_r))
    while True:
        r, logp = _next_log_probs(path, image, params, cfg.min_len)
        if len(path.labels) >= max_len:
            tok = h.end
        else:
            tok = _top_tokens(logp, 1)[0]
        lp = path.log_prob + float(logp[tok])
        if tok == h.end:
            return PredictionPath(path.labels, lp, True)
        path = PredictionPath(path.labels + (tok,), lp, False, r)


def predict_topk(image, params, k, cfg=BeamConfig()):
    """Ranked label ids: the first ``k`` labels of the best beam path.

    With ``cfg.min_len >= k`` exactly ``k`` labels come back; with
    ``min_len == 0`` the best path may stop early and return fewer.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    best = beam_search(image, params, cfg)[0]
    return list(best.labels[:k])
