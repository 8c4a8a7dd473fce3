"""The recurrent label-chain head.

Label ids ``0..K-1`` are real labels, ``K`` is END and ``K+1`` is START. All
of them own a row in the embedding table ``U_l``; the same rows double as the
scoring weights, so END is scored like any label while START is never scored.

One timestep, with ``w`` the embedding of the previous label::

    c~ = relu(U_r r' + U_w w + b_c)
    i  = sigmoid(U_ir r' + U_iw w + b_i)
    f  = sigmoid(U_fr r' + U_fw w + b_f)
    g  = sigmoid(U_or r' + U_ow w + b_o)
    r  = f * r' + i * c~
    o  = g * r
    j  = relu(U_ox (m_o * o) + U_Ix (m_I * I) + b_x)
    s  = U_l[:K+1] j

``m_o``/``m_I`` are inverted-dropout masks (training only).
"""
from dataclasses import dataclass, field
import json

import numpy as np

from .numerics import (
    EmptySupportError,
    check_distribution,
    glorot_init,
    make_rng,
    relu,
    sigmoid,
    softmax,
)

LSTM_WEIGHTS = ("U_r", "U_w", "U_ir", "U_iw", "U_fr", "U_fw", "U_or", "U_ow")
WEIGHT_NAMES = LSTM_WEIGHTS + ("U_ox", "U_Ix")
BIAS_NAMES = ("b_c", "b_i", "b_f", "b_o", "b_x")
PARAM_NAMES = ("U_l",) + WEIGHT_NAMES + BIAS_NAMES
FORGET_BIAS = 1.0
FORMAT_VERSION = 1

# (candidate, input, forget, output) gate -> (recurrent, input) weight names
_GATES = (
    ("b_c", "U_r", "U_w"),
    ("b_i", "U_ir", "U_iw"),
    ("b_f", "U_fr", "U_fw"),
    ("b_o", "U_or", "U_ow"),
)


@dataclass(frozen=True)
class Hyper:
    """Model sizes. ``K`` counts real labels only."""

    K: int
    d_i: int
    d_e: int = 64
    d_r: int = 512

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("need at least 2 labels")
        if min(self.d_e, self.d_r, self.d_i) < 1:
            raise ValueError("dimensions must be positive")

    @property
    def end(self):
        return self.K

    @property
    def start(self):
        return self.K + 1

    def to_dict(self):
        return {"K": self.K, "d_e": self.d_e, "d_r": self.d_r, "d_i": self.d_i}


def param_shapes(hyper):
    K, d_e, d_r, d_i = hyper.K, hyper.d_e, hyper.d_r, hyper.d_i
    shapes = {"U_l": (K + 2, d_e)}
    for _, rec, inp in _GATES:
        shapes[rec] = (d_r, d_r)
        shapes[inp] = (d_r, d_e)
    shapes["U_ox"] = (d_e, d_r)
    shapes["U_Ix"] = (d_e, d_i)
    for b in BIAS_NAMES[:-1]:
        shapes[b] = (d_r,)
    shapes["b_x"] = (d_e,)
    return {name: shapes[name] for name in PARAM_NAMES}


class ModelParams:
    """Named arrays of one model; also used to hold gradients.

    Arrays are reachable as attributes (``params.U_l``) or by name
    (``params["U_l"]``).
    """

    def __init__(self, hyper, arrays, dtype=np.float64):
        self.hyper = hyper
        shapes = param_shapes(hyper)
        if set(arrays) != set(shapes):
            missing = set(shapes) ^ set(arrays)
            raise ValueError(f"parameter set mismatch: {sorted(missing)}")
        self.arrays = {}
        for name in PARAM_NAMES:
            a = np.asarray(arrays[name], dtype=dtype)
            if a.shape != shapes[name]:
                raise ValueError(f"{name}: shape {a.shape}, expected {shapes[name]}")
            self.arrays[name] = a

    def __getattr__(self, name):
        arrays = self.__dict__.get("arrays")
        if arrays is not None and name in arrays:
            return arrays[name]
        raise AttributeError(name)

    def __getitem__(self, name):
        return self.arrays[name]

    def items(self):
        return self.arrays.items()

    @classmethod
    def zeros(cls, hyper):
        return cls(hyper, {n: np.zeros(s) for n, s in param_shapes(hyper).items()})

    @classmethod
    def init(cls, hyper, rng):
        """Glorot weights, zero biases except the forget gate."""
        arrays = {}
        for name, shape in param_shapes(hyper).items():
            if len(shape) == 2:
                arrays[name] = glorot_init(*shape, rng)
            else:
                arrays[name] = np.zeros(shape)
        arrays["b_f"][:] = FORGET_BIAS
        return cls(hyper, arrays)

    @property
    def dtype(self):
        return self.U_l.dtype

    def copy(self, dtype=None):
        dtype = dtype or self.dtype
        return ModelParams(self.hyper, {n: a.astype(dtype) for n, a in self.arrays.items()}, dtype)

    def is_finite(self):
        return all(np.isfinite(a).all() for a in self.arrays.values())


# -- single-step pieces -----------------------------------------------------


def embed_label(label_id, params):
    n = params.hyper.K + 2
    if not 0 <= label_id < n:
        raise IndexError(f"label id {label_id} outside 0..{n - 1}")
    return params.U_l[label_id]


def _check_dim(v, n, what):
    if v.shape != (n,):
        raise ValueError(f"{what}: expected shape ({n},), got {v.shape}")


def _lstm_cell(r_prev, w_in, params):
    h = params.hyper
    _check_dim(r_prev, h.d_r, "recurrent state")
    _check_dim(w_in, h.d_e, "label embedding")
    z = [params[rec] @ r_prev + params[inp] @ w_in + params[b] for b, rec, inp in _GATES]
    z_c = z[0]
    c_tilde = relu(z_c)
    i, f, g = (sigmoid(zz) for zz in z[1:])
    r = f * r_prev + i * c_tilde
    return z_c, c_tilde, i, f, g, r, g * r


def lstm_step(r_prev, w_in, params):
    """Advance the recurrent state by one label; returns ``(r_t, o_t)``."""
    *_, r, o = _lstm_cell(r_prev, w_in, params)
    return r, o


def joint_project(o_t, image, params, dropout=None):
    """Map the recurrent output and image into the label-embedding space.

    ``dropout`` is an optional ``(m_o, m_I)`` pair of already-scaled masks.
    """
    j, _ = _joint(o_t, image, params, dropout)
    return j


def _joint(o_t, image, params, dropout):
    h = params.hyper
    _check_dim(o_t, h.d_r, "recurrent output")
    _check_dim(image, h.d_i, "image features")
    if dropout is not None:
        m_o, m_I = dropout
        _check_dim(m_o, h.d_r, "output dropout mask")
        _check_dim(m_I, h.d_i, "image dropout mask")
        o_t = m_o * o_t
        image = m_I * image
    z_x = params.U_ox @ o_t + params.U_Ix @ image + params.b_x
    return relu(z_x), z_x


def score_labels(j_t, params, mask=()):
    """Scores for labels ``0..K`` (END included); masked ids get ``-inf``."""
    K = params.hyper.K
    _check_dim(j_t, params.hyper.d_e, "joint embedding")
    s = params.U_l[: K + 1] @ j_t
    mask = list(mask)
    if mask:
        if min(mask) < 0 or max(mask) > K:
            raise IndexError("mask ids must lie in 0..K")
        s[mask] = -np.inf
    if np.isneginf(s).all():
        raise EmptySupportError()
    return s


def dropout_masks(hyper, rate, rng):
    keep = 1.0 - rate
    m_o = (rng.random(hyper.d_r) < keep) / keep
    m_I = (rng.random(hyper.d_i) < keep) / keep
    return m_o, m_I


# -- sequences --------------------------------------------------------------


@dataclass
class Step:
    input_id: int
    w: np.ndarray
    r_prev: np.ndarray
    z_c: np.ndarray
    c_tilde: np.ndarray
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    r: np.ndarray
    o: np.ndarray
    z_x: np.ndarray
    j: np.ndarray
    scores: np.ndarray
    probs: np.ndarray
    mask: frozenset
    dropout: tuple = None


@dataclass
class ForwardTrace:
    label_seq: tuple
    steps: list = field(default_factory=list)

    def __len__(self):
        return len(self.steps)


def validate_sequence(label_seq, K):
    seq = [int(t) for t in label_seq]
    if not seq or seq[-1] != K:
        raise ValueError("label sequence must end with END")
    body = seq[:-1]
    if any(not 0 <= t < K for t in body):
        raise ValueError("label sequence holds ids outside 0..K-1 before END")
    if len(set(body)) != len(body):
        raise ValueError("repeated label in sequence")
    return tuple(seq)


def forward_sequence(image, label_seq, params, mode="infer", rng=None, dropout_rate=0.5):
    """Teacher-forced pass over ``label_seq`` (which ends with END).

    In ``"train"`` mode fresh dropout masks are drawn from ``rng`` at each
    step; ``"infer"`` uses none.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"unknown mode {mode!r}")
    h = params.hyper
    seq = validate_sequence(label_seq, h.K)
    image = np.asarray(image, dtype=params.dtype)
    use_dropout = mode == "train" and dropout_rate > 0
    if use_dropout and rng is None:
        raise ValueError("train mode with dropout needs an rng")

    trace = ForwardTrace(seq)
    r_prev = np.zeros(h.d_r, dtype=params.dtype)
    prev = h.start
    consumed = []
    for target in seq:
        w = embed_label(prev, params)
        z_c, c_tilde, i, f, g, r, o = _lstm_cell(r_prev, w, params)
        masks = dropout_masks(h, dropout_rate, rng) if use_dropout else None
        j, z_x = _joint(o, image, params, masks)
        mask = frozenset(consumed)
        s = score_labels(j, params, mask)
        p = softmax(s)
        check_distribution(p)
        trace.steps.append(
            Step(prev, w, r_prev, z_c, c_tilde, i, f, g, r, o, z_x, j, s, p, mask, masks)
        )
        r_prev = r
        prev = target
        consumed.append(target)
    return trace


def trace_loss(trace):
    """Mean negative log-likelihood of the trace's own targets."""
    logs = [np.log(st.probs[t]) for st, t in zip(trace.steps, trace.label_seq)]
    return -sum(logs) / len(logs)


def backward_sequence(trace, image, params):
    """BPTT gradients of ``trace_loss`` w.r.t. every parameter."""
    h = params.hyper
    if len(trace.steps) != len(trace.label_seq):
        raise ValueError("trace and label sequence disagree in length")
    image = np.asarray(image, dtype=np.float64)
    _check_dim(image, h.d_i, "image features")
    if trace.steps and trace.steps[0].r_prev.shape != (h.d_r,):
        raise ValueError("trace was produced with different model sizes")

    grads = ModelParams.zeros(h)
    G = grads.arrays
    T = len(trace.steps)
    K = h.K
    dr_next = np.zeros(h.d_r)
    for st, target in zip(reversed(trace.steps), reversed(trace.label_seq)):
        ds = st.probs.copy()
        ds[target] -= 1.0
        ds /= T
        # masked entries have p == 0 and are never the target
        G["U_l"][: K + 1] += np.outer(ds, st.j)
        dj = params.U_l[: K + 1].T @ ds
        dz_x = dj * (st.z_x > 0)
        if st.dropout is None:
            o_in, img_in = st.o, image
        else:
            m_o, m_I = st.dropout
            o_in, img_in = m_o * st.o, m_I * image
        G["U_ox"] += np.outer(dz_x, o_in)
        G["U_Ix"] += np.outer(dz_x, img_in)
        G["b_x"] += dz_x
        do = params.U_ox.T @ dz_x
        if st.dropout is not None:
            do *= st.dropout[0]

        dr = do * st.g + dr_next
        dz = (
            dr * st.i * (st.z_c > 0),
            dr * st.c_tilde * st.i * (1.0 - st.i),
            dr * st.r_prev * st.f * (1.0 - st.f),
            do * st.r * st.g * (1.0 - st.g),
        )
        dr_prev = dr * st.f
        dw = np.zeros(h.d_e)
        for dzk, (b, rec, inp) in zip(dz, _GATES):
            G[b] += dzk
            G[rec] += np.outer(dzk, st.r_prev)
            G[inp] += np.outer(dzk, st.w)
            dr_prev += params[rec].T @ dzk
            dw += params[inp].T @ dzk
        G["U_l"][st.input_id] += dw
        dr_next = dr_prev
    return grads


# -- gradient checking ------------------------------------------------------


def relative_error(a, n):
    a = np.asarray(a, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    return np.abs(a - n) / np.maximum(1e-8, np.abs(a) + np.abs(n))


def numerical_gradient(loss_fn, arrays, eps=1e-5):
    """Central differences of ``loss_fn()`` w.r.t. each array in ``arrays``.

    ``arrays`` maps names to arrays that ``loss_fn`` reads; entries are
    perturbed in place and restored.
    """
    out = {}
    for name, a in arrays.items():
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            up = loss_fn()
            flat[k] = orig - eps
            down = loss_fn()
            flat[k] = orig
            gflat[k] = (up - down) / (2.0 * eps)
        out[name] = g
    return out


def finite_diff_check(image, label_seq, params, eps=1e-5, precision=np.longdouble):
    """Max relative error between BPTT and central-difference gradients.

    The analytic side runs in float64. The difference quotients are taken on
    a copy of the model held in ``precision`` (extended by default): in
    float64 the cancellation in ``L(t+eps) - L(t-eps)`` leaves ~1e-11 of
    noise, which swamps gradient entries below ~1e-7.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    analytic = backward_sequence(forward_sequence(image, label_seq, params), image, params)
    work = params.copy(precision)
    image_hp = np.asarray(image, dtype=precision)

    def loss():
        return trace_loss(forward_sequence(image_hp, label_seq, work))

    numeric = numerical_gradient(loss, work.arrays, eps)
    return max(float(relative_error(analytic[n], numeric[n]).max()) for n in PARAM_NAMES)


# -- checkpoints ------------------------------------------------------------


def encode_array(a):
    a = np.asarray(a, dtype=np.float64)
    rows, cols = (a.shape[0], 1) if a.ndim == 1 else a.shape
    return {"rows": int(rows), "cols": int(cols), "data": [float(x) for x in a.reshape(-1)]}


def decode_array(obj, shape, name):
    rows, cols = (shape[0], 1) if len(shape) == 1 else shape
    if (obj.get("rows"), obj.get("cols")) != (rows, cols):
        raise ValueError(f"{name}: stored shape {obj.get('rows')}x{obj.get('cols')}, expected {rows}x{cols}")
    data = np.asarray(obj["data"], dtype=np.float64)
    if data.size != rows * cols:
        raise ValueError(f"{name}: expected {rows * cols} values, got {data.size}")
    if not np.isfinite(data).all():
        raise ValueError(f"{name}: non-finite value")
    return data.reshape(shape)


def save_checkpoint(path, hyper, vocab, label_order, params=None, baseline=None):
    """Write the single-document JSON checkpoint.

    ``vocab`` is the label strings in id order; ``baseline`` is an optional
    :class:`chainlabel.baseline.BaselineParams`.
    """
    doc = {
        "format_version": FORMAT_VERSION,
        "hyper": hyper.to_dict(),
        "vocab": list(vocab),
        "label_order": [int(i) for i in label_order],
    }
    if params is not None:
        doc["params"] = {n: encode_array(a) for n, a in params.items()}
    if baseline is not None:
        doc["baseline_params"] = baseline.to_json()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


@dataclass
class Checkpoint:
    hyper: Hyper
    vocab: list
    label_order: list
    params: ModelParams = None
    baseline: object = None


def load_checkpoint(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {doc.get('format_version')!r}")
    hd = doc["hyper"]
    hyper = Hyper(K=hd["K"], d_i=hd["d_i"], d_e=hd["d_e"], d_r=hd["d_r"])
    vocab = list(doc["vocab"])
    if len(vocab) != hyper.K:
        raise ValueError("vocabulary size disagrees with hyper.K")
    order = [int(i) for i in doc["label_order"]]
    if sorted(order) != list(range(hyper.K)):
        raise ValueError("label_order is not a permutation of the label ids")
    ckpt = Checkpoint(hyper, vocab, order)
    if "params" in doc:
        shapes = param_shapes(hyper)
        stored = doc["params"]
        if set(stored) != set(shapes):
            raise ValueError("checkpoint parameter names do not match the model")
        ckpt.params = ModelParams(hyper, {n: decode_array(stored[n], shapes[n], n) for n in PARAM_NAMES})
    if "baseline_params" in doc:
        from .baseline import BaselineParams

        ckpt.baseline = BaselineParams.from_json(doc["baseline_params"], hyper)
    return ckpt


def random_params(hyper, seed):
    """Convenience for tests and demos: Glorot params from ``seed``."""
    return ModelParams.init(hyper, make_rng(seed))
