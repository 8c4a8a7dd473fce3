"""Dense activations, stable softmax and seeded randomness.

Vectors and matrices are plain ``float64`` numpy arrays (matrices row-major);
the activations keep any other floating dtype they are given, which lets the
gradient checker evaluate losses in extended precision.
Random draws always go through an explicit :class:`numpy.random.Generator`
backed by PCG64; nothing here touches numpy's global RNG state.
"""
from contextlib import contextmanager

import numpy as np
from scipy.special import expit

__all__ = [
    "EmptySupportError",
    "NonFiniteError",
    "make_rng",
    "softmax",
    "log_softmax",
    "relu",
    "sigmoid",
    "glorot_init",
    "probability_checks",
    "check_distribution",
]


class EmptySupportError(ValueError):
    """Raised when every entry of a score vector is masked out."""

    def __init__(self, msg="empty support"):
        super().__init__(msg)


class NonFiniteError(ValueError):
    """NaN or +inf among the scores (``-inf`` alone means "masked")."""


def make_rng(seed):
    """Return a PCG64 generator for ``seed`` (a non-negative integer)."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def _as_float(x):
    x = np.asarray(x)
    return x if np.issubdtype(x.dtype, np.floating) else x.astype(np.float64)


def _support(x):
    x = _as_float(x)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("expected a non-empty 1-D score vector")
    if np.isnan(x).any() or np.isposinf(x).any():
        raise NonFiniteError("non-finite score")
    live = x > -np.inf
    if not live.any():
        raise EmptySupportError()
    return x, live


def softmax(x):
    """Max-shifted softmax; ``-inf`` entries map to exactly 0."""
    x, live = _support(x)
    e = np.zeros_like(x)
    e[live] = np.exp(x[live] - x[live].max())
    return e / e.sum()


def log_softmax(x):
    """Log of :func:`softmax`; masked entries stay ``-inf``."""
    x, live = _support(x)
    shifted = x[live] - x[live].max()
    out = np.full_like(x, -np.inf)
    out[live] = shifted - np.log(np.exp(shifted).sum())
    return out


def relu(x):
    return np.maximum(_as_float(x), 0.0)


def sigmoid(x):
    return expit(_as_float(x))


def glorot_init(rows, cols, rng):
    """Uniform Glorot matrix on ``[-a, a]`` with ``a = sqrt(6 / (rows + cols))``."""
    if rows < 1 or cols < 1:
        raise ValueError(f"bad shape ({rows}, {cols})")
    a = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-a, a, size=(rows, cols))


# Opt-in runtime assertion that every probability vector produced while
# scoring/decoding is normalised. Off by default; tests switch it on.
_checks = {"enabled": False, "tol": 1e-9, "count": 0}


@contextmanager
def probability_checks(tol=1e-9):
    """Enable normalisation checks inside the block; yields a counter dict."""
    saved = dict(_checks)
    _checks.update(enabled=True, tol=tol, count=0)
    try:
        yield _checks
    finally:
        count = _checks["count"]
        _checks.update(saved)
        _checks["last_count"] = count


def check_distribution(p):
    """Assert ``p`` sums to one (only while :func:`probability_checks` is on)."""
    if not _checks["enabled"]:
        return
    total = float(np.sum(p))
    if not abs(total - 1.0) <= _checks["tol"] or np.any(p < 0):
        raise AssertionError(f"probability vector sums to {total!r}")
    _checks["count"] += 1
