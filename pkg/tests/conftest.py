import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from chainlabel.model import Hyper, ModelParams  # noqa: E402
from chainlabel.numerics import make_rng  # noqa: E402

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def tiny_model(seed, K=5, d_e=4, d_r=6, d_i=3):
    hyper = Hyper(K=K, d_e=d_e, d_r=d_r, d_i=d_i)
    return ModelParams.init(hyper, make_rng(seed))


def random_case(seed, K=5, d_e=4, d_r=6, d_i=3):
    """Glorot model, standard-normal image and a random label sequence."""
    rng = make_rng(seed)
    params = ModelParams.init(Hyper(K=K, d_e=d_e, d_r=d_r, d_i=d_i), rng)
    image = rng.standard_normal(d_i)
    n = int(rng.integers(1, K + 1))
    seq = [int(x) for x in rng.permutation(K)[:n]] + [K]
    return params, image, seq


def orthonormal_model(K, d_i=2):
    """``U_l`` = identity (so ``d_e = K + 2``), everything else zero."""
    hyper = Hyper(K=K, d_e=K + 2, d_r=3, d_i=d_i)
    params = ModelParams.zeros(hyper)
    params.U_l[:] = np.eye(K + 2)
    return params


@pytest.fixture
def fixtures_dir():
    return FIXTURES


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("] ")[1].split(".")[0])):
            terminalreporter.write_line(line)
