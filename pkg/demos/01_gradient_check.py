"""Checking the hand-written backpropagation against finite differences.

A tiny model is built from a seed, a label chain is run through it with
teacher forcing, and the analytic gradient is compared entry by entry with
central differences taken in extended precision.
"""
import numpy as np

from chainlabel.model import Hyper, ModelParams, finite_diff_check
from chainlabel.numerics import make_rng

rng = make_rng(0)
hyper = Hyper(K=5, d_i=3, d_e=4, d_r=6)
params = ModelParams.init(hyper, rng)
image = rng.standard_normal(hyper.d_i)

# two real labels, then END (id K)
chain = [3, 1, hyper.end]
err = finite_diff_check(image, chain, params, eps=1e-5)
print(f"max relative error over all {sum(a.size for _, a in params.items())} parameters: {err:.2e}")

# the same check run purely in float64 is noticeably noisier
err64 = finite_diff_check(image, chain, params, eps=1e-5, precision=np.float64)
print(f"with float64 difference quotients instead: {err64:.2e}")
