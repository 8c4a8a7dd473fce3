"""Decoding label chains with beam search.

A random model stands in for a trained one. We look at the best paths for
several beam widths, force a minimum length, and compare with greedy
decoding.
"""
from chainlabel.decode import BeamConfig, beam_search, greedy_decode, predict_topk
from chainlabel.model import Hyper, ModelParams
from chainlabel.numerics import make_rng

rng = make_rng(5)
params = ModelParams.init(Hyper(K=6, d_i=3, d_e=4, d_r=8), rng)
params.U_l *= 3.0  # sharpen the scores so paths differ visibly
image = rng.standard_normal(3)

for width in (1, 2, 4):
    paths = beam_search(image, params, BeamConfig(beam_width=width, top_paths=min(width, 3)))
    shown = ", ".join(f"{list(p.labels)} ({p.log_prob:.3f})" for p in paths)
    print(f"N={width}: {shown}")

g = greedy_decode(image, params)
print(f"greedy: {list(g.labels)} ({g.log_prob:.3f})")

# asking for exactly three labels: END is masked until three are emitted
print("top-3 with min_len=3:", predict_topk(image, params, 3, BeamConfig(beam_width=3, min_len=3)))
