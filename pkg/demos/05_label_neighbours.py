"""Label embeddings after training: which labels sit close together?

Context labels of one group co-occur with each other, so after training
their embedding rows tend to end up near their group mates.
"""
from chainlabel.data import LabelVocab, SynthConfig, synth_generate
from chainlabel.metrics import image_query, nearest_labels
from chainlabel.model import Hyper
from chainlabel.train import TrainConfig, fit

synth = SynthConfig(per_group=50, seed=3)
examples = synth_generate(synth)
vocab = LabelVocab.from_examples(examples)
params, _, _ = fit(examples, vocab, Hyper(K=len(vocab), d_i=synth.feature_dim, d_e=16, d_r=32),
                   TrainConfig(learning_rate=3e-3, epochs=20, seed=3))

for name in ("g0c0", "g2c1"):
    k = vocab.id(name)
    near = nearest_labels(params.U_l[k], params, 3, exclude={k})
    print(name, "->", ", ".join(f"{vocab.label(c)} ({s:+.2f})" for c, s in near))

# images can be queried in the same space
ex = examples[0]
near = nearest_labels(image_query(ex.features, params), params, 3)
print(f"image {ex.id} {sorted(ex.labels)} ->", ", ".join(vocab.label(c) for c, _ in near))
