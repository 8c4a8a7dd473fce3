"""The recurrent head next to independent per-label classifiers.

Both models share the data split and the training budget. On this
generator a context label depends on nothing but the group, and the group
can be read off the features. So the independent scorers already rank the
right labels and the two models tie.
"""
import numpy as np

from chainlabel.baseline import baseline_fit, baseline_topk
from chainlabel.data import LabelVocab, SynthConfig, group_labels, synth_generate, train_test_split
from chainlabel.decode import BeamConfig, predict_topk
from chainlabel.metrics import evaluate
from chainlabel.model import Hyper
from chainlabel.train import TrainConfig, fit

synth = SynthConfig(per_group=100, seed=2)
examples = synth_generate(synth)
vocab = LabelVocab.from_examples(examples)
train, test = train_test_split(examples, 0.25, seed=2)
cfg = TrainConfig(learning_rate=3e-3, epochs=15, seed=2)

rnn, _, _ = fit(train, vocab, Hyper(K=len(vocab), d_i=synth.feature_dim, d_e=16, d_r=32), cfg)
base, _ = baseline_fit(train, vocab, cfg)

truth = {ex.id: vocab.ids(ex.labels) for ex in test}
context = {vocab.id(c) for _, cs in group_labels(synth) for c in cs}
runs = {
    "recurrent": {ex.id: predict_topk(ex.features, rnn, 3, BeamConfig(beam_width=3)) for ex in test},
    "independent": {ex.id: baseline_topk(ex.features, base, 3) for ex in test},
}
for name, preds in runs.items():
    rep = evaluate(preds, truth, list(range(len(vocab))), 3)
    ctx = np.mean([row.recall for row in rep.per_class if row.label in context])
    print(f"{name:>11}: O-R {rep.O_R:.3f}  O-F1 {rep.O_F1:.3f}  context recall {ctx:.3f}")
