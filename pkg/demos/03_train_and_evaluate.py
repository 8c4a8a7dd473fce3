"""Training the recurrent head on planted co-occurrence data.

Four groups each own a dominant label with a visible feature block and two
context labels that only follow the group. We train, decode the held-out
quarter and print the metric report.
"""
from chainlabel.data import LabelVocab, SynthConfig, synth_generate, train_test_split
from chainlabel.decode import BeamConfig, predict_topk
from chainlabel.metrics import evaluate
from chainlabel.model import Hyper
from chainlabel.train import TrainConfig, fit

synth = SynthConfig(per_group=60, seed=1)
examples = synth_generate(synth)
vocab = LabelVocab.from_examples(examples)
train, test = train_test_split(examples, 0.25, seed=1)
print(f"{len(train)} training / {len(test)} test examples, {len(vocab)} labels")

hyper = Hyper(K=len(vocab), d_i=synth.feature_dim, d_e=16, d_r=32)
params, order, history = fit(train, vocab, hyper, TrainConfig(learning_rate=3e-3, epochs=15, seed=1))
print("label order:", [vocab.label(i) for i in order])
print(f"mean loss: epoch 1 {history[0]['mean_loss']:.3f} -> epoch {len(history)} {history[-1]['mean_loss']:.3f}")

k = 3
preds = {ex.id: predict_topk(ex.features, params, k, BeamConfig(beam_width=3)) for ex in test}
ranked = {ex.id: predict_topk(ex.features, params, k, BeamConfig(beam_width=3, min_len=k)) for ex in test}
truth = {ex.id: vocab.ids(ex.labels) for ex in test}
rep = evaluate(preds, truth, list(range(len(vocab))), k, ranked=ranked)
print(f"k={k}: O-P {rep.O_P:.3f}  O-R {rep.O_R:.3f}  O-F1 {rep.O_F1:.3f}  C-F1 {rep.C_F1:.3f}  MAP@{k} {rep.MAP:.3f}")

ex = test[0]
print(f"example {ex.id}: truth {sorted(ex.labels)}, predicted {[vocab.label(i) for i in preds[ex.id]]}")
