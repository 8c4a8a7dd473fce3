"""``chainlabel`` command line: synth, train, predict, evaluate, nn, order.

Settings come from an optional flat JSON file (``--config``) whose keys are
the field names of :class:`SynthConfig`, :class:`TrainConfig`,
:class:`BeamConfig` plus ``d_e``/``d_r``; any ``--flag`` overrides the file.
The resolved settings are echoed to stderr before anything runs.
"""
import argparse
from dataclasses import fields
import json
import logging
import os
import sys

from .baseline import LOSSES, baseline_fit, baseline_topk
from .data import LabelVocab, SynthConfig, dataset_lines, load_dataset, synth_generate
from .decode import BeamConfig, beam_search
from .metrics import evaluate, nearest_labels
from .model import Hyper, load_checkpoint, save_checkpoint
from .numerics import EmptySupportError
from .train import DivergedError, TrainConfig, fit, order_labels

SEED_ENV = "CHAINLABEL_SEED"
MODEL_FIELDS = {"d_e": 64, "d_r": 512}


class _Unset:
    def __repr__(self):
        return "unset"


UNSET = _Unset()


def _config_fields():
    out = dict(MODEL_FIELDS)
    for cls in (SynthConfig, TrainConfig, BeamConfig):
        for f in fields(cls):
            out.setdefault(f.name, f.default)
    return out


def _add_config_flags(parser, names):
    defaults = _config_fields()
    group = parser.add_argument_group("settings (override --config)")
    for name in names:
        default = defaults[name]
        kind = int if name == "max_len" else type(default)
        group.add_argument("--" + name.replace("_", "-"), dest=name, type=kind, default=UNSET)


def resolve_settings(args, names):
    """Defaults < CHAINLABEL_SEED (seed only) < config file < flags."""
    defaults = _config_fields()
    settings = {n: defaults[n] for n in names}
    if "seed" in settings and os.environ.get(SEED_ENV):
        settings["seed"] = int(os.environ[SEED_ENV])
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            doc = json.load(fh)
        unknown = set(doc) - set(defaults)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        settings.update({k: v for k, v in doc.items() if k in settings})
    for n in names:
        v = getattr(args, n, UNSET)
        if v is not UNSET:
            settings[n] = v
    return settings


def _echo(command, settings, **paths):
    doc = {"command": command, "settings": settings}
    doc.update({k: v for k, v in paths.items() if v is not None})
    print("config: " + json.dumps(doc, sort_keys=True), file=sys.stderr)


def _pick(cls, settings):
    return cls(**{f.name: settings[f.name] for f in fields(cls) if f.name in settings})


def _names(*classes):
    out = []
    for cls in classes:
        out += [f.name for f in fields(cls) if f.name not in out]
    return out


SYNTH_NAMES = _names(SynthConfig)
TRAIN_NAMES = list(MODEL_FIELDS) + _names(TrainConfig)
BEAM_NAMES = ["beam_width", "max_len"]


def cmd_synth(args):
    settings = resolve_settings(args, SYNTH_NAMES)
    _echo("synth", settings, out=args.out)
    examples = synth_generate(_pick(SynthConfig, settings))
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.writelines(dataset_lines(examples))


def cmd_train(args):
    settings = resolve_settings(args, TRAIN_NAMES)
    _echo("train", settings, data=args.data, out=args.out, baseline=args.baseline or None)
    examples, vocab = load_dataset(args.data)
    if not examples:
        raise ValueError("empty dataset")
    cfg = _pick(TrainConfig, settings)
    hyper = Hyper(K=len(vocab), d_i=examples[0].features.size, d_e=settings["d_e"], d_r=settings["d_r"])
    order = order_labels(examples, vocab)
    if args.baseline:
        bparams, history = baseline_fit(examples, vocab, cfg, loss=args.baseline_loss)
        save_checkpoint(args.out, hyper, vocab.labels, order.ids, baseline=bparams)
    else:
        params, order, history = fit(examples, vocab, hyper, cfg, order)
        save_checkpoint(args.out, hyper, vocab.labels, order.ids, params=params)
    history_path = args.history or args.out + ".history.jsonl"
    with open(history_path, "w", encoding="utf-8") as fh:
        for row in history:
            fh.write(json.dumps(row) + "\n")


def cmd_predict(args):
    settings = resolve_settings(args, BEAM_NAMES)
    settings["min_len"] = args.min_len
    _echo("predict", settings, model=args.model, data=args.data, out=args.out, k=args.k)
    ckpt = load_checkpoint(args.model)
    examples, _ = load_dataset(args.data)
    vocab = ckpt.vocab
    use_baseline = args.baseline or ckpt.params is None
    if use_baseline and ckpt.baseline is None:
        raise ValueError("checkpoint holds no baseline parameters")
    cfg = BeamConfig(beam_width=settings["beam_width"], min_len=args.min_len, max_len=settings["max_len"])
    with open(args.out, "w", encoding="utf-8") as fh:
        for ex in examples:
            if ex.features.size != ckpt.hyper.d_i:
                raise ValueError(f"{ex.id}: feature dim {ex.features.size}, model expects {ckpt.hyper.d_i}")
            if use_baseline:
                labels, log_prob = baseline_topk(ex.features, ckpt.baseline, args.k), None
            else:
                best = beam_search(ex.features, ckpt.params, cfg)[0]
                labels, log_prob = list(best.labels[: args.k]), best.log_prob
            row = {"id": ex.id, "labels": [vocab[i] for i in labels], "log_prob": log_prob}
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def load_predictions(path):
    preds = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                preds[obj["id"]] = list(obj["labels"])
            except (json.JSONDecodeError, KeyError, TypeError):
                raise ValueError(f"{path}:{lineno}: malformed prediction line") from None
    return preds


def cmd_evaluate(args):
    _echo("evaluate", {"k": args.k, "map_n": args.map_n}, pred=args.pred, truth=args.truth, out=args.out)
    preds = load_predictions(args.pred)
    examples, vocab = load_dataset(args.truth)
    truth = {ex.id: set(ex.labels) for ex in examples}
    labels = sorted(set(vocab.labels) | {lab for p in preds.values() for lab in p})
    report = evaluate(preds, truth, labels, args.k, args.map_n)
    text = json.dumps(report.to_json(), ensure_ascii=False, indent=2) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_nn(args):
    _echo("nn", {"label": args.label, "m": args.m}, model=args.model)
    ckpt = load_checkpoint(args.model)
    if ckpt.params is None:
        raise ValueError("checkpoint holds no recurrent-model parameters")
    vocab = LabelVocab(ckpt.vocab)
    k = vocab.id(args.label)
    for c, sim in nearest_labels(ckpt.params.U_l[k], ckpt.params, args.m, exclude={k}):
        print(json.dumps({"label": vocab.label(c), "similarity": sim}, ensure_ascii=False))


def cmd_order(args):
    _echo("order", {}, data=args.data)
    examples, vocab = load_dataset(args.data)
    order = order_labels(examples, vocab)
    for i in order:
        print(vocab.label(i))


def build_parser():
    parser = argparse.ArgumentParser(prog="chainlabel", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic co-occurrence dataset")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    _add_config_flags(p, SYNTH_NAMES)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the recurrent head (or the baseline)")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--history", help="training history JSONL (default: OUT.history.jsonl)")
    p.add_argument("--baseline", action="store_true", help="train the independent-output baseline instead")
    p.add_argument("--baseline-loss", choices=LOSSES, default="bce")
    _add_config_flags(p, TRAIN_NAMES)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="ranked labels per image")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--min-len", type=int, default=0)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--baseline", action="store_true", help="use the checkpoint's baseline scorer")
    _add_config_flags(p, BEAM_NAMES)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="metrics report for a prediction file")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--map-n", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("nn", help="nearest labels in the embedding space")
    p.add_argument("--model", required=True)
    p.add_argument("--label", required=True)
    p.add_argument("--m", type=int, default=5)
    p.set_defaults(func=cmd_nn)

    p = sub.add_parser("order", help="print the frequency-based label order")
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_order)
    return parser


def run(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "evaluate" and args.map_n is None:
        args.map_n = args.k
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (ValueError, KeyError, IndexError, OSError, DivergedError, EmptySupportError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"chainlabel: error: {msg}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
