"""Command-line entry point: train, eval, attend, hrr-demo, gradcheck, synth.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import CheckpointError, atomic_write, load_checkpoint, save_checkpoint
from .data import (LABELS2, Corpus, DataError, Example, Vocabulary, build_vocab, encode_corpus, load_corpus, load_embeddings,
                   split_indices, synth_generate, write_corpus, write_split_manifest)
from .hrr import capacity_experiment
from .model import EMBED_STD, Model, ModelConfig, ModelVariant
from .holo import FusionOperator
from .training import TrainConfig, check_model_gradients, evaluate, train, write_history

log = logging.getLogger("aflstm")

GRADCHECK_MAX_DIM = 16
GRADCHECK_MAX_LEN = 8
GRADCHECK_PASS = 1e-4


class UsageError(Exception):
    pass


# -- train ---------------------------------------------------------------------

def _train_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--variant", required=True, choices=[v.value for v in ModelVariant])
    p.add_argument("--fusion", choices=[f.value for f in FusionOperator])
    p.add_argument("--data", required=True, help="training corpus (JSON lines)")
    p.add_argument("--dev", help="dev corpus; default: split --dev-size examples off --data")
    p.add_argument("--dev-size", type=int, default=500)
    p.add_argument("--test", help="test corpus, evaluated with the best-dev model")
    p.add_argument("--binary", action="store_true", help="drop neutral examples")
    p.add_argument("--k", type=int, default=300, help="embedding dimension")
    p.add_argument("--d", type=int, default=300, help="LSTM hidden dimension")
    p.add_argument("--max-len", type=int, default=80)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=25)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--l2", type=float, default=4e-6)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--clip", type=float, default=1.0)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--projection", action="store_true")
    p.add_argument("--normalization", action="store_true")
    p.add_argument("--embeddings", help="pretrained vectors, '<token> <v1> ... <vk>' per line")
    p.add_argument("--freeze-embeddings", action="store_true")
    p.add_argument("--embed-std", type=float, default=EMBED_STD,
                   help="std of randomly initialised embedding rows")
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="run", help="output directory")
    p.add_argument("--manifest", help="re-run with the resolved arguments of a previous run")


_MANIFEST_SKIP = {"command", "func", "manifest", "out", "verbose"}


def cmd_train(args: argparse.Namespace) -> int:
    if args.manifest:
        resolved = json.loads(Path(args.manifest).read_text())["args"]
        for key, value in resolved.items():
            setattr(args, key, value)
    if args.fusion and args.variant != ModelVariant.AF_LSTM.value:
        raise UsageError(f"--fusion is only valid with --variant af-lstm, not {args.variant}")
    if args.variant == ModelVariant.AF_LSTM.value and not args.fusion:
        raise UsageError("--variant af-lstm needs --fusion conv|corr|mul")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus = load_corpus(args.data, binary=args.binary)
    split_path = None
    if args.dev:
        train_corpus, dev_corpus = corpus, load_corpus(args.dev, binary=args.binary)
    else:
        keep, dev_idx = split_indices(len(corpus), args.dev_size, args.seed)
        train_corpus, dev_corpus = corpus.subset(keep), corpus.subset(dev_idx)
        split_path = out / "split.jsonl"
        write_split_manifest(split_path, keep, dev_idx)
    vocab = build_vocab([train_corpus], args.min_count)
    labels = corpus.labels

    rng = np.random.default_rng(args.seed)
    embeddings = None
    if args.embeddings:
        embeddings = load_embeddings(args.embeddings, vocab, args.k, rng).matrix
    mcfg = ModelConfig(ModelVariant(args.variant), len(vocab), args.k, args.d, args.max_len,
                       len(labels), FusionOperator(args.fusion) if args.fusion else None,
                       args.projection, args.normalization, args.dropout,
                       args.freeze_embeddings, args.seed, args.embed_std)
    tcfg = TrainConfig(args.lr, args.l2, args.batch_size, args.epochs, args.patience,
                       args.clip, seed=args.seed)
    model = Model(mcfg, embeddings)
    train_b = encode_corpus(train_corpus, vocab, args.max_len)
    dev_b = encode_corpus(dev_corpus, vocab, args.max_len)
    result = train(model, train_b, dev_b, tcfg, labels)

    summary = {"best_epoch": result.best_epoch, "dev_accuracy": result.best_dev_accuracy}
    if args.test:
        test_corpus = load_corpus(args.test, binary=args.binary)
        test = evaluate(model, encode_corpus(test_corpus, vocab, args.max_len), labels, "test")
        result.history.append(test)
        summary["test_accuracy"] = test.accuracy

    ckpt, hist = out / "checkpoint.ckpt", out / "history.jsonl"
    save_checkpoint(ckpt, model, vocab, labels)
    write_history(result.history, hist)
    manifest = {
        "args": {k: v for k, v in vars(args).items() if k not in _MANIFEST_SKIP},
        "model_config": mcfg.to_dict(),
        "train_config": tcfg.to_dict(),
        "artifacts": {"checkpoint": str(ckpt), "history": str(hist),
                      "split": None if split_path is None else str(split_path)},
        "versions": {"aflstm": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
        "summary": summary,
    }
    atomic_write(out / "manifest.json", (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())
    print(f"dev accuracy {result.best_dev_accuracy:.4f} (epoch {result.best_epoch})")
    if "test_accuracy" in summary:
        print(f"test accuracy {summary['test_accuracy']:.4f}")
    return 0


# -- eval / attend -------------------------------------------------------------

def cmd_eval(args: argparse.Namespace) -> int:
    model, vocab, labels = load_checkpoint(args.checkpoint)
    if vocab is None:
        raise CheckpointError("checkpoint carries no vocabulary")
    corpus = load_corpus(args.data, binary=args.binary)
    labels = labels or list(corpus.labels)
    unknown = set(corpus.labels) - set(labels)
    if any(e.label in unknown for e in corpus):
        raise DataError(f"corpus has labels {sorted(unknown)} the model cannot predict; try --binary")
    relabelled = Corpus(corpus.examples, tuple(labels), corpus.task_kind, corpus.name)
    m = evaluate(model, encode_corpus(relabelled, vocab, model.config.max_len), labels, "eval")
    print(f"examples {m.total}")
    print(f"accuracy {m.accuracy:.4f}")
    for lab in labels:
        print(f"{lab}\t{m.correct[lab]}/{m.counts[lab]}")
    return 0


def attention_for(model: Model, vocab: Vocabulary, sentence: str, aspect: str,
                  labels) -> dict:
    example = Example.from_text(sentence, aspect, "positive")
    corpus = Corpus((example,), tuple(labels))
    probs, att = model.predict(encode_corpus(corpus, vocab, model.config.max_len))
    tokens = list(example.sentence_tokens[:model.config.max_len])
    return {"tokens": tokens, "aspect": list(example.aspect_tokens),
            "weights": [round(float(w), 6) for w in att[0, :len(tokens)]],
            "label": labels[int(probs[0].argmax())],
            "probs": [round(float(p), 6) for p in probs[0]]}


def cmd_attend(args: argparse.Namespace) -> int:
    model, vocab, labels = load_checkpoint(args.checkpoint)
    if not model.config.variant.has_attention:
        raise CapabilityError(f"variant {model.config.variant} has no attention layer")
    labels = labels or [str(i) for i in range(model.config.num_classes)]
    rec = attention_for(model, vocab, args.sentence, args.aspect, labels)
    if args.json:
        print(json.dumps(rec))
        return 0
    width = max(len(t) for t in rec["tokens"])
    for tok, w in zip(rec["tokens"], rec["weights"]):
        print(f"{tok:<{width}}  {w:.4f}  {'#' * int(round(w * 40))}")
    print(f"aspect: {' '.join(rec['aspect'])}")
    print(f"prediction: {rec['label']}")
    return 0


class CapabilityError(RuntimeError):
    pass


# -- hrr-demo / gradcheck / synth ----------------------------------------------

def cmd_hrr_demo(args: argparse.Namespace) -> int:
    if any(n < 1 for n in args.pairs):
        raise UsageError("--pairs values must be >= 1")
    if args.d < 2:
        raise UsageError("--d must be >= 2")
    print(f"d={args.d} trials={args.trials} seed={args.seed}")
    print("pairs  accuracy")
    for n in args.pairs:
        acc = capacity_experiment(args.d, n, args.trials, args.seed)
        print(f"{n:>5}  {acc:.2f}")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    if max(args.d, args.k) > GRADCHECK_MAX_DIM or args.max_len > GRADCHECK_MAX_LEN:
        raise UsageError(f"gradcheck is limited to d, k <= {GRADCHECK_MAX_DIM} "
                         f"and max-len <= {GRADCHECK_MAX_LEN}")
    variant = ModelVariant(args.variant)
    if (args.fusion is not None) != (variant is ModelVariant.AF_LSTM):
        raise UsageError("--fusion is required for af-lstm and invalid otherwise")
    cfg = ModelConfig(variant, args.vocab, args.k, args.d, args.max_len, 3,
                      FusionOperator(args.fusion) if args.fusion else None,
                      args.projection, args.normalization, 0.0, seed=args.seed)
    err = check_model_gradients(cfg, seed=args.seed, eps=args.eps)
    print(f"{variant}{'/' + args.fusion if args.fusion else ''} max relative error {err:.3e}")
    return 0 if err < GRADCHECK_PASS else 1


def cmd_synth(args: argparse.Namespace) -> int:
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    corpus = synth_generate(args.n, seed=args.seed)
    out = Path(args.out)
    tmp = out.with_name(f".{out.name}.tmp")
    write_corpus(corpus, tmp)
    tmp.replace(out)
    counts = corpus.label_counts()
    print(f"wrote {len(corpus)} records to {out}")
    for lab in LABELS2:
        print(f"{lab}\t{counts[lab]}")
    return 0


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aflstm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write checkpoint, history, manifest")
    _train_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy of a checkpoint on a corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--binary", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("attend", help="print per-token attention weights")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sentence", required=True)
    p.add_argument("--aspect", required=True)
    p.add_argument("--json", action="store_true", help="one JSON record instead of a table")
    p.set_defaults(func=cmd_attend)

    p = sub.add_parser("hrr-demo", help="holographic memory retrieval accuracy")
    p.add_argument("--d", type=int, default=512)
    p.add_argument("--pairs", type=int, nargs="+", default=[1, 5, 10, 20, 50])
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_hrr_demo)

    p = sub.add_parser("gradcheck", help="finite-difference check of a model variant")
    p.add_argument("--variant", required=True, choices=[v.value for v in ModelVariant])
    p.add_argument("--fusion", choices=[f.value for f in FusionOperator])
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--max-len", type=int, default=5)
    p.add_argument("--vocab", type=int, default=10)
    p.add_argument("--projection", action="store_true")
    p.add_argument("--normalization", action="store_true")
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="write the synthetic contrastive corpus")
    p.add_argument("--n", type=int, required=True, help="number of sentences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"aflstm: error: {exc}", file=sys.stderr)
        return 2
    except (DataError, CheckpointError, CapabilityError, OSError, ValueError) as exc:
        print(f"aflstm: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
