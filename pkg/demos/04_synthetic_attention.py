"""Aspect-conditioned attention on the two-clause synthetic corpus.

Every sentence reads "the A1 is J1 but the A2 is J2" with opposite
polarities, and is queried once per aspect.  A model that ignores the aspect
cannot do better than a coin flip.  Takes about a minute on one core.
"""
import numpy as np

from aflstm.cli import attention_for
from aflstm.data import LABELS2
from aflstm.synthetic import run_synthetic

runs = {}
for name, variant, fusion in (("AF-LSTM conv", "af-lstm", "conv"),
                              ("AF-LSTM mul", "af-lstm", "mul"),
                              ("LSTM", "lstm", None)):
    runs[name] = run_synthetic(variant, fusion)
    r = runs[name]
    print(f"{name:13s} best dev epoch {r.result.best_epoch:2d}  test accuracy {r.test_accuracy:.4f}")

# WHERE DOES THE MODEL LOOK?

conv = runs["AF-LSTM conv"]
sentence = "the appetizers are okay but the service is slow"
for aspect in ("service", "appetizers"):
    rec = attention_for(conv.model, conv.vocab, sentence, aspect, LABELS2)
    print(f"\naspect={aspect!r} -> {rec['label']}")
    for tok, w in zip(rec["tokens"], rec["weights"]):
        print(f"  {tok:11s} {w:.3f} {'#' * int(round(40 * w))}")

sw = conv.switching
print(f"\n{sw.both}/{sw.evaluated} correctly classified test queries put >= 60% of the attention "
      f"on their own clause and move the peak to the other clause when the aspect is swapped")
print(f"median clause mass {np.median(sw.clause_mass):.3f}")
