"""
Does pre-training on generated text help?
=========================================

Train small LSTM language models under three data strategies and compare
test perplexity, overall and per language-transition bucket. Here the
"generated" corpus comes from the same synthetic process as the real one.
"""

from codeswitch import toy
from codeswitch.lm import LMConfig, run_strategy_matrix
from codeswitch.neural import TrainerConfig

real = {"train": toy.make_cs_corpus(300, 11),
        "valid": toy.make_cs_corpus(100, 12),
        "test": toy.make_cs_corpus(100, 13)}
generated = {"PointerGen": toy.make_cs_corpus(300, 14)}

cfg = LMConfig(hidden_size=32, unroll_steps=10, batch_size=2, dropout=0.2, max_epochs=30,
               early_stop_patience=5, trainer=TrainerConfig(20.0, 0.75, 0.25, 0))

# 1: real only, 2c: generated only, 4c: generated then fine-tuned on real
matrix = run_strategy_matrix(real, generated, cfg, ["1", "2c", "4c"])
print(matrix.to_csv())

for cell in ("1", "2c", "4c"):
    rep = matrix.get(cell, "test")
    buckets = ", ".join(f"{k} {p:.1f}" for k, (n, p) in rep.buckets.items() if p is not None)
    print(f"{cell:>3}: {rep.overall:7.2f}  ({buckets})")
