"""
A pointer-generator learns to copy
==================================

Train the copy-gated encoder-decoder on the identity task (output the L1
side of each concatenated pair) and look at where its attention goes.
"""

import numpy as np

from codeswitch import toy
from codeswitch.pointer_gen import (PointerGenConfig, PointerGenerator, build_pg_vocab,
                                    export_trace, token_accuracy, train)

pairs, _ = toy.make_parallel(200, seed=7)
examples = [(p, p.l1) for p in pairs]

cfg = PointerGenConfig(hidden_size=32, embed_size=32)
model = PointerGenerator(build_pg_vocab(examples, cfg.vocab_cap), cfg)


def accuracy(epoch, result):
    hits = total = 0
    for p in pairs:
        a, b = token_accuracy(model.greedy_decode(p).sentence.surfaces, p.l1.surfaces)
        hits, total = hits + a, total + b
    print(f"epoch {epoch}: loss {result.train_loss[-1]:.4f} accuracy {hits / total:.4f}")
    return hits / total >= 0.99


train(model, examples, epochs=20, on_epoch=accuracy)

# the attention argmax should walk along the L1 half of the source
hyp = model.greedy_decode(pairs[3])
print(" ".join(hyp.sentence.surfaces))
print(np.argmax(hyp.trace.weights, axis=1))
print(export_trace(hyp.trace))

# three best outputs for a source; copying keeps them close to L1
for h in model.beam_decode(pairs[3], beams=5, n_best=3):
    print(f"{h.log_score:8.3f}", " ".join(h.sentence.surfaces))
