"""
Rescoring a noisy character decoder with an LM
==============================================

Fake a recogniser whose top character is sometimes wrong, then decode
with and without the language model and a word-count bonus.
"""

import numpy as np

from codeswitch import toy
from codeswitch.fusion import EmissionSequence, FusionConfig, fused_beam_decode
from codeswitch.lm import LMConfig, train_lm
from codeswitch.metrics import cer_text

corpus = toy.make_cs_corpus(400, seed=1)
lm, _ = train_lm(corpus, None, "RealOnly",
                 LMConfig(hidden_size=32, unroll_steps=10, batch_size=4, max_epochs=8))
inventory = sorted(set("".join(" ".join(s.surfaces) for s in corpus)))
rng = np.random.default_rng(0)


def blur(text, confuse=0.25):
    """Posteriors where a random rival beats the right character at some steps."""
    probs = np.full((len(text), len(inventory)), 0.1 / len(inventory))
    for t, ch in enumerate(text):
        right, rival = inventory.index(ch), int(rng.integers(len(inventory)))
        swap = rng.random() < confuse and rival != right
        probs[t, right] += 0.35 if swap else 0.6
        probs[t, rival] += 0.55 if swap else 0.3
    return EmissionSequence.from_probs(probs / probs.sum(axis=1, keepdims=True), inventory)


targets = [" ".join(s.surfaces) for s in toy.make_cs_corpus(20, seed=99)]
emissions = [blur(t) for t in targets]

for beta, gamma in ((0.0, 0.0), (0.3, 0.0), (0.3, 0.5)):
    cfg = FusionConfig(1.0, beta, gamma, beams=16)
    hyps = [fused_beam_decode(e, lm, cfg).best.text for e in emissions]
    mean = np.mean([cer_text(t, h) for t, h in zip(targets, hyps)])
    print(f"beta={beta} gamma={gamma}: mean CER {mean:.3f}   e.g. {hyps[0]!r}")
print("target:", repr(targets[0]))
