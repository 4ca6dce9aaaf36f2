"""
From parallel text to code-switched sentences
=============================================

Align a small synthetic L1/L2 corpus, list the spans that may be swapped
without crossing an alignment link, and measure how mixed the result is.
"""

import numpy as np

from codeswitch import toy
from codeswitch.align import train_ibm1, viterbi_align
from codeswitch.ecgen import EcGenConfig, generate_ec_corpus, permissible_spans
from codeswitch.metrics import cmi_corpus, ngram_novelty, spf_corpus

pairs, gold = toy.make_parallel(200, seed=0)
print(pairs[0].l1.surfaces, pairs[0].l2.surfaces)

# ten EM iterations; the log-likelihood should only go up
table = train_ibm1(pairs, iterations=10)
print("log-likelihood:", [round(x, 1) for x in table.log_likelihood])

# compare Viterbi links with the gold alignment
predicted = [viterbi_align(p, table) for p in pairs]
hits = sum(len(set(a.links) & set(g.links)) for a, g in zip(predicted, gold))
total = sum(len(a.links) for a in predicted)
print(f"link precision {hits / total:.3f}")

# pairs with a moved adverb have crossing links, so fewer spans qualify
crossing = next(k for k, g in enumerate(gold) if sorted(g.links, key=lambda l: l[1]) != list(g.links))
p, a = pairs[crossing], predicted[crossing]
print(p.l1.surfaces, "->", p.l2.surfaces, a.to_pharaoh())
for span in permissible_spans(a):
    print("  ", p.l1.surfaces[span.l1_start:span.l1_end + 1], "<->",
          p.l2.surfaces[span.l2_start:span.l2_end + 1])

groups = generate_ec_corpus(pairs, predicted, EcGenConfig(max_switches=2, samples_per_pair=3))
generated = [s for g in groups for s in g]
for s in generated[:5]:
    print(" ".join(s.surfaces))

real = toy.make_cs_corpus(400, seed=1)
print(f"generated: {len(generated)} sentences, CMI {cmi_corpus(generated):.3f}, "
      f"SPF {spf_corpus(generated):.3f}")
print(f"real-like: CMI {cmi_corpus(real):.3f}, SPF {spf_corpus(real):.3f}")
print("novel bigrams w.r.t. the real-like corpus:",
      round(ngram_novelty(generated, real, 2).ratio, 3))
print("spans per pair:", np.mean([len(permissible_spans(x)) for x in predicted]).round(2))
