"""Code-switch generation by phrase substitution under the equivalence constraint.

Two links cross when their L1 order and L2 order disagree. An L1 phrase may
be replaced by its aligned L2 phrase only if none of its links cross a link
outside it and its L2 image is a contiguous block owned by the phrase alone.
Tokens outside substituted phrases keep their L1 order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .align import SentenceAlignment
from .corpus import ParallelPair, Sentence


@dataclass(frozen=True, order=True)
class SwitchSpan:
    """Inclusive L1 interval ``l1_start..l1_end`` and its L2 interval."""

    l1_start: int
    l1_end: int
    l2_start: int
    l2_end: int

    def overlaps(self, other: "SwitchSpan") -> bool:
        """True when the spans share a position in either language."""
        l1 = not (self.l1_end < other.l1_start or other.l1_end < self.l1_start)
        l2 = not (self.l2_end < other.l2_start or other.l2_end < self.l2_start)
        return l1 or l2


@dataclass
class EcGenConfig:
    max_switches: int = 2
    samples_per_pair: int = 3
    rng_seed: int = 0

    def __post_init__(self):
        if self.max_switches < 0:
            raise ValueError("max_switches must be >= 0")
        if self.samples_per_pair < 0:
            raise ValueError("samples_per_pair must be >= 0")


def violates_ec(a: SentenceAlignment, i: int, j: int) -> bool:
    u, v = a.u, a.v
    return (u[i] < u[j] and v[i] > v[j]) or (u[i] > u[j] and v[i] < v[j])


def permissible_spans(a: SentenceAlignment, l1_len: int | None = None,
                      l2_len: int | None = None) -> list[SwitchSpan]:
    m = a.l1_len if l1_len is None else l1_len
    if (m, a.l2_len if l2_len is None else l2_len) != (a.l1_len, a.l2_len):
        raise ValueError("sentence lengths disagree with the alignment")
    u, v = a.u, a.v
    spans = []
    for s in range(m):
        for e in range(s, m):
            inside = [k for k in range(len(u)) if s <= u[k] <= e]
            if not inside:
                continue
            outside = [k for k in range(len(u)) if not s <= u[k] <= e]
            image = {v[k] for k in inside}
            lo, hi = min(image), max(image)
            if len(image) != hi - lo + 1:
                continue
            if any(lo <= v[k] <= hi for k in outside):
                continue
            if any(violates_ec(a, k, k2) for k in inside for k2 in outside):
                continue
            spans.append(SwitchSpan(s, e, lo, hi))
    return spans


def substitute(pair: ParallelPair, spans: Sequence[SwitchSpan]) -> Sentence:
    tokens = []
    pos = 0
    for sp in sorted(spans):
        tokens.extend(pair.l1.tokens[pos : sp.l1_start])
        tokens.extend(pair.l2.tokens[sp.l2_start : sp.l2_end + 1])
        pos = sp.l1_end + 1
    tokens.extend(pair.l1.tokens[pos:])
    return Sentence(tuple(tokens))


def check_substitution(a: SentenceAlignment, spans: Sequence[SwitchSpan]) -> bool:
    """Independent post-hoc validator for a chosen set of spans.

    Verifies, by direct comparison of index pairs, that each span's links
    cross nothing outside it, that each span owns its L2 block, and that the
    chosen spans are disjoint and keep the same relative order in both
    languages.
    """
    for sp in spans:
        ins = [(i, j) for i, j in a.links if sp.l1_start <= i <= sp.l1_end]
        outs = [(i, j) for i, j in a.links if not sp.l1_start <= i <= sp.l1_end]
        if not ins:
            return False
        if {j for _, j in ins} != set(range(sp.l2_start, sp.l2_end + 1)):
            return False
        for i, j in ins:
            for i2, j2 in outs:
                if sp.l2_start <= j2 <= sp.l2_end:
                    return False
                if (i - i2) * (j - j2) < 0:
                    return False
    for x in range(len(spans)):
        for y in range(x + 1, len(spans)):
            p, q = spans[x], spans[y]
            if p.overlaps(q):
                return False
            if (p.l1_start < q.l1_start) != (p.l2_start < q.l2_start):
                return False
    return True


def _sample_span_set(spans: list[SwitchSpan], max_switches: int, rng: np.random.Generator):
    k = int(rng.integers(1, max_switches + 1))
    chosen: list[SwitchSpan] = []
    for _ in range(k):
        free = [sp for sp in spans if not any(sp.overlaps(c) for c in chosen)]
        if not free:
            break
        chosen.append(free[int(rng.integers(len(free)))])
    return sorted(chosen)


def sample_switches(pair: ParallelPair, a: SentenceAlignment, cfg: EcGenConfig,
                    rng: np.random.Generator | None = None
                    ) -> list[tuple[Sentence, tuple[SwitchSpan, ...]]]:
    """Like :func:`generate_ec`, but each sentence comes with the spans it used."""
    if cfg.max_switches == 0 or cfg.samples_per_pair == 0:
        return []
    spans = permissible_spans(a, len(pair.l1), len(pair.l2))
    if not spans:
        return []
    rng = np.random.default_rng(cfg.rng_seed) if rng is None else rng
    seen = {tuple(pair.l1.surfaces)}
    out = []
    for _ in range(16 * cfg.samples_per_pair):
        chosen = _sample_span_set(spans, cfg.max_switches, rng)
        sent = substitute(pair, chosen)
        key = tuple(sent.surfaces)
        if key in seen:
            continue
        seen.add(key)
        out.append((sent, tuple(chosen)))
        if len(out) == cfg.samples_per_pair:
            break
    return out


def generate_ec(pair: ParallelPair, a: SentenceAlignment, cfg: EcGenConfig,
                rng: np.random.Generator | None = None) -> list[Sentence]:
    """Up to ``samples_per_pair`` distinct code-switched variants of ``pair.l1``.

    Each variant substitutes between 1 and ``max_switches`` disjoint
    permissible spans, drawn uniformly. Sampling stops after 16 attempts
    per requested sample.
    """
    return [s for s, _ in sample_switches(pair, a, cfg, rng)]


def generate_ec_corpus(pairs: Sequence[ParallelPair], alignments: Sequence[SentenceAlignment],
                       cfg: EcGenConfig) -> list[list[Sentence]]:
    """Per-pair outputs; pair ``k`` uses a generator seeded with (seed, k)."""
    if len(pairs) != len(alignments):
        raise ValueError("need exactly one alignment per pair")
    return [generate_ec(p, a, cfg, np.random.default_rng([cfg.rng_seed, k]))
            for k, (p, a) in enumerate(zip(pairs, alignments))]
