"""Word alignment between parallel sentences.

A small IBM Model 1 aligner (optionally biased toward the diagonal) trained
with EM, Viterbi link extraction from L1 to L2, and Pharaoh-format
import/export so alignments from an external tool can be used instead.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import ParallelPair

NULL = "<null>"
# Probability used for (q, e) pairs never seen together in training.
FLOOR = 1e-12


@dataclass
class TranslationTable:
    """Lexical probabilities t(e | q), stored sparsely as one row per L1 word."""

    rows: dict[str, dict[str, float]] = field(default_factory=dict)
    log_likelihood: list[float] = field(default_factory=list)

    def prob(self, e: str, q: str) -> float:
        p = self.rows.get(q, {}).get(e, 0.0)
        return p if p > FLOOR else FLOOR

    def row_sums(self) -> dict[str, float]:
        return {q: math.fsum(r.values()) for q, r in self.rows.items()}

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for q in sorted(self.rows):
                for e in sorted(self.rows[q]):
                    fh.write(f"{q}\t{e}\t{self.rows[q][e]:.17g}\n")

    @classmethod
    def load(cls, path: str | Path) -> "TranslationTable":
        rows: dict[str, dict[str, float]] = defaultdict(dict)
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 3:
                    raise ValueError(f"{path}:{lineno}: expected q<TAB>e<TAB>prob")
                rows[parts[0]][parts[1]] = float(parts[2])
        return cls(dict(rows))


@dataclass(frozen=True)
class SentenceAlignment:
    """Links (i, j) from L1 position i to L2 position j.

    ``u`` lists the L1 indices in ascending order and ``v`` the matching L2
    indices. Viterbi alignments have one link per aligned L1 token, so ``u``
    is strictly ascending; imported alignments may repeat an L1 index.
    """

    links: tuple[tuple[int, int], ...]
    l1_len: int
    l2_len: int

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(sorted(set(self.links))))
        for i, j in self.links:
            if not (0 <= i < self.l1_len and 0 <= j < self.l2_len):
                raise ValueError(f"link {i}-{j} out of range for sentence lengths "
                                 f"{self.l1_len}/{self.l2_len}")

    @property
    def u(self) -> list[int]:
        return [i for i, _ in self.links]

    @property
    def v(self) -> list[int]:
        return [j for _, j in self.links]

    def to_pharaoh(self) -> str:
        return " ".join(f"{i}-{j}" for i, j in self.links)


def _lengths(pair) -> tuple[int, int]:
    return len(pair.l1), len(pair.l2)


def import_pharaoh(line: str, pair: ParallelPair) -> SentenceAlignment:
    m, n = _lengths(pair)
    links = []
    for item in line.split():
        i, sep, j = item.partition("-")
        if not sep or not i.isdigit() or not j.isdigit():
            raise ValueError(f"malformed alignment pair {item!r}")
        i, j = int(i), int(j)
        if i >= m or j >= n:
            raise ValueError(f"alignment pair {item!r} out of range for lengths {m}/{n}")
        links.append((i, j))
    return SentenceAlignment(tuple(links), m, n)


def read_pharaoh(path: str | Path, pairs: Sequence[ParallelPair]) -> list[SentenceAlignment]:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if len(lines) != len(pairs):
        raise ValueError(f"{path}: {len(lines)} alignment lines for {len(pairs)} pairs")
    out = []
    for lineno, (line, pair) in enumerate(zip(lines, pairs), 1):
        try:
            out.append(import_pharaoh(line, pair))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    return out


def write_pharaoh(path: str | Path, alignments: Iterable[SentenceAlignment]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a in alignments:
            fh.write(a.to_pharaoh() + "\n")


def _diag_weight(i: int, j: int, m: int, n: int, bias: float) -> float:
    # 1-based positions, as in fast_align's diagonal prior
    return math.exp(-bias * abs((i + 1) / m - (j + 1) / n))


def _posterior_weights(q_words, e_words, bias):
    m, n = len(q_words), len(e_words)
    if bias == 0.0:
        return None
    return [[_diag_weight(i, j, m, n, bias) for i in range(m)] for j in range(n)]


def train_ibm1(pairs: Sequence[ParallelPair], iterations: int = 5,
               diagonal_bias: float = 0.0) -> TranslationTable:
    """EM for t(e | q) with a NULL source word.

    Rows start uniform over the L2 words co-occurring with each L1 word.
    ``log_likelihood`` on the returned table holds the corpus log-likelihood
    of the (unbiased) model before each update, so its first entry is the
    likelihood of the uniform initialisation.
    """
    if not pairs:
        raise ValueError("cannot train an aligner on an empty corpus")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if diagonal_bias < 0:
        raise ValueError("diagonal_bias must be >= 0")

    bitext = [([NULL] + p.l1.surfaces, p.l2.surfaces) for p in pairs]
    cooc: dict[str, set[str]] = defaultdict(set)
    for qs, es in bitext:
        for q in qs:
            cooc[q].update(es)
    t = {q: {e: 1.0 / len(es) for e in es} for q, es in cooc.items()}
    table = TranslationTable(t)

    for _ in range(iterations):
        counts: dict[str, dict[str, float]] = {q: defaultdict(float) for q in t}
        ll = 0.0
        for qs, es in bitext:
            w = _posterior_weights(qs[1:], es, diagonal_bias)
            for j, e in enumerate(es):
                probs = [t[q][e] for q in qs]
                ll += math.log(math.fsum(probs) / len(qs))
                if w is not None:
                    probs = [probs[0]] + [p * wij for p, wij in zip(probs[1:], w[j])]
                z = math.fsum(probs)
                for q, p in zip(qs, probs):
                    counts[q][e] += p / z
        table.log_likelihood.append(ll)
        for q, row in counts.items():
            total = math.fsum(row.values())
            t[q] = {e: c / total for e, c in row.items()}
    table.rows = t
    return table


def corpus_log_likelihood(table: TranslationTable, pairs: Sequence[ParallelPair]) -> float:
    ll = 0.0
    for p in pairs:
        qs = [NULL] + p.l1.surfaces
        for e in p.l2.surfaces:
            ll += math.log(math.fsum(table.prob(e, q) for q in qs) / len(qs))
    return ll


def viterbi_align(pair: ParallelPair, table: TranslationTable) -> SentenceAlignment:
    """Link each L1 token to its most probable L2 token.

    The link is dropped when NULL explains that L2 word at least as well as
    the L1 token does. Ties between L2 positions go to the leftmost.
    """
    qs, es = pair.l1.surfaces, pair.l2.surfaces
    links = []
    for i, q in enumerate(qs):
        probs = [table.prob(e, q) for e in es]
        j = max(range(len(es)), key=lambda k: (probs[k], -k))
        if probs[j] > table.prob(es[j], NULL):
            links.append((i, j))
    return SentenceAlignment(tuple(links), len(qs), len(es))
