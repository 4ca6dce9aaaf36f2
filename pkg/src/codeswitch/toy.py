"""A tiny synthetic language pair for offline runs and tests.

L1 uses Latin pseudo-words, L2 one CJK character per word. L2 moves adverbs
in front of the verb, so some alignments cross. Code-switched sentences are
made by substituting aligned spans in either direction.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .align import SentenceAlignment
from .corpus import ParallelPair, Sentence, write_corpus, write_parallel
from .ecgen import EcGenConfig, generate_ec

PRONOUNS = ["mi", "tu", "ela", "noi", "voi", "lor"]
DETS = ["la", "un", "ce"]
ADJS = ["bun", "mare", "nou", "rosu", "vechi", "mic", "alb", "dulce"]
NOUNS = ["casa", "pom", "carte", "masa", "apa", "drum", "oras", "pisica", "caine",
         "scoala", "fereastra", "paine", "lapte", "munte", "rau", "soare"]
VERBS = ["vede", "are", "face", "ia", "vrea", "iubeste", "cauta", "gaseste", "duce", "mananca"]
ADVS = ["azi", "acum", "mereu", "iar", "repede"]

_CJK = ("我你她们这那一好大新红旧小白甜家树书桌水路城猫狗校窗面奶山河日"
        "看有做拿要爱找见带吃今现总又快人米")


def lexicon() -> dict[str, str]:
    words = PRONOUNS + DETS + ADJS + NOUNS + VERBS + ADVS
    assert len(_CJK) >= len(words)
    return dict(zip(words, _CJK))


def _noun_phrase(rng) -> list[tuple[str, str]]:
    if rng.random() < 0.3:
        return [(str(rng.choice(PRONOUNS)), "pron")]
    np_ = [(str(rng.choice(DETS)), "det")]
    if rng.random() < 0.5:
        np_.append((str(rng.choice(ADJS)), "adj"))
    np_.append((str(rng.choice(NOUNS)), "noun"))
    return np_


def sample_pair(rng: np.random.Generator) -> tuple[ParallelPair, SentenceAlignment]:
    """One L1/L2 pair with its gold alignment."""
    lex = lexicon()
    words = _noun_phrase(rng) + [(str(rng.choice(VERBS)), "verb")]
    if rng.random() < 0.7:
        words += _noun_phrase(rng)
    adv = rng.random() < 0.4
    if adv:
        words.append((str(rng.choice(ADVS)), "adv"))
    order = list(range(len(words)))
    if adv:
        verb = next(k for k, (_, tag) in enumerate(words) if tag == "verb")
        order = order[:verb] + [order[-1]] + order[verb:-1]
    l1 = [w for w, _ in words]
    l2 = [lex[words[k][0]] for k in order]
    links = tuple((k, order.index(k)) for k in range(len(words)))
    pair = ParallelPair(Sentence.from_surfaces(l1), Sentence.from_surfaces(l2))
    return pair, SentenceAlignment(links, len(l1), len(l2))


def make_parallel(n: int, seed: int = 0) -> tuple[list[ParallelPair], list[SentenceAlignment]]:
    rng = np.random.default_rng(seed)
    out = [sample_pair(rng) for _ in range(n)]
    return [p for p, _ in out], [a for _, a in out]


def _flip(pair: ParallelPair, a: SentenceAlignment):
    return (ParallelPair(pair.l2, pair.l1),
            SentenceAlignment(tuple((j, i) for i, j in a.links), a.l2_len, a.l1_len))


def make_cs_corpus(n: int, seed: int = 0, l2_matrix: float = 0.6) -> list[Sentence]:
    """Code-switched sentences: 1-2 substituted spans on an L1 or L2 matrix."""
    rng = np.random.default_rng(seed)
    cfg = EcGenConfig(max_switches=2, samples_per_pair=1)
    out: list[Sentence] = []
    while len(out) < n:
        pair, a = sample_pair(rng)
        if rng.random() < l2_matrix:
            pair, a = _flip(pair, a)
        out.extend(generate_ec(pair, a, cfg, rng))
    return out[:n]


def write_toy_data(directory: str | Path, seed: int = 0) -> None:
    """Write the bundled toy files: parallel text, gold alignment and CS splits."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    pairs, aligns = make_parallel(200, seed)
    write_parallel(d / "toy_parallel.tsv", pairs)
    (d / "toy_gold_align.txt").write_text("".join(a.to_pharaoh() + "\n" for a in aligns),
                                          encoding="utf-8")
    for name, count, offset in (("train", 400, 1), ("valid", 100, 2), ("test", 100, 3)):
        write_corpus(d / f"toy_cs_{name}.txt", make_cs_corpus(count, seed + offset))


def data_path(name: str) -> Path:
    return Path(__file__).parent / "data" / name
