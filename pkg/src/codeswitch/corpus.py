"""Tokens, sentences, vocabularies and corpus file I/O.

Languages are identified by script: anything containing a CJK unified
ideograph is the embedded language (L2), everything else (including digits
and punctuation) is the matrix language (L1).
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

# CJK Unified Ideographs and their extensions.
_CJK_RANGES = (
    (0x3400, 0x4DBF),
    (0x4E00, 0x9FFF),
    (0x20000, 0x2A6DF),
    (0x2A700, 0x2B73F),
    (0x2B740, 0x2B81F),
    (0x2B820, 0x2CEAF),
    (0x2CEB0, 0x2EBEF),
    (0x30000, 0x3134F),
)

UNK = "<unk>"
SEP = "<sep>"
BOS = "<s>"
EOS = "</s>"
RESERVED = (UNK, SEP, BOS, EOS)
UNK_ID, SEP_ID, BOS_ID, EOS_ID = range(4)
NUM_RESERVED = len(RESERVED)


class Lang(str, enum.Enum):
    L1 = "L1"
    L2 = "L2"

    @property
    def short(self) -> str:
        """Bucket label used in reports ("en" for L1, "zh" for L2)."""
        return "en" if self is Lang.L1 else "zh"


def is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


def has_cjk(text: str) -> bool:
    return any(is_cjk(ch) for ch in text)


def tag_language(surface: str) -> Lang:
    if not surface:
        raise ValueError("cannot tag an empty surface")
    return Lang.L2 if has_cjk(surface) else Lang.L1


@dataclass(frozen=True)
class Token:
    surface: str
    lang: Lang

    def __post_init__(self):
        if not self.surface or any(ch.isspace() for ch in self.surface):
            raise ValueError(f"invalid token surface {self.surface!r}")

    @classmethod
    def of(cls, surface: str) -> "Token":
        return cls(surface, tag_language(surface))


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...] = ()

    @classmethod
    def from_surfaces(cls, surfaces: Iterable[str]) -> "Sentence":
        return cls(tuple(Token.of(s) for s in surfaces))

    @classmethod
    def parse(cls, line: str) -> "Sentence":
        """Build from an already tokenized, space separated line."""
        return cls.from_surfaces(line.split())

    @property
    def surfaces(self) -> list[str]:
        return [t.surface for t in self.tokens]

    @property
    def langs(self) -> list[Lang]:
        return [t.lang for t in self.tokens]

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self) -> Iterator[Token]:
        return iter(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]

    def __str__(self) -> str:
        return " ".join(self.surfaces)


@dataclass(frozen=True)
class ParallelPair:
    l1: Sentence
    l2: Sentence

    def __post_init__(self):
        if not len(self.l1) or not len(self.l2):
            raise ValueError("both sides of a parallel pair must be non-empty")


def tokenize(raw: str) -> Sentence:
    """Whitespace segmentation; segments with CJK characters are split per codepoint.

    >>> tokenize("hello 你好").surfaces
    ['hello', '你', '好']
    """
    surfaces: list[str] = []
    for seg in raw.split():
        if has_cjk(seg):
            surfaces.extend(seg)
        else:
            surfaces.append(seg)
    return Sentence.from_surfaces(surfaces)


class Vocabulary:
    """Bijective token/id table with a fixed reserved block at ids 0..3."""

    def __init__(self, tokens: Sequence[str] = ()):
        self.itos: list[str] = list(RESERVED)
        self.stoi: dict[str, int] = {s: i for i, s in enumerate(RESERVED)}
        for tok in tokens:
            if tok in self.stoi:
                raise ValueError(f"duplicate vocabulary entry {tok!r}")
            self.stoi[tok] = len(self.itos)
            self.itos.append(tok)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, surface: str) -> bool:
        return surface in self.stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def id(self, surface: str) -> int:
        return self.stoi.get(surface, UNK_ID)

    def token(self, idx: int) -> str:
        return self.itos[idx]

    def encode(self, surfaces: Iterable[str]) -> list[int]:
        return [self.id(s) for s in surfaces]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids]

    @property
    def words(self) -> list[str]:
        return self.itos[NUM_RESERVED:]

    def save(self, path: str | Path) -> None:
        Path(path).write_text("".join(w + "\n" for w in self.words), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls([ln for ln in lines if ln])


def build_vocab(corpus: Iterable[Sentence | Sequence[str]], cap: int) -> Vocabulary:
    """Keep the ``cap - 4`` most frequent surfaces; ties go to the earliest seen."""
    if cap < NUM_RESERVED:
        raise ValueError(f"cap must be at least {NUM_RESERVED}, got {cap}")
    counts: Counter[str] = Counter()
    for sent in corpus:
        surfaces = sent.surfaces if isinstance(sent, Sentence) else sent
        counts.update(s for s in surfaces if s not in RESERVED)
    # Counter preserves insertion order and most_common sorts stably.
    return Vocabulary([w for w, _ in counts.most_common(cap - NUM_RESERVED)])


def concat_pair(pair: ParallelPair) -> Sentence:
    return Sentence(pair.l1.tokens + (Token(SEP, Lang.L1),) + pair.l2.tokens)


# --- file formats -----------------------------------------------------------


def read_parallel(path: str | Path) -> list[ParallelPair]:
    """One pair per line, L1 and L2 separated by a single tab."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected one tab separating L1 and L2")
            try:
                pairs.append(ParallelPair(tokenize(parts[0]), tokenize(parts[1])))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return pairs


def write_parallel(path: str | Path, pairs: Iterable[ParallelPair]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(f"{p.l1}\t{p.l2}\n")


def read_corpus(path: str | Path) -> list[Sentence]:
    """Pre-tokenized sentences, one per line. Blank lines are skipped."""
    with open(path, encoding="utf-8") as fh:
        return [Sentence.parse(line) for line in fh if line.strip()]


def write_corpus(path: str | Path, sentences: Iterable[Sentence]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sentences:
            fh.write(f"{s}\n")
