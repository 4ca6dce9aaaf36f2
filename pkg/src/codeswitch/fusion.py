"""Shallow-fusion beam decoding over per-step character posteriors.

Hypotheses are ranked by

    alpha * log P_trans + beta * log p_lm + gamma * sqrt(word count)

where the LM is applied word by word: a Latin word completes at a space or
at a CJK character, and every CJK character is a word of its own. A partial
word contributes nothing to the LM score until it completes. The emission
matrix is position-synchronous (one character per step, no blanks) and
stands in for an acoustic model's decoder output.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import EOS_ID, is_cjk


@dataclass
class FusionConfig:
    alpha: float = 1.0
    beta: float = 0.0
    gamma: float = 0.0
    beams: int = 8

    def __post_init__(self):
        if self.beams < 1:
            raise ValueError("beams must be >= 1")


def fused_score(trans_score: float, lm_score: float, word_count: int, cfg: FusionConfig) -> float:
    if word_count < 0:
        raise ValueError("word_count must be >= 0")
    return cfg.alpha * trans_score + cfg.beta * lm_score + cfg.gamma * math.sqrt(word_count)


@dataclass
class EmissionSequence:
    log_probs: np.ndarray                    # (T, C)
    inventory: list[str]

    def __post_init__(self):
        self.log_probs = np.atleast_2d(np.asarray(self.log_probs, dtype=np.float64))
        t, c = self.log_probs.shape
        if c != len(self.inventory):
            raise ValueError(f"{c} emission columns for {len(self.inventory)} characters")
        if len(set(self.inventory)) != c or any(len(ch) != 1 for ch in self.inventory):
            raise ValueError("inventory must hold distinct single characters")
        sums = np.exp(self.log_probs).sum(axis=1)
        if t and not np.allclose(sums, 1.0, rtol=0, atol=1e-9):
            bad = int(np.argmax(np.abs(sums - 1.0)))
            raise ValueError(f"emission row {bad} sums to {sums[bad]!r}, not 1")

    @classmethod
    def from_probs(cls, probs, inventory: Sequence[str]) -> "EmissionSequence":
        with np.errstate(divide="ignore"):
            return cls(np.log(np.asarray(probs, dtype=np.float64)), list(inventory))

    @property
    def steps(self) -> int:
        return self.log_probs.shape[0]

    def save(self, path: str | Path) -> None:
        """JSON header line, then one line of linear probabilities per step."""
        t, c = self.log_probs.shape
        lines = [json.dumps({"inventory": self.inventory, "T": t, "C": c}, ensure_ascii=False)]
        lines += [" ".join(f"{p:.17g}" for p in row) for row in np.exp(self.log_probs)]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "EmissionSequence":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines:
            raise ValueError(f"{path}: empty emission file")
        header = json.loads(lines[0])
        for key in ("inventory", "T", "C"):
            if key not in header:
                raise ValueError(f"{path}: emission header lacks field {key!r}")
        rows = [[float(x) for x in ln.split()] for ln in lines[1:] if ln.strip()]
        if len(rows) != header["T"] or any(len(r) != header["C"] for r in rows):
            raise ValueError(f"{path}: expected {header['T']} rows of {header['C']} values")
        return cls.from_probs(np.array(rows).reshape(header["T"], header["C"]),
                              header["inventory"])


def segment(text: str) -> list[str]:
    """Words of a character string: space-separated Latin runs, single CJK chars."""
    words, cur = [], ""
    for ch in text:
        if ch.isspace() or is_cjk(ch):
            if cur:
                words.append(cur)
                cur = ""
            if is_cjk(ch):
                words.append(ch)
        else:
            cur += ch
    if cur:
        words.append(cur)
    return words


@dataclass
class Hypothesis:
    chars: tuple[str, ...]
    trans_score: float
    lm_score: float
    word_count: int
    fused_score: float
    # decoder bookkeeping
    lm_state: object = field(default=None, repr=False, compare=False)
    lm_next: np.ndarray | None = field(default=None, repr=False, compare=False)
    partial: str = field(default="", repr=False, compare=False)

    @property
    def text(self) -> str:
        return "".join(self.chars)

    @property
    def words(self) -> list[str]:
        return segment(self.text)


@dataclass
class FusionResult:
    best: Hypothesis
    n_best: list[Hypothesis]


class _Scorer:
    def __init__(self, lm, cfg: FusionConfig):
        self.lm, self.cfg = lm, cfg

    def start(self) -> Hypothesis:
        state, nxt = None, None
        if self.lm is not None:
            nxt, state = self.lm.initial()
        return Hypothesis((), 0.0, 0.0, 0, 0.0, state, nxt, "")

    def _complete(self, word, lm_score, wc, state, nxt):
        if self.lm is not None:
            tid = self.lm.vocab.id(word)
            lm_score += float(nxt[tid])
            nxt, state = self.lm.advance(state, tid)
        return lm_score, wc + 1, state, nxt

    def extend(self, h: Hypothesis, ch: str, logp: float) -> Hypothesis:
        lm_score, wc, state, nxt, partial = h.lm_score, h.word_count, h.lm_state, h.lm_next, h.partial
        if ch.isspace() or is_cjk(ch):
            if partial:
                lm_score, wc, state, nxt = self._complete(partial, lm_score, wc, state, nxt)
                partial = ""
            if is_cjk(ch):
                lm_score, wc, state, nxt = self._complete(ch, lm_score, wc, state, nxt)
        else:
            partial += ch
        trans = h.trans_score + logp
        return Hypothesis(h.chars + (ch,), trans, lm_score, wc,
                          fused_score(trans, lm_score, wc, self.cfg), state, nxt, partial)

    def finish(self, h: Hypothesis) -> Hypothesis:
        lm_score, wc, state, nxt = h.lm_score, h.word_count, h.lm_state, h.lm_next
        if h.partial:
            lm_score, wc, state, nxt = self._complete(h.partial, lm_score, wc, state, nxt)
        if self.lm is not None:
            lm_score += float(nxt[EOS_ID])
        return Hypothesis(h.chars, h.trans_score, lm_score, wc,
                          fused_score(h.trans_score, lm_score, wc, self.cfg))


def _rank(h: Hypothesis):
    return (-h.fused_score, h.chars)


def fused_beam_decode(emissions: EmissionSequence, lm, cfg: FusionConfig,
                      n_best: int | None = None) -> FusionResult:
    """Step-synchronous beam search; ``lm`` may be None (LM score stays 0).

    At the end, pending partial words are completed and the LM's
    end-of-sentence probability is added, so a finished hypothesis's LM
    score equals the LM's sentence score of its words.
    """
    if emissions.steps == 0:
        raise ValueError("empty emission sequence")
    scorer = _Scorer(lm, cfg)
    beam = [scorer.start()]
    for t in range(emissions.steps):
        row = emissions.log_probs[t]
        # zero-probability characters are impossible paths, not merely bad ones
        cands = [scorer.extend(h, ch, float(row[c]))
                 for h in beam for c, ch in enumerate(emissions.inventory) if row[c] > -np.inf]
        cands.sort(key=_rank)
        beam = cands[: cfg.beams]
    final = sorted((scorer.finish(h) for h in beam), key=_rank)
    return FusionResult(final[0], final[: n_best or cfg.beams])
