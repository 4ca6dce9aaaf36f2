"""Code-switching corpus statistics: CMI, SPF, n-gram novelty and CER."""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

from .corpus import Lang, Sentence, is_cjk


@dataclass
class UtteranceStats:
    n: int
    per_lang: dict[Lang, int]
    switch_points: int


@dataclass
class NoveltyRow:
    n: int
    new: int
    ref_unique: int

    @property
    def ratio(self) -> float:
        return self.new / self.ref_unique

    def as_dict(self) -> dict:
        return {"n": self.n, "new": self.new, "refUnique": self.ref_unique, "ratio": self.ratio}


def _langs(s: Sentence | Sequence[Lang]) -> list:
    return s.langs if isinstance(s, Sentence) else list(s)


def _surfaces(s: Sentence | Sequence[str]) -> list[str]:
    return s.surfaces if isinstance(s, Sentence) else list(s)


def count_switch_points(s: Sentence | Sequence[Lang]) -> int:
    langs = _langs(s)
    return sum(a != b for a, b in zip(langs, langs[1:]))


def utterance_stats(s: Sentence | Sequence[Lang]) -> UtteranceStats:
    langs = _langs(s)
    return UtteranceStats(len(langs), dict(Counter(langs)), count_switch_points(langs))


def cmi_utterance(s: Sentence | Sequence[Lang]) -> float:
    """(N - max_l t_l + P) / N for one utterance.

    Accepts a Sentence or a bare sequence of language labels.
    """
    st = utterance_stats(s)
    if st.n == 0:
        raise ValueError("CMI is undefined for an empty utterance")
    return (st.n - max(st.per_lang.values()) + st.switch_points) / st.n


def cmi_corpus(corpus: Sequence[Sentence | Sequence[Lang]]) -> float:
    if not corpus:
        raise ValueError("CMI is undefined for an empty corpus")
    return sum(cmi_utterance(s) for s in corpus) / len(corpus)


def spf_corpus(corpus: Sequence[Sentence | Sequence[Lang]]) -> float:
    """Switch points over word boundaries, pooled across the corpus."""
    switches = boundaries = 0
    for s in corpus:
        langs = _langs(s)
        if not langs:
            raise ValueError("SPF requires every sentence to have at least one token")
        switches += count_switch_points(langs)
        boundaries += len(langs) - 1
    if boundaries == 0:
        raise ValueError("SPF is undefined: the corpus has no word boundaries")
    return switches / boundaries


def ngrams(corpus: Iterable[Sentence | Sequence[Hashable]], n: int) -> set[tuple]:
    out = set()
    for s in corpus:
        toks = _surfaces(s)
        out.update(tuple(toks[i : i + n]) for i in range(len(toks) - n + 1))
    return out


def ngram_novelty(generated, reference, n: int) -> NoveltyRow:
    """Unique generated n-grams absent from the reference, relative to the
    reference's unique n-gram count (so ratios above 1 are possible)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    ref = ngrams(reference, n)
    if not ref:
        raise ValueError(f"reference corpus has no {n}-grams")
    return NoveltyRow(n, len(ngrams(generated, n) - ref), len(ref))


def edit_distance(a: Sequence, b: Sequence) -> int:
    """Levenshtein distance with unit costs (two-row dynamic program)."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def cer(reference: Sequence, hypothesis: Sequence) -> float:
    if len(reference) == 0:
        raise ValueError("CER needs a non-empty reference")
    return edit_distance(reference, hypothesis) / len(reference)


def normalize_for_cer(text: str) -> str:
    """Drop spaces unless both neighbouring characters are non-CJK.

    Spaces between Latin words survive and are scored as characters;
    spaces inside or next to CJK runs carry no information and are removed.
    """
    chars = text.split()
    if not chars:
        return ""
    out = [chars[0]]
    for word in chars[1:]:
        if not is_cjk(out[-1][-1]) and not is_cjk(word[0]):
            out.append(" ")
        out.append(word)
    return "".join(out)


def cer_text(reference: str, hypothesis: str) -> float:
    return cer(normalize_for_cer(reference), normalize_for_cer(hypothesis))


@dataclass
class MetricsReport:
    cmi: float
    spf: float
    novelty: list[NoveltyRow] = field(default_factory=list)
    cer: float | None = None

    def as_dict(self) -> dict:
        d = {"cmi": self.cmi, "spf": self.spf, "novelty": [r.as_dict() for r in self.novelty]}
        if self.cer is not None:
            d["cer"] = self.cer
        return d

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        """Flat variant: one (metric, n, value) row per number."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "n", "value"])
        w.writerow(["cmi", "", repr(self.cmi)])
        w.writerow(["spf", "", repr(self.spf)])
        for r in self.novelty:
            w.writerow(["novelty_new", r.n, r.new])
            w.writerow(["novelty_refUnique", r.n, r.ref_unique])
            w.writerow(["novelty_ratio", r.n, repr(r.ratio)])
        if self.cer is not None:
            w.writerow(["cer", "", repr(self.cer)])
        return buf.getvalue()


def corpus_report(corpus: Sequence[Sentence], reference: Sequence[Sentence] | None = None,
                  orders: Iterable[int] = (1, 2, 3, 4)) -> MetricsReport:
    """CMI and SPF of ``corpus``, plus novelty against ``reference`` if given.

    Statistics are computed on the token sequence as stored, i.e. after CJK
    character splitting.
    """
    report = MetricsReport(cmi_corpus(corpus), spf_corpus(corpus))
    if reference is not None:
        report.novelty = [ngram_novelty(corpus, reference, n) for n in orders]
    return report
