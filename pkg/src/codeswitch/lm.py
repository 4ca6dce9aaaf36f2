"""Two-layer LSTM language model with tied embeddings, bucketed perplexity and
the real/generated training-strategy harness.

Training concatenates sentences into one token stream with ``</s>`` after
each sentence and runs truncated backpropagation over ``batch_size``
parallel slices of the stream. Evaluation scores each sentence from a fresh
state, feeding ``</s>`` as the first input, so every token can be placed in a
language-transition bucket.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import EOS_ID, Lang, Sentence, Vocabulary, build_vocab
from .neural import (LstmCellParams, NumericalError, Params, TrainerConfig, dropout_mask,
                     init_lstm, load_checkpoint, log_softmax, lstm_backward, lstm_forward,
                     save_checkpoint, sgd_clip_step, uniform_init, zeros_like)

log = logging.getLogger(__name__)

BUCKETS = ("en-zh", "zh-en", "en-en", "zh-zh")


@dataclass
class LMConfig:
    hidden_size: int = 200
    unroll_steps: int = 35
    batch_size: int = 20
    dropout: float = 0.2
    max_epochs: int = 40
    early_stop_patience: int = 5
    fine_tune_lr: float = 1.0
    vocab_cap: int = 50_000
    trainer: TrainerConfig = field(default_factory=lambda: TrainerConfig(20.0, 0.75, 0.25, 0))
    layers: int = 2
    tied_embeddings: bool = True

    def __post_init__(self):
        if isinstance(self.trainer, dict):
            self.trainer = TrainerConfig(**self.trainer)
        if self.layers != 2 or not self.tied_embeddings:
            raise ValueError("only the two-layer tied-embedding model is supported")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")
        if self.unroll_steps < 1 or self.batch_size < 1:
            raise ValueError("unroll_steps and batch_size must be >= 1")

    @property
    def embed_size(self) -> int:
        return self.hidden_size


class Strategy(str, enum.Enum):
    REAL_ONLY = "RealOnly"
    GEN_ONLY = "GenOnly"
    CONCAT = "Concat"
    TWO_STEP = "TwoStep"


class GenSource(str, enum.Enum):
    EC = "EC"
    POINTER_GEN = "PointerGen"
    EXTERNAL = "External"


# Row labels of the strategy table: (strategy, generated-data source).
STRATEGY_CELLS: dict[str, tuple[Strategy, GenSource | None]] = {
    "1": (Strategy.REAL_ONLY, None),
    "2a": (Strategy.GEN_ONLY, GenSource.EC),
    "2b": (Strategy.GEN_ONLY, GenSource.EXTERNAL),
    "2c": (Strategy.GEN_ONLY, GenSource.POINTER_GEN),
    "3a": (Strategy.CONCAT, GenSource.EC),
    "3b": (Strategy.CONCAT, GenSource.EXTERNAL),
    "3c": (Strategy.CONCAT, GenSource.POINTER_GEN),
    "4a": (Strategy.TWO_STEP, GenSource.EC),
    "4b": (Strategy.TWO_STEP, GenSource.EXTERNAL),
    "4c": (Strategy.TWO_STEP, GenSource.POINTER_GEN),
}


class LanguageModel:
    """Next-token model over ``vocab``.

    Incremental use: ``logp, state = lm.initial()`` gives the distribution of
    the first token; ``lm.advance(state, token_id)`` consumes a token and
    returns the next distribution.
    """

    def __init__(self, vocab: Vocabulary, cfg: LMConfig | None = None,
                 params: Params | None = None):
        self.vocab = vocab
        self.cfg = cfg or LMConfig()
        if params is None:
            rng = np.random.default_rng(self.cfg.trainer.rng_seed)
            h = self.cfg.hidden_size
            params = {"emb": uniform_init(rng, len(vocab), h)}
            init_lstm(params, "l0", h, h, rng)
            init_lstm(params, "l1", h, h, rng)
            params["out.b"] = np.zeros((1, len(vocab)))
        self.params = params

    @property
    def embedding(self) -> np.ndarray:
        return self.params["emb"]

    @property
    def output_weight(self) -> np.ndarray:
        # tied: the output projection is the embedding matrix itself
        return self.params["emb"]

    def _cells(self):
        return (LstmCellParams.from_store(self.params, "l0"),
                LstmCellParams.from_store(self.params, "l1"))

    def zero_state(self, batch: int = 1):
        z = np.zeros((batch, self.cfg.hidden_size))
        return (z, z, z, z)

    def _feed(self, state, ids):
        l0, l1 = self._cells()
        h0, c0, h1, c1 = state
        x = self.params["emb"][np.atleast_1d(ids)]
        h0, c0, _ = lstm_forward(l0, x, h0, c0)
        h1, c1, _ = lstm_forward(l1, h0, h1, c1)
        logp = log_softmax(h1 @ self.params["emb"].T + self.params["out.b"])
        return logp, (h0, c0, h1, c1)

    def initial(self):
        return self.advance(self.zero_state(), EOS_ID)

    def advance(self, state, token_id: int):
        logp, state = self._feed(state, token_id)
        return logp[0], state

    def sentence_log_probs(self, sentence: Sentence | Sequence[str]) -> np.ndarray:
        """Log probability of each token and finally of ``</s>``."""
        return self.batch_log_probs([sentence])[0]

    def batch_log_probs(self, sentences: Sequence[Sentence | Sequence[str]],
                        chunk: int = 64) -> list[np.ndarray]:
        out = []
        for k in range(0, len(sentences), chunk):
            block = [self.vocab.encode(_surfaces(s)) + [EOS_ID] for s in sentences[k : k + chunk]]
            longest = max(len(b) for b in block)
            tgt = np.full((len(block), longest), EOS_ID)
            for r, b in enumerate(block):
                tgt[r, : len(b)] = b
            state = self.zero_state(len(block))
            prev = np.full(len(block), EOS_ID)
            scores = np.zeros((len(block), longest))
            rows = np.arange(len(block))
            for t in range(longest):
                logp, state = self._feed(state, prev)
                scores[:, t] = logp[rows, tgt[:, t]]
                prev = tgt[:, t]
            out.extend(scores[r, : len(b)] for r, b in enumerate(block))
        return out

    # --- training ---------------------------------------------------------------

    def window_loss_and_grads(self, inputs: np.ndarray, targets: np.ndarray, state,
                              rng: np.random.Generator | None = None, need_grads: bool = True):
        """Mean NLL over a (batch, steps) window; returns (loss, grads, final state).

        Dropout (rate ``cfg.dropout``) hits the embedding output and the
        connection between the two LSTM layers when ``rng`` is given.
        """
        p = self.params
        l0, l1 = self._cells()
        rate = self.cfg.dropout if rng is not None else 0.0
        b, k = inputs.shape
        h0, c0, h1, c1 = state
        caches, tops = [], []
        for t in range(k):
            x = p["emb"][inputs[:, t]]
            m_e = dropout_mask(rng, x.shape, rate) if rate else None
            if m_e is not None:
                x = x * m_e
            h0, c0, cache0 = lstm_forward(l0, x, h0, c0)
            m_h = dropout_mask(rng, h0.shape, rate) if rate else None
            y0 = h0 * m_h if m_h is not None else h0
            h1, c1, cache1 = lstm_forward(l1, y0, h1, c1)
            caches.append((cache0, cache1, m_e, m_h))
            tops.append(h1)
        top = np.concatenate(tops, axis=0)            # (k*b, H), time-major
        tgt = targets.T.reshape(-1)
        logp = log_softmax(top @ p["emb"].T + p["out.b"])
        n = len(tgt)
        loss = -float(logp[np.arange(n), tgt].sum()) / n
        if not math.isfinite(loss):
            raise NumericalError("non-finite LM loss")
        final = (h0, c0, h1, c1)
        if not need_grads:
            return loss, None, final

        g = zeros_like(p)
        d_logits = np.exp(logp)
        d_logits[np.arange(n), tgt] -= 1.0
        d_logits /= n
        g["emb"] += d_logits.T @ top
        g["out.b"] += d_logits.sum(axis=0, keepdims=True)
        d_top = (d_logits @ p["emb"]).reshape(k, b, -1)
        hs = self.cfg.hidden_size
        dh0 = dc0 = dh1 = dc1 = np.zeros((b, hs))
        for t in reversed(range(k)):
            cache0, cache1, m_e, m_h = caches[t]
            dy0, dh1, dc1 = lstm_backward(l1, cache1, d_top[t] + dh1, dc1, g)
            if m_h is not None:
                dy0 = dy0 * m_h
            dx, dh0, dc0 = lstm_backward(l0, cache0, dy0 + dh0, dc0, g)
            if m_e is not None:
                dx = dx * m_e
            np.add.at(g["emb"], inputs[:, t], dx)
        return loss, g, final

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        meta = {"kind": "lm", "config": asdict(self.cfg), "vocab": self.vocab.words}
        meta.update(extra or {})
        save_checkpoint(path, self.params, meta)

    @classmethod
    def load(cls, path: str | Path) -> "LanguageModel":
        params, meta = load_checkpoint(path)
        if meta.get("kind") != "lm":
            raise ValueError(f"{path}: not a language-model checkpoint")
        return cls(Vocabulary(meta["vocab"]), LMConfig(**meta["config"]), params)


class UniformLM:
    """Every token equally likely; a reference model for tests and fusion."""

    def __init__(self, vocab: Vocabulary):
        self.vocab = vocab
        self._logp = np.full(len(vocab), -math.log(len(vocab)))

    def initial(self):
        return self._logp, None

    def advance(self, state, token_id: int):
        return self._logp, None

    def sentence_log_probs(self, sentence) -> np.ndarray:
        return np.full(len(_surfaces(sentence)) + 1, -math.log(len(self.vocab)))

    def batch_log_probs(self, sentences) -> list[np.ndarray]:
        return [self.sentence_log_probs(s) for s in sentences]


def _surfaces(s) -> list[str]:
    return s.surfaces if isinstance(s, Sentence) else list(s)


def _langs(s) -> list[Lang]:
    return s.langs if isinstance(s, Sentence) else Sentence.from_surfaces(s).langs


# --- evaluation ------------------------------------------------------------------


def score_sentence(model, sentence) -> float:
    """Total log probability including the end-of-sentence token."""
    return float(np.sum(model.sentence_log_probs(sentence)))


def bucket_of(prev: Lang | None, cur: Lang) -> str:
    prev = cur if prev is None else prev
    return f"{prev.short}-{cur.short}"


@dataclass
class PerplexityReport:
    overall: float
    token_count: int
    buckets: dict[str, tuple[int, float | None]]

    def as_dict(self) -> dict:
        return {"overall": self.overall, "tokens": self.token_count,
                "buckets": {k: {"tokens": n, "ppl": p} for k, (n, p) in self.buckets.items()}}


def eval_ppl(model, corpus: Sequence[Sentence]) -> PerplexityReport:
    """exp(mean token NLL) overall and per language-transition bucket.

    The end-of-sentence prediction is not scored here. A token's bucket is
    (language of previous token, its own language); sentence-initial tokens
    fall into the monolingual bucket of their own language.
    """
    if not corpus:
        raise ValueError("cannot evaluate perplexity on an empty corpus")
    nll = {b: 0.0 for b in BUCKETS}
    count = {b: 0 for b in BUCKETS}
    for sent, logp in zip(corpus, model.batch_log_probs(list(corpus))):
        langs = _langs(sent)
        for i, lang in enumerate(langs):
            b = bucket_of(langs[i - 1] if i else None, lang)
            nll[b] -= float(logp[i])
            count[b] += 1
    total = sum(count.values())
    if total == 0:
        raise ValueError("corpus contains no tokens")
    buckets = {b: (count[b], math.exp(nll[b] / count[b]) if count[b] else None) for b in BUCKETS}
    return PerplexityReport(math.exp(sum(nll.values()) / total), total, buckets)


def _stream(vocab: Vocabulary, corpus: Sequence[Sentence]) -> np.ndarray:
    ids = [EOS_ID]
    for s in corpus:
        ids.extend(vocab.encode(_surfaces(s)))
        ids.append(EOS_ID)
    return np.array(ids)


# --- training ------------------------------------------------------------------


@dataclass
class TrainHistory:
    train_ppl: list[float] = field(default_factory=list)
    valid_ppl: list[float] = field(default_factory=list)
    learning_rates: list[float] = field(default_factory=list)
    phase: list[int] = field(default_factory=list)


def _run_epoch(model: LanguageModel, ids: np.ndarray, lr: float, rng) -> float:
    cfg = model.cfg
    b = min(cfg.batch_size, max(1, (len(ids) - 1) // 2))
    n = (len(ids) - 1) // b
    inputs = ids[: n * b].reshape(b, n)
    targets = ids[1 : n * b + 1].reshape(b, n)
    state = model.zero_state(b)
    total = 0.0
    for t in range(0, n, cfg.unroll_steps):
        x, y = inputs[:, t : t + cfg.unroll_steps], targets[:, t : t + cfg.unroll_steps]
        loss, grads, state = model.window_loss_and_grads(x, y, state, rng)
        sgd_clip_step(model.params, grads, cfg.trainer, lr)
        total += loss * y.size
    return math.exp(total / (n * b))


def _fit(model: LanguageModel, train_ids: np.ndarray, valid: Sequence[Sentence] | None,
         lr: float, rng, history: TrainHistory, phase: int, best: float = math.inf) -> float:
    """Epoch loop with decay-on-plateau, early stopping and best-state restore."""
    cfg = model.cfg
    best_params = {k: v.copy() for k, v in model.params.items()}
    bad = 0
    for _ in range(cfg.max_epochs):
        train_ppl = _run_epoch(model, train_ids, lr, rng)
        score = eval_ppl(model, valid).overall if valid else train_ppl
        history.train_ppl.append(train_ppl)
        history.valid_ppl.append(score)
        history.learning_rates.append(lr)
        history.phase.append(phase)
        log.info("phase %d epoch %d lr %.4g train ppl %.3f valid ppl %.3f", phase,
                 len(history.phase), lr, train_ppl, score)
        if score < best:
            best, bad = score, 0
            best_params = {k: v.copy() for k, v in model.params.items()}
        else:
            bad += 1
            lr *= cfg.trainer.decay
            if bad >= cfg.early_stop_patience:
                break
    for k, v in best_params.items():
        model.params[k][...] = v
    return best


def train_lm(real: Sequence[Sentence], generated: Sequence[Sentence] | None,
             strategy: Strategy | str, cfg: LMConfig | None = None,
             valid: Sequence[Sentence] | None = None, vocab: Vocabulary | None = None,
             phase1_checkpoint: str | Path | None = None) -> tuple[LanguageModel, TrainHistory]:
    """Train under one strategy; returns the best-on-validation model.

    Training sentences are shuffled once with the run seed before being
    streamed, for every strategy. TwoStep fits the generated corpus first,
    then fine-tunes on real data starting at ``cfg.fine_tune_lr``; if
    ``phase1_checkpoint`` is given the phase boundary goes through that file.
    """
    cfg = cfg or LMConfig()
    strategy = Strategy(strategy)
    generated = list(generated or [])
    real = list(real or [])
    if strategy in (Strategy.GEN_ONLY, Strategy.TWO_STEP) and not generated:
        raise ValueError(f"strategy {strategy.value} needs a generated corpus")
    if strategy in (Strategy.REAL_ONLY, Strategy.CONCAT, Strategy.TWO_STEP) and not real:
        raise ValueError(f"strategy {strategy.value} needs a real corpus")
    if vocab is None:
        vocab = build_vocab(real + generated, cfg.vocab_cap)
    model = LanguageModel(vocab, cfg)
    rng = np.random.default_rng(cfg.trainer.rng_seed)
    history = TrainHistory()

    def ids_for(corpus):
        order = rng.permutation(len(corpus))
        return _stream(vocab, [corpus[i] for i in order])

    lr = cfg.trainer.learning_rate
    if strategy is Strategy.REAL_ONLY:
        _fit(model, ids_for(real), valid, lr, rng, history, 1)
    elif strategy is Strategy.GEN_ONLY:
        _fit(model, ids_for(generated), valid, lr, rng, history, 1)
    elif strategy is Strategy.CONCAT:
        _fit(model, ids_for(real + generated), valid, lr, rng, history, 1)
    else:
        best = _fit(model, ids_for(generated), valid, lr, rng, history, 1)
        if phase1_checkpoint is not None:
            model.save(phase1_checkpoint, {"phase": 1})
            model = LanguageModel.load(phase1_checkpoint)
        _fit(model, ids_for(real), valid, cfg.fine_tune_lr, rng, history, 2, best)
    return model, history


# --- strategy matrix --------------------------------------------------------------


@dataclass
class StrategyRow:
    cell: str
    strategy: str
    source: str | None
    split: str
    report: PerplexityReport

    def flat(self) -> dict:
        d = {"strategy": self.cell, "split": self.split, "overall": self.report.overall}
        for b in BUCKETS:
            d[b] = self.report.buckets[b][1]
        return d


@dataclass
class StrategyMatrix:
    rows: list[StrategyRow]

    def to_json(self) -> str:
        data = [dict(r.flat(), kind=r.strategy, source=r.source, tokens=r.report.token_count,
                     bucket_tokens={b: r.report.buckets[b][0] for b in BUCKETS})
                for r in self.rows]
        return json.dumps(data, indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["strategy", "split", "overall", "en-zh", "zh-en", "en-en", "zh-zh"]
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v)
                        for k, v in r.flat().items()})
        return buf.getvalue()

    def get(self, cell: str, split: str) -> PerplexityReport:
        return next(r.report for r in self.rows if r.cell == cell and r.split == split)


def run_strategy_matrix(real: Mapping[str, Sequence[Sentence]],
                        generated: Mapping[GenSource | str, Sequence[Sentence]],
                        cfg: LMConfig | None = None,
                        cells: Sequence[str] | None = None) -> StrategyMatrix:
    """Train one model per table cell and evaluate it on valid and test.

    ``real`` must hold "train", "valid" and "test" splits. Cells default to
    every row whose generated source is available. All cells share the seed
    and a vocabulary built from every training corpus involved.
    """
    cfg = cfg or LMConfig()
    for split in ("train", "valid", "test"):
        if not real.get(split):
            raise ValueError(f"missing real '{split}' split")
    gen = {GenSource(k): list(v) for k, v in generated.items()}
    if cells is None:
        cells = [c for c, (_, src) in STRATEGY_CELLS.items() if src is None or src in gen]
    corpora = list(real["train"])
    for c in cells:
        if c not in STRATEGY_CELLS:
            raise ValueError(f"unknown strategy cell {c!r}")
        src = STRATEGY_CELLS[c][1]
        if src is not None:
            if src not in gen:
                raise ValueError(f"cell {c}: no generated corpus for source {src.value}")
    for src in sorted({STRATEGY_CELLS[c][1] for c in cells} - {None}, key=lambda s: s.value):
        corpora.extend(gen[src])
    vocab = build_vocab(corpora, cfg.vocab_cap)
    rows = []
    for c in cells:
        strategy, src = STRATEGY_CELLS[c]
        try:
            model, _ = train_lm(real["train"], gen[src] if src else None, strategy, cfg,
                                valid=real["valid"], vocab=vocab)
            for split in ("valid", "test"):
                rows.append(StrategyRow(c, strategy.value, src.value if src else None, split,
                                        eval_ppl(model, real[split])))
        except Exception as exc:
            raise RuntimeError(f"strategy cell {c} failed: {exc}") from exc
    return StrategyMatrix(rows)
