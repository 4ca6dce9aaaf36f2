"""Pointer-generator network that writes code-switched sentences.

The encoder reads ``L1 <sep> L2`` with a bidirectional LSTM; a unidirectional
LSTM decoder attends over it with bilinear ("general") scores. Each step mixes
a vocabulary softmax with the attention distribution through a copy gate:

    p_gen = sigmoid(w_ctx . h* + w_s . s + w_x . x + b)
    P(w)  = p_gen * P_voc(w) + (1 - p_gen) * sum_{i: src_i = w} a_i

Source tokens outside the vocabulary get extended-vocabulary ids
``len(vocab) + k`` so they can still be copied.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .corpus import (BOS_ID, EOS_ID, UNK_ID, ParallelPair, Sentence, Token,
                     Vocabulary, build_vocab, concat_pair, tag_language)
from .neural import (LstmCellParams, Params, TrainerConfig, init_lstm, load_checkpoint,
                     lstm_backward, lstm_forward, save_checkpoint, sigmoid, softmax,
                     softmax_backward, sgd_clip_step, uniform_init, zeros_like)

log = logging.getLogger(__name__)

INPUT_ORDER = "L1 <sep> L2"


@dataclass
class PointerGenConfig:
    hidden_size: int = 64
    embed_size: int = 32
    vocab_cap: int = 2000
    max_decode_len: int = 40
    beams: int = 5
    n_best: int = 3
    epochs: int = 20
    min_improvement: float = 1e-4
    trainer: TrainerConfig = field(default_factory=lambda: TrainerConfig(1.0, 0.5, 5.0, 0))

    def __post_init__(self):
        if isinstance(self.trainer, dict):
            self.trainer = TrainerConfig(**self.trainer)
        if not self.beams >= self.n_best >= 1:
            raise ValueError("need beams >= n_best >= 1")
        if self.max_decode_len < 1:
            raise ValueError("max_decode_len must be >= 1")

    @classmethod
    def full_scale(cls, **kw) -> "PointerGenConfig":
        """500-dim hidden states and a 50k vocabulary."""
        return cls(hidden_size=500, embed_size=500, vocab_cap=50_000, **kw)


@dataclass
class DecoderStep:
    s: np.ndarray            # decoder state s_t, (1, H)
    x: np.ndarray            # input embedding x_t, (1, E)
    attention: np.ndarray    # a_t over source positions, (L,)
    context: np.ndarray      # h*_t, (1, 2H)
    p_vocab: np.ndarray      # (V,)
    p_gen: float
    final: np.ndarray        # over the extended vocabulary


@dataclass
class AttentionTrace:
    source: list[str]
    generated: list[str]
    weights: np.ndarray      # (len(generated), len(source))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([""] + self.source)
        for tok, row in zip(self.generated, self.weights):
            w.writerow([tok] + [repr(float(x)) for x in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "AttentionTrace":
        rows = list(csv.reader(io.StringIO(text)))
        weights = np.array([[float(x) for x in r[1:]] for r in rows[1:]]).reshape(
            len(rows) - 1, len(rows[0]) - 1)
        return cls(rows[0][1:], [r[0] for r in rows[1:]], weights)


def export_trace(trace: AttentionTrace, path: str | Path | None = None) -> str:
    """Heatmap CSV: generated tokens as rows, source tokens as columns."""
    text = trace.to_csv()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


@dataclass
class Hypothesis:
    sentence: Sentence
    log_score: float
    trace: AttentionTrace
    ids: tuple[int, ...] = ()


def attention_general(s: np.ndarray, enc: np.ndarray, w_a: np.ndarray):
    """Bilinear attention: score_i = s^T W_a h_i. Returns (a, context)."""
    if len(enc) == 0:
        raise ValueError("attention over an empty source")
    proj = np.atleast_2d(s) @ w_a
    a = softmax((enc @ proj.T).ravel())
    return a, (a @ enc)[None, :]


def copy_gate(context, s, x, w_ctx, w_s, w_x, b) -> float:
    z = (np.vdot(w_ctx, context) + np.vdot(w_s, s) + np.vdot(w_x, x)
         + float(np.asarray(b).reshape(-1)[0]))
    return float(sigmoid(z))


def final_dist(p_vocab: np.ndarray, attention: np.ndarray, p_gen: float,
               source_ids: Sequence[int], n_ext: int | None = None) -> np.ndarray:
    """Mix vocabulary and copy distributions over the extended vocabulary.

    ``source_ids`` are extended ids of the source positions; ids at or above
    ``len(p_vocab)`` are out-of-vocabulary copies with zero vocabulary mass.
    """
    source_ids = np.asarray(source_ids, dtype=np.int64)
    size = max(len(p_vocab), int(source_ids.max()) + 1 if len(source_ids) else 0)
    if n_ext is not None:
        size = max(size, n_ext)
    out = np.zeros(size)
    out[: len(p_vocab)] = p_gen * np.asarray(p_vocab)
    np.add.at(out, source_ids, (1.0 - p_gen) * np.asarray(attention))
    return out


@dataclass
class EncodedSource:
    tokens: list[str]
    ext_ids: np.ndarray      # extended ids for copying
    in_ids: np.ndarray       # embedding ids (OOV -> unk)
    oov: list[str]
    vocab_size: int

    @property
    def n_ext(self) -> int:
        return self.vocab_size + len(self.oov)


class PointerGenerator:
    def __init__(self, vocab: Vocabulary, cfg: PointerGenConfig | None = None,
                 params: Params | None = None):
        self.vocab = vocab
        self.cfg = cfg or PointerGenConfig()
        if params is None:
            params = self._init_params(np.random.default_rng(self.cfg.trainer.rng_seed))
        self.params = params

    def _init_params(self, rng) -> Params:
        v, e, h = len(self.vocab), self.cfg.embed_size, self.cfg.hidden_size
        p: Params = {"emb": uniform_init(rng, v, e)}
        init_lstm(p, "enc_fwd", e, h, rng)
        init_lstm(p, "enc_bwd", e, h, rng)
        init_lstm(p, "dec", e, h, rng)
        p["bridge_h.w"] = uniform_init(rng, 2 * h, h)
        p["bridge_h.b"] = uniform_init(rng, 1, h)
        p["bridge_c.w"] = uniform_init(rng, 2 * h, h)
        p["bridge_c.b"] = uniform_init(rng, 1, h)
        p["attn.w"] = uniform_init(rng, h, 2 * h)
        p["vocab.w"] = uniform_init(rng, 3 * h, v)
        p["vocab.b"] = uniform_init(rng, 1, v)
        p["gate.w_ctx"] = uniform_init(rng, 1, 2 * h)
        p["gate.w_s"] = uniform_init(rng, 1, h)
        p["gate.w_x"] = uniform_init(rng, 1, e)
        p["gate.b"] = uniform_init(rng, 1, 1)
        return p

    # --- inputs -------------------------------------------------------------

    def encode_source(self, source: ParallelPair | Sentence | Sequence[str]) -> EncodedSource:
        if isinstance(source, ParallelPair):
            source = concat_pair(source)
        tokens = source.surfaces if isinstance(source, Sentence) else list(source)
        if not tokens:
            raise ValueError("empty source sequence")
        oov: list[str] = []
        ext = []
        for tok in tokens:
            if tok in self.vocab:
                ext.append(self.vocab.id(tok))
            else:
                if tok not in oov:
                    oov.append(tok)
                ext.append(len(self.vocab) + oov.index(tok))
        return EncodedSource(tokens, np.array(ext), np.array(self.vocab.encode(tokens)),
                             oov, len(self.vocab))

    def target_ids(self, src: EncodedSource, target: Sentence | Sequence[str]) -> list[int]:
        surfaces = target.surfaces if isinstance(target, Sentence) else list(target)
        ids = []
        for tok in surfaces:
            if tok in self.vocab:
                ids.append(self.vocab.id(tok))
            elif tok in src.oov:
                ids.append(len(self.vocab) + src.oov.index(tok))
            else:
                raise ValueError(f"target token {tok!r} is neither in the vocabulary "
                                 f"nor copyable from the source")
        return ids + [EOS_ID]

    def id_to_token(self, src: EncodedSource, idx: int) -> str:
        v = len(self.vocab)
        return self.vocab.token(idx) if idx < v else src.oov[idx - v]

    # --- forward pieces -------------------------------------------------------

    def _encode(self, src: EncodedSource):
        p = self.params
        fwd = LstmCellParams.from_store(p, "enc_fwd")
        bwd = LstmCellParams.from_store(p, "enc_bwd")
        hs = self.cfg.hidden_size
        xs = p["emb"][src.in_ids]
        n = len(xs)
        hf, cf_cache = [None] * n, [None] * n
        hb, cb_cache = [None] * n, [None] * n
        h = c = np.zeros((1, hs))
        for i in range(n):
            h, c, cf_cache[i] = lstm_forward(fwd, xs[i : i + 1], h, c)
            hf[i] = h
        h = c = np.zeros((1, hs))
        for i in reversed(range(n)):
            h, c, cb_cache[i] = lstm_forward(bwd, xs[i : i + 1], h, c)
            hb[i] = h
        enc = np.concatenate([np.vstack(hf), np.vstack(hb)], axis=1)
        bridge_in = np.concatenate([hf[-1], hb[0]], axis=1)
        s0 = bridge_in @ p["bridge_h.w"] + p["bridge_h.b"]
        c0 = bridge_in @ p["bridge_c.w"] + p["bridge_c.b"]
        return enc, (s0, c0), (cf_cache, cb_cache, bridge_in)

    def _step(self, enc, src: EncodedSource, state, prev_id: int):
        p = self.params
        dec = LstmCellParams.from_store(p, "dec")
        in_id = prev_id if prev_id < len(self.vocab) else UNK_ID
        x = p["emb"][in_id : in_id + 1]
        s, c, cache = lstm_forward(dec, x, *state)
        a, ctx = attention_general(s, enc, p["attn.w"])
        p_vocab = softmax((np.concatenate([s, ctx], axis=1) @ p["vocab.w"] + p["vocab.b"]).ravel())
        p_gen = copy_gate(ctx, s, x, p["gate.w_ctx"], p["gate.w_s"], p["gate.w_x"], p["gate.b"])
        final = final_dist(p_vocab, a, p_gen, src.ext_ids, src.n_ext)
        return DecoderStep(s, x, a, ctx, p_vocab, p_gen, final), (s, c), cache

    def start(self, source):
        """Encode ``source``; returns (encoded source, encoder states, initial state)."""
        src = source if isinstance(source, EncodedSource) else self.encode_source(source)
        enc, state, _ = self._encode(src)
        return src, enc, state

    def step(self, enc, src: EncodedSource, state, prev_id: int):
        step, state, _ = self._step(enc, src, state, prev_id)
        return step, state

    # --- training objective ---------------------------------------------------

    def loss(self, source, target) -> float:
        return self.loss_and_grads(source, target, need_grads=False)[0]

    def sequence_log_prob(self, source, target_ids: Sequence[int]) -> float:
        """Teacher-forced log probability of an explicit id sequence."""
        src = source if isinstance(source, EncodedSource) else self.encode_source(source)
        enc, state, _ = self._encode(src)
        total, prev = 0.0, BOS_ID
        for y in target_ids:
            st, state, _ = self._step(enc, src, state, prev)
            total += math.log(st.final[y])
            prev = y
        return total

    def loss_and_grads(self, source, target, need_grads: bool = True):
        """Summed token NLL of ``target`` (plus end marker) and its gradients."""
        p = self.params
        src = source if isinstance(source, EncodedSource) else self.encode_source(source)
        y_out = self.target_ids(src, target)
        y_in = [BOS_ID] + y_out[:-1]
        enc, state, enc_cache = self._encode(src)
        steps, caches = [], []
        loss = 0.0
        for prev, y in zip(y_in, y_out):
            st, state, cache = self._step(enc, src, state, prev)
            loss -= math.log(st.final[y])
            steps.append(st)
            caches.append(cache)
        if not need_grads:
            return loss, None

        g = zeros_like(p)
        hs, v = self.cfg.hidden_size, len(self.vocab)
        dec = LstmCellParams.from_store(p, "dec")
        d_enc = np.zeros_like(enc)
        ds_next = np.zeros((1, hs))
        dc_next = np.zeros((1, hs))
        for t in reversed(range(len(steps))):
            st, y = steps[t], y_out[t]
            prob = st.final[y]
            copy_mass = float(st.attention[src.ext_ids == y].sum())
            voc_y = st.p_vocab[y] if y < v else 0.0
            dz = -(voc_y - copy_mass) / prob * st.p_gen * (1.0 - st.p_gen)
            g["gate.w_ctx"] += dz * st.context
            g["gate.w_s"] += dz * st.s
            g["gate.w_x"] += dz * st.x
            g["gate.b"] += dz
            d_ctx = dz * p["gate.w_ctx"]
            ds = dz * p["gate.w_s"] + ds_next
            dx = dz * p["gate.w_x"]

            dp_vocab = np.zeros(v)
            if y < v:
                dp_vocab[y] = -st.p_gen / prob
            d_logits = softmax_backward(st.p_vocab, dp_vocab)[None, :]
            sc = np.concatenate([st.s, st.context], axis=1)
            g["vocab.w"] += sc.T @ d_logits
            g["vocab.b"] += d_logits
            d_sc = d_logits @ p["vocab.w"].T
            ds = ds + d_sc[:, :hs]
            d_ctx = d_ctx + d_sc[:, hs:]

            da = -(1.0 - st.p_gen) / prob * (src.ext_ids == y)
            da = da + (enc @ d_ctx.T).ravel()
            d_enc += np.outer(st.attention, d_ctx)
            d_scores = softmax_backward(st.attention, da)
            proj = st.s @ p["attn.w"]
            d_enc += np.outer(d_scores, proj)
            d_proj = d_scores[None, :] @ enc
            g["attn.w"] += st.s.T @ d_proj
            ds = ds + d_proj @ p["attn.w"].T

            dx_dec, ds_next, dc_next = lstm_backward(dec, caches[t], ds, dc_next, g)
            in_id = y_in[t] if y_in[t] < v else UNK_ID
            g["emb"][in_id] += (dx + dx_dec)[0]

        cf_cache, cb_cache, bridge_in = enc_cache
        g["bridge_h.w"] += bridge_in.T @ ds_next
        g["bridge_h.b"] += ds_next
        g["bridge_c.w"] += bridge_in.T @ dc_next
        g["bridge_c.b"] += dc_next
        d_bridge = ds_next @ p["bridge_h.w"].T + dc_next @ p["bridge_c.w"].T
        n = len(src.in_ids)
        d_enc[n - 1, :hs] += d_bridge[0, :hs]
        d_enc[0, hs:] += d_bridge[0, hs:]

        fwd = LstmCellParams.from_store(p, "enc_fwd")
        bwd = LstmCellParams.from_store(p, "enc_bwd")
        dh = dc = np.zeros((1, hs))
        for i in reversed(range(n)):
            dx, dh, dc = lstm_backward(fwd, cf_cache[i], dh + d_enc[i : i + 1, :hs], dc, g)
            g["emb"][src.in_ids[i]] += dx[0]
        dh = dc = np.zeros((1, hs))
        for i in range(n):
            dx, dh, dc = lstm_backward(bwd, cb_cache[i], dh + d_enc[i : i + 1, hs:], dc, g)
            g["emb"][src.in_ids[i]] += dx[0]
        return loss, g

    # --- decoding -------------------------------------------------------------

    def greedy_decode(self, source, max_len: int | None = None) -> Hypothesis:
        max_len = max_len or self.cfg.max_decode_len
        src, enc, state = self.start(source)
        ids, rows, score, prev = [], [], 0.0, BOS_ID
        for _ in range(max_len):
            st, state = self.step(enc, src, state, prev)
            y = int(np.argmax(st.final))
            score += math.log(st.final[y])
            rows.append(st.attention)
            ids.append(y)
            if y == EOS_ID:
                break
            prev = y
        return self._hypothesis(src, ids, score, rows)

    def beam_decode(self, source, beams: int | None = None, n_best: int | None = None,
                    max_len: int | None = None) -> list[Hypothesis]:
        """N-best beam search over the extended vocabulary.

        Each step expands every live hypothesis by every token and keeps the
        ``beams`` best candidates; candidates ending in the end marker leave
        the beam as finished. Hypotheses still live after ``max_len`` steps
        are finished as they stand. Results are ordered by descending log
        probability, ties by ascending token ids.
        """
        beams = beams or self.cfg.beams
        n_best = n_best or self.cfg.n_best
        max_len = max_len or self.cfg.max_decode_len
        if beams < n_best:
            raise ValueError("beams must be >= n_best")
        src, enc, state = self.start(source)
        live = [((), 0.0, state, [])]
        finished = []
        for _ in range(max_len):
            cands = []
            for ids, score, st_state, rows in live:
                prev = ids[-1] if ids else BOS_ID
                st, new_state = self.step(enc, src, st_state, prev)
                logp = np.log(np.maximum(st.final, 1e-300))
                for y in range(len(logp)):
                    cands.append((score + logp[y], ids + (y,), new_state, rows, st.attention))
            cands.sort(key=lambda c: (-c[0], c[1]))
            live = []
            for score, ids, new_state, rows, att in cands[:beams]:
                item = (ids, score, new_state, rows + [att])
                if ids[-1] == EOS_ID:
                    finished.append(item)
                else:
                    live.append(item)
            if not live:
                break
        finished.extend(live)
        finished.sort(key=lambda f: (-f[1], f[0]))
        return [self._hypothesis(src, list(ids), score, rows)
                for ids, score, _, rows in finished[:n_best]]

    def _hypothesis(self, src, ids, score, rows) -> Hypothesis:
        words = [self.id_to_token(src, i) for i in ids if i != EOS_ID]
        gen = [self.id_to_token(src, i) for i in ids]
        trace = AttentionTrace(list(src.tokens), gen, np.vstack(rows) if rows
                               else np.zeros((0, len(src.tokens))))
        sent = Sentence(tuple(Token(w, tag_language(w)) for w in words))
        return Hypothesis(sent, float(score), trace, tuple(ids))

    # --- persistence ----------------------------------------------------------

    def save(self, path: str | Path) -> None:
        meta = {"kind": "pointer_gen", "config": asdict(self.cfg),
                "vocab": self.vocab.words, "input_order": INPUT_ORDER}
        save_checkpoint(path, self.params, meta)

    @classmethod
    def load(cls, path: str | Path) -> "PointerGenerator":
        params, meta = load_checkpoint(path)
        if meta.get("kind") != "pointer_gen":
            raise ValueError(f"{path}: not a pointer-generator checkpoint")
        return cls(Vocabulary(meta["vocab"]), PointerGenConfig(**meta["config"]), params)


def build_pg_vocab(examples: Sequence[tuple[ParallelPair, Sentence]], cap: int) -> Vocabulary:
    corpus = []
    for src, tgt in examples:
        corpus.append(concat_pair(src) if isinstance(src, ParallelPair) else src)
        corpus.append(tgt)
    return build_vocab(corpus, cap)


@dataclass
class TrainResult:
    train_loss: list[float] = field(default_factory=list)
    valid_loss: list[float] = field(default_factory=list)
    learning_rates: list[float] = field(default_factory=list)


def _mean_token_loss(model: PointerGenerator, examples) -> float:
    total = tokens = 0.0
    for src, tgt in examples:
        total += model.loss(src, tgt)
        tokens += len(tgt) + 1
    return total / tokens


def train(model: PointerGenerator, examples: Sequence[tuple], cfg: PointerGenConfig | None = None,
          valid: Sequence[tuple] | None = None, epochs: int | None = None,
          on_epoch: Callable[[int, TrainResult], bool] | None = None) -> TrainResult:
    """Teacher-forced NLL minimised with per-example clipped SGD.

    ``examples`` holds (source, target) pairs; sources are ParallelPairs or
    already concatenated Sentences. The learning rate is multiplied by the
    decay factor whenever the epoch's validation loss (training loss when no
    validation set is given) fails to improve on the best by at least
    ``min_improvement``. ``on_epoch(epoch, result)`` runs after every epoch;
    returning True stops training.
    """
    cfg = cfg or model.cfg
    epochs = cfg.epochs if epochs is None else epochs
    encoded = []
    for src, tgt in examples:
        enc = model.encode_source(src)
        model.target_ids(enc, tgt)  # fail early on uncopyable targets
        encoded.append((enc, tgt))
    rng = np.random.default_rng(cfg.trainer.rng_seed)
    lr = cfg.trainer.learning_rate
    best = math.inf
    result = TrainResult()
    for epoch in range(epochs):
        total = tokens = 0.0
        for k in rng.permutation(len(encoded)):
            src, tgt = encoded[k]
            loss, grads = model.loss_and_grads(src, tgt)
            total += loss
            tokens += len(tgt) + 1
            sgd_clip_step(model.params, grads, cfg.trainer, lr)
        result.train_loss.append(total / tokens)
        result.learning_rates.append(lr)
        score = result.train_loss[-1]
        if valid:
            score = _mean_token_loss(model, valid)
            result.valid_loss.append(score)
        log.info("epoch %d lr %.4g train %.4f valid %s", epoch + 1, lr,
                 result.train_loss[-1], result.valid_loss[-1] if valid else "-")
        if score < best - cfg.min_improvement:
            best = score
        else:
            lr *= cfg.trainer.decay
        if on_epoch is not None and on_epoch(epoch + 1, result):
            break
    return result


def token_accuracy(predicted: Sequence[str], reference: Sequence[str]) -> tuple[int, int]:
    """(matching positions, max length); length mismatches count as errors."""
    hits = sum(a == b for a, b in zip(predicted, reference))
    return hits, max(len(predicted), len(reference))
