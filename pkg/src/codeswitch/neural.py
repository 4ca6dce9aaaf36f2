"""Numerical building blocks shared by the pointer-generator and the LM.

Everything is float64 numpy with hand-written reverse-mode gradients.
Parameters live in flat ``dict[str, ndarray]`` stores and every tensor is
2-D (biases are ``(1, n)`` rows), which keeps the checkpoint format simple.
Batched code uses row vectors: ``x`` is ``(batch, features)``.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

Params = dict[str, np.ndarray]

CHECKPOINT_MAGIC = b"CSWCKPT\x00"
CHECKPOINT_VERSION = 1
INIT_SCALE = 0.1


class NumericalError(ArithmeticError):
    """Raised when training produces non-finite values."""


@dataclass
class TrainerConfig:
    learning_rate: float = 1.0
    decay: float = 0.5
    clip_norm: float = 5.0
    rng_seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must be in (0, 1]")
        if not self.clip_norm > 0:
            raise ValueError("clip_norm must be > 0")


def uniform_init(rng: np.random.Generator, rows: int, cols: int,
                 scale: float = INIT_SCALE) -> np.ndarray:
    return rng.uniform(-scale, scale, size=(rows, cols))


def sigmoid(x):
    # tanh form avoids overflow in exp for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def softmax_xent(logits: np.ndarray, target: int) -> tuple[np.ndarray, float]:
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= target < logits.shape[-1]:
        raise IndexError(f"target {target} out of range for {logits.shape[-1]} classes")
    logp = log_softmax(logits)
    return np.exp(logp), float(-logp[..., target].sum())


def softmax_backward(probs: np.ndarray, dprobs: np.ndarray) -> np.ndarray:
    return probs * (dprobs - (dprobs * probs).sum(axis=-1, keepdims=True))


# --- LSTM --------------------------------------------------------------------


@dataclass
class LstmCellParams:
    """Gate weights stacked as [input, forget, output, candidate] along columns.

    ``w_x`` is ``(input_size, 4H)``, ``w_h`` is ``(H, 4H)``, ``b`` is ``(1, 4H)``.
    ``name`` is the parameter-store prefix used to route gradients.
    """

    w_x: np.ndarray
    w_h: np.ndarray
    b: np.ndarray
    name: str = ""

    @property
    def hidden_size(self) -> int:
        return self.w_h.shape[0]

    @property
    def input_size(self) -> int:
        return self.w_x.shape[0]

    def __post_init__(self):
        h4 = 4 * self.hidden_size
        if self.w_h.shape != (self.hidden_size, h4) or self.w_x.shape[1] != h4 \
                or self.b.shape != (1, h4):
            raise ValueError(f"inconsistent LSTM parameter shapes for {self.name!r}")

    @classmethod
    def from_store(cls, params: Params, name: str) -> "LstmCellParams":
        return cls(params[f"{name}.w_x"], params[f"{name}.w_h"], params[f"{name}.b"], name)


def init_lstm(params: Params, name: str, input_size: int, hidden_size: int,
              rng: np.random.Generator) -> LstmCellParams:
    params[f"{name}.w_x"] = uniform_init(rng, input_size, 4 * hidden_size)
    params[f"{name}.w_h"] = uniform_init(rng, hidden_size, 4 * hidden_size)
    params[f"{name}.b"] = uniform_init(rng, 1, 4 * hidden_size)
    return LstmCellParams.from_store(params, name)


def lstm_forward(p: LstmCellParams, x, h_prev, c_prev):
    """One step; returns ``(h, c, cache)`` where cache feeds :func:`lstm_backward`."""
    x, h_prev, c_prev = np.atleast_2d(x, h_prev, c_prev)
    if x.shape[1] != p.input_size or h_prev.shape[1] != p.hidden_size \
            or c_prev.shape[1] != p.hidden_size:
        raise ValueError(f"shape mismatch in LSTM {p.name!r}: x{x.shape} h{h_prev.shape} "
                         f"c{c_prev.shape} for input {p.input_size}, hidden {p.hidden_size}")
    hs = p.hidden_size
    z = x @ p.w_x + h_prev @ p.w_h + p.b
    i = sigmoid(z[:, :hs])
    f = sigmoid(z[:, hs : 2 * hs])
    o = sigmoid(z[:, 2 * hs : 3 * hs])
    g = np.tanh(z[:, 3 * hs :])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (x, h_prev, c_prev, i, f, o, g, tc)


def lstm_step(p: LstmCellParams, x, h_prev, c_prev) -> tuple[np.ndarray, np.ndarray]:
    h, c, _ = lstm_forward(p, x, h_prev, c_prev)
    return h, c


def lstm_backward(p: LstmCellParams, cache, dh, dc, grads: Params):
    """Accumulate parameter gradients into ``grads``; return (dx, dh_prev, dc_prev)."""
    x, h_prev, c_prev, i, f, o, g, tc = cache
    dc = dc + dh * o * (1.0 - tc * tc)
    dz = np.concatenate([
        dc * g * i * (1.0 - i),
        dc * c_prev * f * (1.0 - f),
        dh * tc * o * (1.0 - o),
        dc * i * (1.0 - g * g),
    ], axis=1)
    grads[f"{p.name}.w_x"] += x.T @ dz
    grads[f"{p.name}.w_h"] += h_prev.T @ dz
    grads[f"{p.name}.b"] += dz.sum(axis=0, keepdims=True)
    return dz @ p.w_x.T, dz @ p.w_h.T, dc * f


# --- optimisation --------------------------------------------------------------


def zeros_like(params: Mapping[str, np.ndarray]) -> Params:
    return {k: np.zeros_like(v) for k, v in params.items()}


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return math.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))


def sgd_clip_step(params: Params, grads: Mapping[str, np.ndarray], cfg: TrainerConfig,
                  lr: float | None = None) -> Params:
    """Global-norm clipping followed by a plain SGD update, in place.

    ``lr`` overrides ``cfg.learning_rate`` (trainers pass their decayed rate).
    """
    norm = global_norm(grads)
    if not math.isfinite(norm):
        raise NumericalError("non-finite gradient norm")
    scale = cfg.clip_norm / norm if norm > cfg.clip_norm else 1.0
    step = (cfg.learning_rate if lr is None else lr) * scale
    for k, g in grads.items():
        params[k] -= step * g
    return params


def grad_check(loss_fn: Callable[[Params], float], params: Params,
               grads: Mapping[str, np.ndarray], epsilon: float = 1e-5,
               n_coords: int = 64, rng: np.random.Generator | None = None,
               floor: float = 1e-6) -> float:
    """Max relative error between ``grads`` and central finite differences.

    At least one coordinate is checked in every tensor and ``n_coords`` in
    total (all of them for small stores). The relative error of a coordinate
    is ``|a - n| / max(|a|, |n|, floor)``; the floor keeps exactly-zero
    gradients from producing spurious failures through round-off.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    names = sorted(params)
    sizes = np.array([params[k].size for k in names])
    total = int(sizes.sum())
    picks: list[tuple[str, int]] = []
    if total <= n_coords:
        picks = [(k, i) for k in names for i in range(params[k].size)]
    else:
        picks = [(k, int(rng.integers(params[k].size))) for k in names]
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        extra = rng.choice(total, size=max(n_coords - len(picks), 0), replace=False)
        for flat in extra:
            t = int(np.searchsorted(offsets, flat, side="right") - 1)
            picks.append((names[t], int(flat - offsets[t])))
    worst = 0.0
    for name, idx in picks:
        arr = params[name].reshape(-1)
        orig = arr[idx]
        arr[idx] = orig + epsilon
        up = loss_fn(params)
        arr[idx] = orig - epsilon
        down = loss_fn(params)
        arr[idx] = orig
        numeric = (up - down) / (2 * epsilon)
        analytic = float(grads[name].reshape(-1)[idx])
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
        worst = max(worst, rel)
    return worst


def dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray | None:
    if rate <= 0:
        return None
    return (rng.random(shape) >= rate) / (1.0 - rate)


# --- checkpoints -----------------------------------------------------------------


def save_checkpoint(path: str | Path, params: Mapping[str, np.ndarray], meta: dict) -> None:
    """Binary layout (all integers little-endian uint32):

    magic(8) | version | header length | header JSON | tensor count |
    per tensor: name length | name | rows | cols | rows*cols float64 LE.
    Tensors are written in sorted name order.
    """
    header = json.dumps(meta, sort_keys=True).encode("utf-8")
    chunks = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(header)), header,
              struct.pack("<I", len(params))]
    for name in sorted(params):
        arr = np.asarray(params[name])
        if arr.ndim != 2:
            raise ValueError(f"tensor {name!r} must be 2-D, got shape {arr.shape}")
        bname = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(bname)) + bname + struct.pack("<II", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path: str | Path) -> tuple[Params, dict]:
    data = Path(path).read_bytes()
    if data[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    version, hlen = struct.unpack_from("<II", data, 8)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos = 16
    meta = json.loads(data[pos : pos + hlen].decode("utf-8"))
    pos += hlen
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    params: Params = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", data, pos)
        pos += 4
        name = data[pos : pos + nlen].decode("utf-8")
        pos += nlen
        rows, cols = struct.unpack_from("<II", data, pos)
        pos += 8
        nbytes = rows * cols * 8
        params[name] = np.frombuffer(data, dtype="<f8", count=rows * cols,
                                     offset=pos).astype(np.float64).reshape(rows, cols)
        pos += nbytes
    if pos != len(data):
        raise ValueError(f"{path}: trailing bytes after last tensor")
    return params, meta
