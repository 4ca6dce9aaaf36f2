import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from codeswitch.neural import (LstmCellParams, NumericalError, TrainerConfig, global_norm,
                               grad_check, init_lstm, load_checkpoint, lstm_backward,
                               lstm_forward, lstm_step, save_checkpoint, sgd_clip_step,
                               softmax, softmax_xent, zeros_like)


def cell(rng, i=3, h=4, scale=0.5):
    p = {}
    init_lstm(p, "c", i, h, rng)
    for k in p:
        p[k] = rng.uniform(-scale, scale, p[k].shape)
    return p, LstmCellParams.from_store(p, "c")


def reference_lstm(w_x, w_h, b, x, h, c):
    """Gate-by-gate recurrence with explicit logistic functions."""
    hs = h.shape[1]
    z = x @ w_x + h @ w_h + b
    gates = [z[:, k * hs:(k + 1) * hs] for k in range(4)]
    logistic = lambda v: 1.0 / (1.0 + np.exp(-v))
    i, f, o = (logistic(g) for g in gates[:3])
    g = np.tanh(gates[3])
    c_new = f * c + i * g
    return o * np.tanh(c_new), c_new


def test_lstm_zero_params():
    p = {}
    init_lstm(p, "c", 2, 3, np.random.default_rng(0))
    for k in p:
        p[k][...] = 0.0
    lp = LstmCellParams.from_store(p, "c")
    h, c = lstm_step(lp, np.ones((1, 2)), np.zeros((1, 3)), np.zeros((1, 3)))
    assert np.all(h == 0) and np.all(c == 0)
    c_hat = np.array([[0.4, -2.0, 1.0]])
    _, c = lstm_step(lp, np.ones((1, 2)), np.zeros((1, 3)), c_hat)
    np.testing.assert_allclose(c, 0.5 * c_hat, atol=1e-15)


def test_lstm_matches_reference():
    rng = np.random.default_rng(1)
    p, lp = cell(rng)
    x, h0, c0 = rng.normal(size=(1, 3)), rng.normal(size=(1, 4)), rng.normal(size=(1, 4))
    h, c = lstm_step(lp, x, h0, c0)
    rh, rc = reference_lstm(p["c.w_x"], p["c.w_h"], p["c.b"], x, h0, c0)
    np.testing.assert_allclose(h, rh, atol=1e-13)
    np.testing.assert_allclose(c, rc, atol=1e-13)
    assert np.all(np.abs(h) < 1)


def test_lstm_shape_mismatch():
    _, lp = cell(np.random.default_rng(0))
    with pytest.raises(ValueError, match="shape"):
        lstm_step(lp, np.zeros((1, 5)), np.zeros((1, 4)), np.zeros((1, 4)))


def test_softmax_xent_examples():
    probs, loss = softmax_xent(np.zeros(5), 2)
    assert loss == pytest.approx(math.log(5), abs=1e-15)
    _, loss = softmax_xent(np.array([1e3, 0.0]), 0)
    assert loss == pytest.approx(0.0, abs=1e-12)
    _, loss = softmax_xent(np.array([1.0, 2.0, 3.0]), 2)
    assert loss == pytest.approx(math.log(1 + math.exp(-1) + math.exp(-2)), abs=1e-15)
    with pytest.raises(IndexError):
        softmax_xent(np.zeros(3), 3)


@given(arrays(np.float64, st.integers(1, 20), elements=st.floats(-50, 50)),
       st.floats(-100, 100))
def test_softmax_normalized_and_shift_invariant(logits, shift):
    p = softmax(logits)
    assert abs(p.sum() - 1.0) <= 1e-12
    np.testing.assert_allclose(softmax(logits + shift), p, atol=1e-12)


def test_sgd_clip_examples():
    cfg = TrainerConfig(learning_rate=1.0, clip_norm=1.0)
    params = {"w": np.zeros((1, 2))}
    sgd_clip_step(params, {"w": np.array([[0.3, 0.4]])}, cfg)
    np.testing.assert_allclose(params["w"], [[-0.3, -0.4]])
    params = {"w": np.zeros((1, 2))}
    sgd_clip_step(params, {"w": np.array([[1.2, 1.6]])}, cfg)
    np.testing.assert_allclose(params["w"], [[-0.6, -0.8]])
    params = {"w": np.ones((1, 2))}
    sgd_clip_step(params, {"w": np.array([[5.0, 5.0]])}, cfg, lr=0.0)
    np.testing.assert_array_equal(params["w"], np.ones((1, 2)))
    with pytest.raises(NumericalError):
        sgd_clip_step(params, {"w": np.array([[np.nan, 0.0]])}, cfg)


@given(arrays(np.float64, (2, 3), elements=st.floats(-1e3, 1e3)), st.floats(0.01, 10))
def test_clipped_update_norm_bounded(g, clip):
    params = {"w": np.zeros((2, 3))}
    sgd_clip_step(params, {"w": g}, TrainerConfig(learning_rate=1.0, clip_norm=clip))
    assert global_norm(params) <= clip * (1 + 1e-12)


def test_trainer_config_validation():
    for bad in (dict(learning_rate=0), dict(decay=0), dict(decay=1.5), dict(clip_norm=0)):
        with pytest.raises(ValueError):
            TrainerConfig(**bad)


def test_grad_check_quadratic():
    rng = np.random.default_rng(0)
    params = {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=(1, 5))}
    loss = lambda p: sum(float((v ** 2).sum()) for v in p.values())
    grads = {k: 2 * v for k, v in params.items()}
    assert grad_check(loss, params, grads) < 1e-8


def test_grad_check_lstm_softmax_composite():
    rng = np.random.default_rng(2)
    p, _ = cell(rng, 3, 4)
    p["out"] = rng.uniform(-0.5, 0.5, (4, 5))
    x, h0, c0 = rng.normal(size=(1, 3)), rng.normal(size=(1, 4)), rng.normal(size=(1, 4))

    def loss(params):
        h, _, _ = lstm_forward(LstmCellParams.from_store(params, "c"), x, h0, c0)
        return softmax_xent((h @ params["out"]).ravel(), 3)[1]

    h, _, cache = lstm_forward(LstmCellParams.from_store(p, "c"), x, h0, c0)
    probs, _ = softmax_xent((h @ p["out"]).ravel(), 3)
    dlogits = probs.copy()
    dlogits[3] -= 1
    grads = zeros_like(p)
    grads["out"] = h.T @ dlogits[None, :]
    lstm_backward(LstmCellParams.from_store(p, "c"), cache, dlogits[None, :] @ p["out"].T,
                  np.zeros((1, 4)), grads)
    assert grad_check(loss, p, grads, epsilon=1e-5, n_coords=64) < 1e-4


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    params = {"b": rng.normal(size=(1, 3)), "a": rng.normal(size=(4, 2))}
    meta = {"kind": "x", "cfg": {"h": 4}}
    save_checkpoint(tmp_path / "m.ckpt", params, meta)
    loaded, m2 = load_checkpoint(tmp_path / "m.ckpt")
    assert m2 == meta
    for k in params:
        assert loaded[k].tobytes() == params[k].tobytes()
    save_checkpoint(tmp_path / "m2.ckpt", loaded, m2)
    assert (tmp_path / "m.ckpt").read_bytes() == (tmp_path / "m2.ckpt").read_bytes()


def test_checkpoint_rejects_corruption(tmp_path):
    save_checkpoint(tmp_path / "m.ckpt", {"a": np.zeros((1, 1))}, {})
    data = (tmp_path / "m.ckpt").read_bytes()
    (tmp_path / "bad.ckpt").write_bytes(b"XXXXXXXX" + data[8:])
    with pytest.raises(ValueError, match="magic"):
        load_checkpoint(tmp_path / "bad.ckpt")
    (tmp_path / "long.ckpt").write_bytes(data + b"\x00")
    with pytest.raises(ValueError, match="trailing"):
        load_checkpoint(tmp_path / "long.ckpt")
    with pytest.raises(ValueError):
        save_checkpoint(tmp_path / "v.ckpt", {"v": np.zeros(3)}, {})
