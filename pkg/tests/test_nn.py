import math

import numpy as np
import pytest

from conftest import gradcheck
from nclearn.errors import ContextError, DimensionError, NumericError
from nclearn.nn import (
    SGD,
    Adam,
    AttentionConfig,
    MlpConfig,
    bilinear_forward,
    freeze,
    huber,
    huber_value,
    init_mha,
    init_mlp,
    mha_forward,
    mlp_forward,
)
from nclearn.tensor import Tensor

N_INSTANCES = 20


# ----------------------------------------------------------------------- MLP
def test_mlp_zero_params_give_zero(rng):
    cfg = MlpConfig(3, (4,), 2)
    params = {k: Tensor(np.zeros_like(v.data)) for k, v in init_mlp(cfg, rng).items()}
    assert not mlp_forward(cfg, params, rng.normal(size=(5, 3))).data.any()


def test_mlp_single_identity_layer_relu():
    # one hidden layer with identity weights, then identity readout
    cfg = MlpConfig(2, (2,), 2, "relu")
    params = {"0.W": Tensor(np.eye(2)), "0.b": Tensor(np.zeros(2)),
              "1.W": Tensor(np.eye(2)), "1.b": Tensor(np.zeros(2))}
    np.testing.assert_array_equal(mlp_forward(cfg, params, [[-1.0, 2.0]]).data, [[0.0, 2.0]])


def _mlp_loop(cfg, params, x):
    act = {"relu": lambda v: max(v, 0.0), "tanh": math.tanh,
           "sigmoid": lambda v: 1 / (1 + math.exp(-v))}[cfg.activation]
    h = [list(row) for row in x]
    layers = len(cfg.dims) - 1
    for i in range(layers):
        W, b = params[f"{i}.W"].data, params[f"{i}.b"].data
        nxt = []
        for row in h:
            out = []
            for j in range(W.shape[1]):
                s = b[j] + sum(row[k] * W[k, j] for k in range(W.shape[0]))
                out.append(act(s) if i < layers - 1 else s)
            nxt.append(out)
        h = nxt
    return np.array(h)


@pytest.mark.parametrize("activation", ["relu", "tanh", "sigmoid"])
def test_mlp_matches_loop_oracle(rng, activation):
    cfg = MlpConfig(3, (5, 4), 2, activation)
    params = init_mlp(cfg, rng, init="fan_in")
    x = rng.normal(size=(6, 3))
    np.testing.assert_allclose(mlp_forward(cfg, params, x).data, _mlp_loop(cfg, params, x),
                               atol=1e-12, rtol=0)


def test_mlp_width_mismatch(rng):
    cfg = MlpConfig(3, (4,), 1)
    with pytest.raises(DimensionError):
        mlp_forward(cfg, init_mlp(cfg, rng), np.ones((2, 4)))


def test_mlp_config_validation():
    with pytest.raises(ValueError):
        MlpConfig(0, (4,), 1)
    with pytest.raises(ValueError):
        MlpConfig(2, (4,), 1, "gelu")


def test_batched_init_shapes(rng):
    params = init_mlp(MlpConfig(1, (40, 40), 1), rng, batch=(7,), init="fan_in")
    assert params["0.W"].shape == (7, 1, 40)
    assert params["0.b"].shape == (7, 1, 40)
    assert np.all(np.abs(params["1.W"].data) <= 1 / math.sqrt(40))


def test_mlp_gradcheck(rng):
    cfg = MlpConfig(3, (4,), 2, "tanh")
    names = sorted(init_mlp(cfg, rng))
    for _ in range(N_INSTANCES):
        p = init_mlp(cfg, rng)
        x = rng.normal(size=(5, 3))

        def build(x, *vals):
            return mlp_forward(cfg, dict(zip(names, vals)), x)

        assert gradcheck(build, [x] + [p[n].data for n in names]) < 1e-4


# ----------------------------------------------------------------- attention
def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _mha_oracle(cfg, p, Q, K, V):
    g = {k: v.data for k, v in p.items()}
    q, k, v = Q @ g["Wq"] + g["bq"], K @ g["Wk"] + g["bk"], V @ g["Wv"] + g["bv"]
    dh = cfg.model_dim // cfg.num_heads
    heads = []
    for h in range(cfg.num_heads):
        s = slice(h * dh, (h + 1) * dh)
        w = _softmax(q[:, s] @ k[:, s].T / math.sqrt(dh))
        heads.append(w @ v[:, s])
    return np.concatenate(heads, axis=1) @ g["Wo"] + g["bo"]


def test_mha_matches_direct_formula(rng):
    cfg = AttentionConfig(8, 2, value_dim=9)
    p = init_mha(cfg, rng)
    Q, K, V = rng.normal(size=(3, 8)), rng.normal(size=(5, 8)), rng.normal(size=(5, 9))
    np.testing.assert_allclose(mha_forward(cfg, p, Q, K, V).data, _mha_oracle(cfg, p, Q, K, V),
                               atol=1e-12)


def test_mha_single_key_ignores_queries(rng):
    cfg = AttentionConfig(8, 4)
    p = init_mha(cfg, rng)
    K, V = rng.normal(size=(1, 8)), rng.normal(size=(1, 8))
    a = mha_forward(cfg, p, rng.normal(size=(3, 8)), K, V).data
    b = mha_forward(cfg, p, rng.normal(size=(3, 8)) * 10, K, V).data
    expected = (V @ p["Wv"].data + p["bv"].data) @ p["Wo"].data + p["bo"].data
    np.testing.assert_allclose(a, np.repeat(expected, 3, axis=0), atol=1e-12)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_mha_key_permutation_invariance(rng):
    cfg = AttentionConfig(8, 2)
    p = init_mha(cfg, rng)
    Q, K, V = rng.normal(size=(4, 8)), rng.normal(size=(6, 8)), rng.normal(size=(6, 8))
    perm = rng.permutation(6)
    a = mha_forward(cfg, p, Q, K, V).data
    b = mha_forward(cfg, p, Q, K[perm], V[perm]).data
    assert np.max(np.abs(a - b)) < 1e-10


def test_mha_aligned_query_selects_key():
    # identity projections, one head: a large query aligned with key 1
    d = 2
    cfg = AttentionConfig(d, 1)
    eye = Tensor(np.eye(d))
    zero = Tensor(np.zeros(d))
    p = {"Wq": eye, "Wk": eye, "Wv": eye, "Wo": eye, "bq": zero, "bk": zero, "bv": zero, "bo": zero}
    K = np.array([[1.0, 0.0], [0.0, 1.0]])
    V = np.array([[3.0, -1.0], [7.0, 5.0]])
    Q = np.array([[60.0, 0.0]])
    out = mha_forward(cfg, p, Q, K, V).data
    w = _softmax(Q @ K.T / math.sqrt(d))
    np.testing.assert_allclose(out, w @ V, atol=1e-8)
    np.testing.assert_allclose(out, V[:1], atol=1e-8)


def test_mha_empty_context_and_width_errors(rng):
    cfg = AttentionConfig(4, 2)
    p = init_mha(cfg, rng)
    with pytest.raises(ContextError):
        mha_forward(cfg, p, np.ones((2, 4)), np.ones((0, 4)), np.ones((0, 4)))
    with pytest.raises(DimensionError):
        mha_forward(cfg, p, np.ones((2, 3)), np.ones((2, 4)), np.ones((2, 4)))
    with pytest.raises(ValueError):
        AttentionConfig(6, 4)


def test_mha_gradcheck(rng):
    cfg = AttentionConfig(4, 2, value_dim=5)
    # the key bias shifts every score of a query equally, so softmax makes its
    # exact gradient zero; finite differences there only measure roundoff
    names = sorted(n for n in init_mha(cfg, rng) if n != "bk")
    for _ in range(N_INSTANCES):
        p = init_mha(cfg, rng)
        for n in p:
            p[n].data += rng.normal(size=p[n].shape) * 0.1
        Q, K, V = rng.normal(size=(3, 4)), rng.normal(size=(4, 4)), rng.normal(size=(4, 5))

        def build(Q, K, V, *vals):
            return mha_forward(cfg, {**p, **dict(zip(names, vals))}, Q, K, V)

        assert gradcheck(build, [Q, K, V] + [p[n].data for n in names]) < 1e-4
        bk = Tensor(p["bk"].data.copy(), requires_grad=True)
        mha_forward(cfg, {**p, "bk": bk}, Q, K, V).square().sum().backward()
        assert np.max(np.abs(bk.grad)) < 1e-12


# ------------------------------------------------------------------ bilinear
def _bilinear_loop(W, e, lab):
    d_out, d_in, K = W.shape
    out = np.zeros((e.shape[0], d_out))
    for i in range(e.shape[0]):
        for a in range(d_out):
            out[i, a] = sum(W[a, b, k] * e[i, b] * lab[i, k] for b in range(d_in) for k in range(K))
    return out


def test_bilinear_zero_labels_and_identity_slice(rng):
    e = rng.normal(size=(4, 3))
    W = rng.normal(size=(3, 3, 4))
    assert not bilinear_forward(W, e, np.zeros((4, 4))).data.any()
    W = np.zeros((3, 3, 4))
    W[:, :, 2] = np.eye(3)
    lab = np.zeros((4, 4))
    lab[:, 2] = 1.0
    np.testing.assert_array_equal(bilinear_forward(W, e, lab).data, e)


def test_bilinear_matches_triple_loop(rng):
    W, e, lab = rng.normal(size=(3, 4, 5)), rng.normal(size=(6, 4)), rng.normal(size=(6, 5))
    np.testing.assert_allclose(bilinear_forward(W, e, lab).data, _bilinear_loop(W, e, lab),
                               atol=1e-12, rtol=0)


def test_bilinear_is_separately_linear(rng):
    W, e, lab = rng.normal(size=(3, 4, 5)), rng.normal(size=(6, 4)), rng.normal(size=(6, 5))
    base = bilinear_forward(W, e, lab).data
    for alpha in (-2.0, 0.5, 3.25):
        np.testing.assert_allclose(bilinear_forward(W, alpha * e, lab).data, alpha * base, atol=1e-10)
        np.testing.assert_allclose(bilinear_forward(W, e, alpha * lab).data, alpha * base, atol=1e-10)


def test_bilinear_width_mismatch(rng):
    with pytest.raises(DimensionError):
        bilinear_forward(rng.normal(size=(3, 4, 5)), np.ones((2, 3)), np.ones((2, 5)))


def test_bilinear_gradcheck(rng):
    for _ in range(N_INSTANCES):
        args = [rng.normal(size=(3, 4, 3)), rng.normal(size=(2, 5, 4)), rng.normal(size=(2, 5, 3))]
        assert gradcheck(bilinear_forward, args) < 1e-4


# --------------------------------------------------------------------- huber
@pytest.mark.parametrize("delta,expected", [(0.0, 0.0), (1.0, 0.5), (-3.0, 2.5), (0.5, 0.125),
                                            (-0.5, 0.125), (-1.0, 0.5), (3.0, 2.5)])
def test_huber_values(delta, expected):
    assert huber_value(delta) == expected
    assert huber(Tensor(delta)).item() == expected


def test_huber_derivative_clamped():
    points = np.array([-5.0, -1.0, 0.0, 1.0, 5.0])
    x = Tensor(points, requires_grad=True)
    huber(x).sum().backward()
    np.testing.assert_array_equal(x.grad, np.clip(points, -1, 1))
    assert np.all(np.abs(x.grad) <= 1.0)


def test_huber_continuous_and_c1_at_boundary():
    eps = 1e-9
    for b in (-1.0, 1.0):
        assert abs(huber_value(b - eps) - huber_value(b + eps)) < 1e-8
        left = Tensor([b - eps], requires_grad=True)
        right = Tensor([b + eps], requires_grad=True)
        huber(left).sum().backward()
        huber(right).sum().backward()
        assert abs(left.grad[0] - right.grad[0]) < 1e-8


def test_huber_gradcheck(rng):
    for _ in range(N_INSTANCES):
        d = rng.normal(size=8) * 2
        d = d[np.abs(np.abs(d) - 1.0) > 1e-3]
        assert gradcheck(huber, [d]) < 1e-4


# ---------------------------------------------------------------- optimizers
def test_sgd_step_and_zero_gradient():
    p = Tensor([1.0], requires_grad=True)
    p.grad = np.array([2.0])
    SGD(0.01).step({"p": p})
    assert p.data[0] == pytest.approx(0.98, abs=1e-15)
    p.grad = np.zeros(1)
    SGD(0.01).step({"p": p})
    assert p.data[0] == pytest.approx(0.98, abs=1e-15)
    q = Tensor([0.5], requires_grad=True)
    q.grad = np.zeros(1)
    Adam(0.1).step({"q": q})
    assert q.data[0] == 0.5


def test_adam_matches_scripted_reference():
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    p = Tensor([1.0], requires_grad=True)
    opt = Adam(lr)
    ref, m, v = 1.0, 0.0, 0.0
    for t in range(1, 4):
        p.grad = None
        (p * p).sum().backward()
        opt.step({"p": p})
        g = 2 * ref
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        ref -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
        assert abs(p.data[0] - ref) < 1e-12


def test_optimizer_nan_gradient_names_parameter():
    p = Tensor([1.0], requires_grad=True)
    p.grad = np.array([np.nan])
    for opt in (SGD(0.1), Adam(0.1)):
        with pytest.raises(NumericError, match="enc.0.W"):
            opt.step({"enc.0.W": p})
    with pytest.raises(ValueError):
        SGD(0.0)


def test_freeze_shares_storage_without_gradients(rng):
    params = init_mlp(MlpConfig(2, (3,), 1), rng)
    frozen = freeze(params)
    params["0.W"].data[0, 0] = 42.0
    assert frozen["0.W"].data[0, 0] == 42.0
    assert not any(p.requires_grad for p in frozen.values())
