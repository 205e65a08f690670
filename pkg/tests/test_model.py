import math

import numpy as np
import pytest

from conftest import gradcheck
from nclearn.errors import ContextError, DimensionError, FormatError, LabelFormatError
from nclearn.model import (
    HypothesisEval,
    NcClassificationConfig,
    NcRegressionConfig,
    NeuralComplexity,
    config_from_dict,
    config_to_dict,
    nc_predict_clipped,
    nc_training_step,
)
from nclearn.nn import Adam
from nclearn.tasks import one_hot
from nclearn.tensor import Tensor


def regression_eval(rng, m=6, mt=5, D=1):
    return HypothesisEval(rng.normal(size=(m, D)), rng.normal(size=(mt, D)), rng.normal(size=(m, 1)),
                          rng.normal(size=(m, 1)), rng.normal(size=(mt, 1)))


def classification_eval(rng, m=6, mt=5, D=2, c=3):
    labels = np.arange(m) % c
    probs_tr = rng.dirichlet(np.ones(c), size=m)
    probs_te = rng.dirichlet(np.ones(c), size=mt)
    return HypothesisEval(rng.normal(size=(m, D)), rng.normal(size=(mt, D)), one_hot(labels, c),
                          probs_tr, probs_te)


def small_reg(**kw):
    return NcRegressionConfig(model_dim=8, heads=2, **kw)


def small_cls(**kw):
    return NcClassificationConfig(input_dim=2, num_classes=3, model_dim=8, heads=2, **kw)


# ------------------------------------------------------------ invariances
@pytest.mark.parametrize("cfg", [small_reg(), small_reg(value_layers=1, self_attention_layers=1)])
def test_regression_permutation_invariance(rng, cfg):
    nc = NeuralComplexity(cfg, seed=1)
    ev = regression_eval(rng)
    base = nc.predict(ev)
    for _ in range(50):
        p, q = rng.permutation(6), rng.permutation(5)
        ev2 = HypothesisEval(ev.x_tr[p], ev.x_te[q], ev.y_tr[p], ev.pred_tr[p], ev.pred_te[q])
        assert abs(nc.predict(ev2) - base) < 1e-10


def test_classification_permutation_invariance(rng):
    nc = NeuralComplexity(small_cls(), seed=1)
    ev = classification_eval(rng)
    base = nc.predict(ev)
    for _ in range(50):
        p, q = rng.permutation(6), rng.permutation(5)
        ev2 = HypothesisEval(ev.x_tr[p], ev.x_te[q], ev.y_tr[p], ev.pred_tr[p], ev.pred_te[q])
        assert abs(nc.predict(ev2) - base) < 1e-10


def test_zero_params_give_zero(rng):
    nc = NeuralComplexity(small_reg(), seed=0)
    for p in nc.params.values():
        p.data[...] = 0.0
    assert nc.predict(regression_eval(rng)) == 0.0


def test_deterministic_repeated_evaluation(rng):
    nc = NeuralComplexity(small_cls(), seed=3)
    ev = classification_eval(rng)
    assert nc.predict(ev) == nc.predict(ev)


def test_batched_matches_single(rng):
    nc = NeuralComplexity(small_reg(), seed=2)
    evs = [regression_eval(rng) for _ in range(4)]
    batched = nc.predict(HypothesisEval.stack(evs))
    single = [float(nc.predict(e)) for e in evs]
    np.testing.assert_allclose(batched, single, atol=1e-12)


def test_class_relabel_invariance(rng):
    # permuting classes in labels/predictions and the label slices of W together
    cfg = small_cls()
    nc = NeuralComplexity(cfg, seed=4)
    ev = classification_eval(rng)
    perm = np.array([2, 0, 1])
    p2 = {k: Tensor(v.data.copy()) for k, v in nc.params.items()}
    W = p2["bilinear.W"].data
    W[:, :, :3] = W[:, :, :3][:, :, perm]
    # encoder rows for the prediction columns follow the same permutation
    enc = p2["enc.0.W"].data
    D = cfg.input_dim
    enc[D:] = enc[D:][perm]
    nc2 = NeuralComplexity(cfg, params=p2)
    ev2 = HypothesisEval(ev.x_tr, ev.x_te, ev.y_tr[:, perm], ev.pred_tr[:, perm], ev.pred_te[:, perm])
    assert abs(nc.predict(ev) - nc2.predict(ev2)) < 1e-10


def test_two_class_swap_under_symmetric_weights(rng):
    cfg = NcClassificationConfig(input_dim=2, num_classes=2, model_dim=8, heads=2)
    nc = NeuralComplexity(cfg, seed=5)
    W = nc.params["bilinear.W"].data
    W[:, :, 1] = W[:, :, 0]
    enc = nc.params["enc.0.W"].data
    enc[3] = enc[2]
    labels = np.array([0, 1, 0, 1])
    pr = rng.dirichlet([1, 1], size=4)
    pt = rng.dirichlet([1, 1], size=3)
    x_tr, x_te = rng.normal(size=(4, 2)), rng.normal(size=(3, 2))
    a = nc.predict(HypothesisEval(x_tr, x_te, one_hot(labels, 2), pr, pt))
    b = nc.predict(HypothesisEval(x_tr, x_te, one_hot(1 - labels, 2), pr[:, ::-1], pt[:, ::-1]))
    assert abs(a - b) < 1e-10


# -------------------------------------------------------- straight-line oracles
def _relu(v):
    return np.maximum(v, 0)


def _mlp(p, prefix, x, n):
    for i in range(n):
        x = x @ p[f"{prefix}{i}.W"] + p[f"{prefix}{i}.b"]
        if i < n - 1:
            x = _relu(x)
    return x


def test_regression_micro_instance_straight_line(rng):
    cfg = NcRegressionConfig(model_dim=4, heads=2, query_residual=True)
    nc = NeuralComplexity(cfg, seed=6)
    p = {k: v.data for k, v in nc.params.items()}
    x_tr, x_te, y = np.array([[0.3]]), np.array([[-1.2]]), np.array([[0.7]])
    h_tr, h_te = np.array([[0.1]]), np.array([[0.4]])
    e_tr = _mlp(p, "enc.", np.hstack([x_tr, h_tr]), 2)
    e_te = _mlp(p, "enc.", np.hstack([x_te, h_te]), 2)
    v = np.hstack([e_tr, y]) @ p["att.Wv"] + p["att.bv"]
    att = v @ p["att.Wo"] + p["att.bo"]  # single key: weight exactly 1
    expected = float(_mlp(p, "dec.", e_te + att, 2)[0, 0])
    got = float(nc.predict(HypothesisEval(x_tr, x_te, y, h_tr, h_te)))
    assert abs(got - expected) < 1e-10


def test_classification_micro_instance_straight_line(rng):
    cfg = NcClassificationConfig(input_dim=2, num_classes=2, model_dim=4, heads=2,
                                 self_attention_layers=1)
    nc = NeuralComplexity(cfg, seed=7)
    p = {k: v.data for k, v in nc.params.items()}
    x_tr, x_te = rng.normal(size=(2, 2)), rng.normal(size=(1, 2))
    y = one_hot([0, 1], 2)
    pr, pt = np.array([[0.8, 0.2], [0.3, 0.7]]), np.array([[0.6, 0.4]])
    loss = -np.log((pr * y).sum(1, keepdims=True) + 1e-12)

    def mha(prefix, Q, K, V):
        q = Q @ p[prefix + "Wq"] + p[prefix + "bq"]
        k = K @ p[prefix + "Wk"] + p[prefix + "bk"]
        v = V @ p[prefix + "Wv"] + p[prefix + "bv"]
        heads = []
        for h in range(2):
            s = slice(2 * h, 2 * h + 2)
            z = q[:, s] @ k[:, s].T / math.sqrt(2)
            w = np.exp(z - z.max(1, keepdims=True))
            heads.append((w / w.sum(1, keepdims=True)) @ v[:, s])
        return np.hstack(heads) @ p[prefix + "Wo"] + p[prefix + "bo"]

    e_tr = _mlp(p, "enc.", np.hstack([x_tr, pr]), 2)
    e_te = _mlp(p, "enc.", np.hstack([x_te, pt]), 2)
    e_tr = e_tr + mha("self0.", e_tr, e_tr, e_tr)
    aug = np.hstack([y, np.ones((2, 1)), loss])
    W = p["bilinear.W"]
    V = np.einsum("abk,ib,ik->ia", W, e_tr, aug)
    a = e_te + mha("att.", e_te, e_tr, V)
    expected = float(_mlp(p, "dec.", a, 2).mean())
    got = float(nc.predict(HypothesisEval(x_tr, x_te, y, pr, pt)))
    assert abs(got - expected) < 1e-10


# -------------------------------------------------------------- gradients
def _param_gradcheck(nc, ev, rng):
    names = sorted(nc.params)

    def build(*vals):
        model = NeuralComplexity(nc.config, params={k: v for k, v in zip(names, vals)})
        return model.forward(ev)

    # perturb biases away from zero so every parameter has signal
    vals = [nc.params[n].data + 0.05 * rng.normal(size=nc.params[n].shape) for n in names]
    # key biases have an exactly-zero gradient (softmax shift invariance)
    keep = [i for i, n in enumerate(names) if not n.endswith("bk")]

    def build_subset(*sub):
        full = list(vals)
        for i, v in zip(keep, sub):
            full[i] = v
        return build(*full)

    return gradcheck(build_subset, [vals[i] for i in keep])


def test_regression_parameter_gradients(rng):
    nc = NeuralComplexity(NcRegressionConfig(model_dim=4, heads=2, value_layers=1,
                                             self_attention_layers=1), seed=8)
    assert _param_gradcheck(nc, regression_eval(rng, 3, 2), rng) < 1e-4


def test_classification_parameter_gradients(rng):
    cfg = NcClassificationConfig(input_dim=2, num_classes=2, model_dim=4, heads=2)
    nc = NeuralComplexity(cfg, seed=9)
    assert _param_gradcheck(nc, classification_eval(rng, 4, 2, 2, 2), rng) < 1e-4


def test_gradient_reaches_predictions(rng):
    nc = NeuralComplexity(small_reg(), seed=10)
    ev = regression_eval(rng)
    pt = Tensor(ev.pred_te, requires_grad=True)
    pr = Tensor(ev.pred_tr, requires_grad=True)
    nc.forward(HypothesisEval(ev.x_tr, ev.x_te, ev.y_tr, pr, pt), frozen=True).backward()
    assert np.abs(pt.grad).sum() > 0 and np.abs(pr.grad).sum() > 0
    assert all(p.grad is None for p in nc.params.values())


# ----------------------------------------------------------------- errors
def test_empty_sets_raise(rng):
    nc = NeuralComplexity(small_reg(), seed=0)
    with pytest.raises(ContextError):
        nc.predict(HypothesisEval(np.zeros((0, 1)), np.zeros((2, 1)), np.zeros((0, 1)),
                                  np.zeros((0, 1)), np.zeros((2, 1))))


def test_shape_errors(rng):
    nc = NeuralComplexity(small_reg(), seed=0)
    ev = regression_eval(rng)
    with pytest.raises(DimensionError):
        nc.predict(HypothesisEval(ev.x_tr, ev.x_te, ev.y_tr, ev.pred_tr[:3], ev.pred_te))


def test_non_one_hot_labels_raise(rng):
    nc = NeuralComplexity(small_cls(), seed=0)
    ev = classification_eval(rng)
    bad = ev.y_tr.copy()
    bad[0] = [0.5, 0.5, 0.0]
    with pytest.raises(LabelFormatError):
        nc.predict(HypothesisEval(ev.x_tr, ev.x_te, bad, ev.pred_tr, ev.pred_te))


def test_config_validation():
    with pytest.raises(ValueError):
        NcRegressionConfig(model_dim=0)
    with pytest.raises(ValueError):
        NcClassificationConfig(num_classes=1)
    with pytest.raises(ValueError):
        NcRegressionConfig(self_attention_layers=1)
    for cfg in (small_reg(value_layers=2), small_cls()):
        assert config_from_dict(config_to_dict(cfg)) == cfg


# --------------------------------------------------------------- training
def test_training_step_zero_loss_when_gap_matches(rng):
    nc = NeuralComplexity(small_reg(), seed=11)
    evs = [regression_eval(rng) for _ in range(3)]
    ev = HypothesisEval.stack(evs)
    gaps = nc.predict(ev)
    before = {k: v.data.copy() for k, v in nc.params.items()}
    loss = nc_training_step(nc, ev, gaps, Adam(1e-3))
    assert loss == 0.0
    for k, v in nc.params.items():
        assert not np.abs(v.grad).any()
        np.testing.assert_array_equal(v.data, before[k])


def test_training_step_huber_linear_branch(rng):
    nc = NeuralComplexity(small_reg(), seed=12)
    ev = HypothesisEval.stack([regression_eval(rng) for _ in range(2)])
    est = nc.predict(ev)
    loss = nc_training_step(nc, ev, est + np.array([2.0, -2.0]), Adam(1e-3))
    assert loss == pytest.approx(1.5, abs=1e-12)


def test_training_overfits_fixed_batch(rng):
    nc = NeuralComplexity(small_reg(), seed=13)
    ev = HypothesisEval.stack([regression_eval(rng) for _ in range(32)])
    gaps = rng.normal(size=32)
    opt = Adam(3e-3)
    losses = [nc_training_step(nc, ev, gaps, opt) for _ in range(200)]
    first, last = np.mean(losses[:20]), np.mean(losses[-20:])
    assert last < 0.5 * first
    smooth = np.convolve(losses, np.ones(20) / 20, mode="valid")
    assert np.mean(np.diff(smooth) <= 1e-9) > 0.8


def test_predict_clipped():
    class Stub:
        def __init__(self, v):
            self.v = v

        def predict(self, ev):
            return np.array(self.v)

    assert nc_predict_clipped(Stub(-0.5), None, -0.1) == -0.1
    assert nc_predict_clipped(Stub(0.3), None, -0.1) == 0.3
    assert nc_predict_clipped(Stub(-1e300), None, -np.inf) == -1e300


# ------------------------------------------------------------ checkpoints
def test_checkpoint_round_trip_bit_exact(tmp_path, rng):
    for cfg in (small_reg(value_layers=1), small_cls()):
        nc = NeuralComplexity(cfg, seed=14)
        path = tmp_path / f"{cfg.kind}.ckpt"
        nc.save(path, extra={"episodes": 3})
        back = NeuralComplexity.load(path)
        assert back.config == cfg and back.extra == {"episodes": 3}
        for k, v in nc.params.items():
            assert back.params[k].data.tobytes() == v.data.tobytes()


def test_checkpoint_corruption_detected(tmp_path):
    nc = NeuralComplexity(small_reg(), seed=15)
    path = tmp_path / "nc.ckpt"
    nc.save(path)
    blob = bytearray(path.read_bytes())
    blob[-1] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(FormatError):
        NeuralComplexity.load(path)
    path.write_bytes(bytes(blob[: len(blob) // 2]))
    with pytest.raises(FormatError):
        NeuralComplexity.load(path)
