"""Core network tests: forward semantics, gradients vs finite differences, files."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advparam.mlp import (
    ModelParams,
    add_scaled,
    classify,
    classify_batch,
    cross_entropy,
    flatten_params,
    forward,
    forward_batch,
    init_params,
    input_gradient,
    input_jacobian,
    load_model,
    loss_and_grads,
    max_abs_diff,
    min_abs_entry,
    min_row_norm,
    model_from_json,
    model_to_json,
    param_gradient,
    save_model,
    unflatten_params,
)

from common import numeric_input_jacobian, numeric_param_gradient, random_net, rel_err


# --- construction and validation ---------------------------------------------


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams([np.zeros((3, 2))], [np.zeros(2)])  # bias mismatch
    with pytest.raises(ValueError):
        ModelParams([np.zeros((3, 2)), np.zeros((2, 4))], [np.zeros(3), np.zeros(2)])  # chain break
    with pytest.raises(ValueError):
        ModelParams([np.array([[1.0, np.nan]])], [np.zeros(1)])  # non-finite and m=1
    with pytest.raises(ValueError):
        ModelParams([np.zeros((1, 4))], [np.zeros(1)])  # single output class
    p = ModelParams([np.zeros((4, 3)), np.zeros((2, 4))], [np.zeros(4), np.zeros(2)])
    assert p.dims == [3, 4, 2]
    assert p.hidden_count == 1
    assert p.num_params == 4 * 3 + 2 * 4 + 4 + 2


def test_affine_only_net_allowed():
    # zero hidden layers: logits = Wx + b
    p = ModelParams([np.array([[1.0, 0.0], [0.0, 1.0]])], [np.zeros(2)])
    assert p.hidden_count == 0
    tr = forward(p, np.array([0.3, 0.7]))
    assert tr.hidden == [] and tr.signs == []
    np.testing.assert_allclose(tr.logits, [0.3, 0.7])


# --- forward / classify -------------------------------------------------------


def test_forward_hand_case():
    # one hidden layer, hand-evaluated
    p = ModelParams(
        [np.array([[1.0, -1.0], [0.5, 0.5]]), np.array([[1.0, 0.0], [0.0, 2.0]])],
        [np.array([0.1, -0.6]), np.array([0.0, 0.05])],
    )
    x = np.array([0.8, 0.2])
    # z1 = (0.8-0.2+0.1, 0.4+0.1-0.6) = (0.7, -0.1) -> h = (0.7, 0)
    tr = forward(p, x)
    np.testing.assert_allclose(tr.hidden[0], [0.7, 0.0])
    np.testing.assert_allclose(tr.signs[0], [1.0, 0.0])
    np.testing.assert_allclose(tr.logits, [0.7, 0.05])
    assert classify(p, x) == 0


def test_classify_argmax_and_ties():
    p = ModelParams([np.array([[1.0, 0.0], [0.0, 1.0]])], [np.zeros(2)])
    assert classify(p, np.array([0.3, 0.7])) == 1
    # exact tie goes to the smallest index
    assert classify(p, np.array([0.5, 0.5])) == 0
    labs = classify_batch(p, np.array([[0.3, 0.7], [0.9, 0.1], [0.4, 0.4]]))
    np.testing.assert_array_equal(labs, [1, 0, 0])


def test_forward_accepts_points_outside_unit_box():
    p = random_net(np.random.default_rng(0), [3, 5, 2])
    tr = forward(p, np.array([1.7, -2.3, 0.4]))
    assert np.isfinite(tr.logits).all()
    with pytest.raises(ValueError):
        forward(p, np.array([np.inf, 0.0, 0.0]))


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=25, deadline=None)
def test_forward_trace_invariants(seed):
    rng = np.random.default_rng(seed)
    dims = [int(rng.integers(2, 6)) for _ in range(int(rng.integers(2, 5)))]
    dims.append(int(rng.integers(2, 5)))
    p = random_net(rng, dims)
    X = rng.uniform(0, 1, size=(4, dims[0]))
    acts, signs, logits = forward_batch(p, X)
    for h, s in zip(acts[1:], signs):
        assert (h >= 0).all()
        assert set(np.unique(s)) <= {0.0, 1.0}
        # sign mask is consistent with the activation values
        assert ((h > 0) == (s == 1.0)).all()
    np.testing.assert_allclose(logits, acts[-1] @ p.weights[-1].T + p.biases[-1], rtol=0, atol=0)


# --- analytic gradients vs finite differences ---------------------------------


def test_param_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    for trial in range(8):
        n_layers = int(rng.integers(1, 4))
        dims = [int(rng.integers(2, 7)) for _ in range(n_layers + 1)]
        dims.append(int(rng.integers(2, 5)))
        p = random_net(rng, dims)
        X = rng.uniform(0, 1, size=(5, dims[0]))
        y = rng.integers(0, dims[-1], size=5)

        g = param_gradient(p, X, y)

        def ce(q, X=X, y=y):
            v, _, _ = loss_and_grads(q, X, y)
            return v

        g_num = numeric_param_gradient(ce, p)
        assert rel_err(flatten_params(g), g_num) < 1e-5


def test_squared_error_gradient_scalar_case():
    # f(x) = (w*x, 0); L = (w*x - t)^2, dL/dw = 2(w*x - t)*x
    w, x, t = 1.7, 0.6, 0.9
    p = ModelParams([np.array([[w], [0.0]])], [np.zeros(2)])
    v, g, _ = loss_and_grads(p, np.array([[x]]), np.array([[t, 0.0]]), loss="squared_error")
    assert v == pytest.approx((w * x - t) ** 2, rel=1e-12)
    assert g.weights[0][0, 0] == pytest.approx(2 * (w * x - t) * x, rel=1e-12)


def test_squared_error_gradient_matches_fd():
    rng = np.random.default_rng(12)
    p = random_net(rng, [4, 6, 3])
    X = rng.uniform(0, 1, size=(3, 4))
    T = rng.standard_normal((3, 3))
    _, g, _ = loss_and_grads(p, X, T, loss="squared_error")

    def se(q):
        v, _, _ = loss_and_grads(q, X, T, loss="squared_error")
        return v

    assert rel_err(flatten_params(g), numeric_param_gradient(se, p)) < 1e-5


def test_cross_entropy_hand_values():
    logits = np.array([[0.0, 0.0], [2.0, 0.0]])
    y = np.array([0, 1])
    per = cross_entropy(logits, y)
    assert per[0] == pytest.approx(np.log(2.0), rel=1e-12)
    assert per[1] == pytest.approx(np.log(1 + np.exp(2.0)), rel=1e-12)


def test_sum_vs_mean_reduction():
    rng = np.random.default_rng(3)
    p = random_net(rng, [3, 4, 2])
    X = rng.uniform(0, 1, size=(4, 3))
    y = rng.integers(0, 2, size=4)
    vm, gm, _ = loss_and_grads(p, X, y, reduction="mean")
    vs, gs, _ = loss_and_grads(p, X, y, reduction="sum")
    assert vs == pytest.approx(4 * vm, rel=1e-12)
    np.testing.assert_allclose(gs.weights[0], 4 * gm.weights[0], rtol=1e-12)


def test_input_jacobian_matches_fd_and_factors():
    rng = np.random.default_rng(5)
    for _ in range(5):
        dims = [4, 6, 5, 3]
        p = random_net(rng, dims)
        x = rng.uniform(0, 1, size=4)
        dec = input_jacobian(p, x)
        assert rel_err(dec.jacobian, numeric_input_jacobian(p, x)) < 1e-6
        # jacobian factors through every layer cut
        assert len(dec.head_chain) == len(dec.tail_chain) == p.hidden_count + 1
        for head, tail in zip(dec.head_chain, dec.tail_chain):
            np.testing.assert_allclose(head @ tail, dec.jacobian, atol=1e-12)


def test_input_gradient_rows_are_per_sample():
    rng = np.random.default_rng(9)
    p = random_net(rng, [3, 5, 3])
    X = rng.uniform(0, 1, size=(6, 3))
    y = rng.integers(0, 3, size=6)
    per, gX = input_gradient(p, X, y)
    assert per.shape == (6,) and gX.shape == (6, 3)
    # batching must not couple samples
    per1, g1 = input_gradient(p, X[2:3], y[2:3])
    np.testing.assert_allclose(g1[0], gX[2], atol=1e-14)
    np.testing.assert_allclose(per1[0], per[2], atol=1e-14)


def test_empty_batch_rejected():
    p = random_net(np.random.default_rng(0), [2, 3, 2])
    with pytest.raises(ValueError):
        loss_and_grads(p, np.zeros((0, 2)), np.zeros(0, dtype=int))


# --- parameter arithmetic ------------------------------------------------------


def test_flatten_round_trip_and_add():
    rng = np.random.default_rng(1)
    p = random_net(rng, [3, 4, 2])
    v = flatten_params(p)
    q = unflatten_params(p, v)
    for a, b in zip(p.weights, q.weights):
        np.testing.assert_array_equal(a, b)
    r = add_scaled(p, q, -1.0)
    assert max_abs_diff(r, unflatten_params(p, np.zeros(p.num_params))) == 0.0
    assert max_abs_diff(p, q) == 0.0


def test_min_helpers():
    assert min_abs_entry(np.array([[-0.3, 2.0], [0.7, -5.0]])) == pytest.approx(0.3)
    assert min_row_norm(np.array([[3.0, 4.0], [1.0, 0.0]])) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        min_abs_entry(np.array([]))


def test_init_params_bounds_and_determinism():
    p1 = init_params([9, 7, 3], seed=42)
    p2 = init_params([9, 7, 3], seed=42)
    p3 = init_params([9, 7, 3], seed=43)
    assert max_abs_diff(p1, p2) == 0.0
    assert max_abs_diff(p1, p3) > 0.0
    assert np.abs(p1.weights[0]).max() <= 1 / 3  # fan_in 9
    assert np.abs(p1.weights[1]).max() <= 1 / np.sqrt(7)


# --- serialization -------------------------------------------------------------


def test_model_round_trip_exact(tmp_path):
    rng = np.random.default_rng(11)
    p = random_net(rng, [5, 8, 4, 3])
    # include awkward values
    p.weights[0][0, 0] = 0.1
    p.weights[0][0, 1] = 1.0 / 3.0
    p.weights[0][0, 2] = 1e300
    p.weights[0][0, 3] = 5e-324
    p.biases[0][0] = -0.0
    path = tmp_path / "model.json"
    save_model(p, str(path))
    q = load_model(str(path))
    assert p.dims == q.dims
    for a, b in zip(p.weights + p.biases, q.weights + q.biases):
        np.testing.assert_array_equal(a, b)


def test_model_json_schema_fields():
    p = init_params([3, 4, 2], seed=0)
    doc = json.loads(model_to_json(p))
    assert doc["version"] == 1
    assert doc["dims"] == [3, 4, 2]
    assert len(doc["layers"]) == 2
    assert set(doc["layers"][0]) == {"w", "b"}


def test_model_load_errors():
    with pytest.raises(ValueError):
        model_from_json("not json at all{")
    with pytest.raises(ValueError):
        model_from_json(json.dumps({"version": 99, "layers": []}))
    good = json.loads(model_to_json(init_params([3, 4, 2], seed=0)))
    bad = dict(good)
    bad["dims"] = [3, 5, 2]
    with pytest.raises(ValueError):
        model_from_json(json.dumps(bad))
    bad2 = dict(good)
    bad2["layers"] = [{"w": [[1.0, 2.0]]}]  # missing bias
    with pytest.raises(ValueError):
        model_from_json(json.dumps(bad2))
