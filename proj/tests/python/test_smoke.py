import json

import numpy as np
import pytest

import pct


def test_synthetic_pair_shapes():
    xs, ys, xt, yt = pct.make_synthetic_pair(0)
    assert xs.shape == (300, 2) and xt.shape == (300, 2)
    assert np.bincount(ys).tolist() == [250, 50]
    assert np.bincount(yt).tolist() == [50, 250]


def test_train_and_predict():
    xs, ys, xt, yt = pct.make_synthetic_pair(9)
    out = pct.train(xs, ys, xt, yt, config={"iterations": 2000, "seed": 9, "beta0": 0.001})
    last = json.loads(out["metrics"][-1])
    assert last["target_accuracy"] >= 0.9
    assert abs(out["proportions"].sum() - 1.0) < 1e-12
    pred = pct.predict(out["checkpoint"], xt)
    assert np.mean(pred == yt) == pytest.approx(last["target_accuracy"])
    assert pct.encode(out["checkpoint"], xt).shape == (300, 2)


def test_adapt_keeps_prototypes():
    xs, ys, xt, yt = pct.make_synthetic_pair(9)
    src = pct.train(xs, ys, xt, yt, config={"mode": "source_only", "iterations": 300, "seed": 9})
    ad = pct.adapt_source_private(src["checkpoint"], xt, yt, config={"iterations": 100})
    a, b = json.loads(src["checkpoint"]), json.loads(ad["checkpoint"])
    assert a["prototypes"] == b["prototypes"]


def test_conditionals_are_row_stochastic():
    rng = np.random.default_rng(0)
    mu, f = rng.normal(size=(3, 4)) * 50, rng.normal(size=(7, 3)) * 50
    p = pct.pi_target_to_proto(mu, f, np.full(4, 0.25))
    q = pct.pi_proto_to_target(mu, f)
    assert p.shape == (7, 4) and q.shape == (4, 7)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(q.sum(axis=1), 1.0, atol=1e-12)


def test_transport_loss_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    mu, f = rng.normal(size=(3, 2)), rng.normal(size=(5, 3))
    prior = np.array([0.3, 0.7])
    loss, grad = pct.transport_loss("t_to_mu", mu, f, prior)
    h = 1e-6
    num = np.zeros_like(f)
    for idx in np.ndindex(f.shape):
        fp, fm = f.copy(), f.copy()
        fp[idx] += h
        fm[idx] -= h
        num[idx] = (pct.transport_loss("t_to_mu", mu, fp, prior)[0] - pct.transport_loss("t_to_mu", mu, fm, prior)[0]) / (2 * h)
    np.testing.assert_allclose(grad, num, atol=1e-6)


def test_ot_solvers():
    cost = np.array([[0.0, 1.0], [1.0, 0.0]])
    half = np.array([0.5, 0.5])
    np.testing.assert_array_equal(pct.exact_ot(cost, half, half)["plan"], [[0.5, 0], [0, 0.5]])
    sk = pct.sinkhorn(cost, half, half, epsilon=1e-3)
    assert sk["converged"]
    np.testing.assert_allclose(sk["plan"], [[0.5, 0], [0, 0.5]], atol=1e-3)
    assert pct.balanced_assignment(cost).tolist() == [0, 1]


def test_em_step():
    mu = np.array([[np.log(2.0), 0.0]])
    f = np.ones((2, 1))
    np.testing.assert_allclose(pct.em_batch_estimate(np.array([0.5, 0.5]), mu, f), [2 / 3, 1 / 3])


def test_bad_input_raises():
    with pytest.raises(ValueError):
        pct.cost_matrix("cosine", np.zeros((2, 1)), np.ones((1, 2)))
    with pytest.raises(ValueError):
        pct.train(*pct.make_synthetic_pair(0)[:3], config={"no_such_key": 1})


def test_selfcheck_passes():
    assert all(r["passed"] for r in pct.selfcheck())
