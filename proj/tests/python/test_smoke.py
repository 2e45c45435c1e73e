import json

import numpy as np
import pytest

import lvmogp


def rbf(A, B, variance, ls):
    d = (A[:, None, :] - B[None, :, :]) / ls
    return variance * np.exp(-0.5 * (d**2).sum(-1))


def small_grid(seed=0, n=12, d=4):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, 1))
    Y = np.sin(3 * X) @ rng.normal(size=(1, d)) + 0.1 * rng.normal(size=(n, d))
    return lvmogp.GridObservations(X, Y)


def test_kernel_matches_numpy():
    rng = np.random.default_rng(1)
    A, B = rng.normal(size=(5, 2)), rng.normal(size=(3, 2))
    k = lvmogp.KernelParams.rbf(1.7, np.array([0.5, 1.3]))
    np.testing.assert_allclose(lvmogp.kernel_matrix(k, A, B), rbf(A, B, 1.7, np.array([0.5, 1.3])), rtol=1e-12)
    np.testing.assert_allclose(lvmogp.kernel_diag(k, A), np.full(5, 1.7))


def test_kron_matvec_matches_numpy():
    rng = np.random.default_rng(2)
    A, B, x = rng.normal(size=(3, 3)), rng.normal(size=(4, 4)), rng.normal(size=12)
    np.testing.assert_allclose(lvmogp.kron_matvec(A, B, x), np.kron(A, B) @ x, rtol=1e-12, atol=1e-12)


def test_bound_forms_agree_and_fit_improves():
    data = small_grid()
    m0 = lvmogp.init_model(data, 2, 5, 4, seed=3)
    model, trace = lvmogp.fit(m0, data, {"max_iters": 40})
    assert trace[-1] > trace[0]
    ref = lvmogp.bound_reference(model, data)
    eff = lvmogp.bound_efficient(model, data)
    mis = lvmogp.bound_missing(model, lvmogp.RaggedObservations.from_grid(data))
    assert abs(ref - eff) <= 1e-8 * abs(ref)
    assert abs(mis - eff) <= 1e-8 * abs(eff)
    assert abs(lvmogp.evaluate_bound(model, data).total - trace[-1]) <= 1e-8 * abs(trace[-1])


def test_predict_and_new_condition():
    data = small_grid()
    model, _ = lvmogp.fit(lvmogp.init_model(data, 2, 5, 4), data, {"max_iters": 40})
    Xs = np.linspace(-1, 1, 7)[:, None]
    mean, var = lvmogp.predict(model, Xs, [0] * 7)
    assert mean.shape == (7,) and var.shape == (7,)
    assert (var >= 0).all()
    q, bound = lvmogp.infer_new_condition(model, data.X[:3], data.Y[:3, 1])
    assert q.means.shape == (1, 2)
    assert np.isfinite(bound)
    mean_new, var_new = lvmogp.predict_with_latent(model, Xs, q)
    assert np.isfinite(mean_new).all() and (var_new >= 0).all()


def test_json_round_trip_keeps_bound():
    data = small_grid()
    model = lvmogp.init_model(data, 2, 4, 3, seed=5)
    back = lvmogp.LvmogpModel.from_json(model.to_json())
    assert back.to_json() == model.to_json()
    assert lvmogp.evaluate_bound(back, data).total == lvmogp.evaluate_bound(model, data).total


def test_ragged_data_and_baselines():
    rng = np.random.default_rng(4)
    conds = []
    for d in range(3):
        X = rng.uniform(-1, 1, size=(4 + d, 1))
        conds.append((X, np.sin(2 * X[:, 0]) + 0.1 * d))
    data = lvmogp.RaggedObservations(conds)
    assert data.total_points() == 15
    for kind in ["gp-ind", "lmc", "gp-oh", "gp-wo"]:
        b = lvmogp.fit_baseline(kind, data, max_iters=20)
        mean, var = lvmogp.predict_baseline(b, np.zeros((2, 1)), [0, 2])
        assert mean.shape == (2,) and (var >= 0).all()


def test_errors_become_python_exceptions():
    with pytest.raises(ValueError):
        lvmogp.KernelParams.rbf(-1.0, np.ones(1))
    with pytest.raises(ValueError):
        lvmogp.GridObservations(np.zeros((3, 1)), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        lvmogp.fit(lvmogp.init_model(small_grid(), 2, 3, 3), small_grid(), {"bogus": 1})
    with pytest.raises(ValueError):
        lvmogp.LvmogpModel.from_json("{}")


def test_generators_and_experiment():
    ds, latent = lvmogp.gen_synthetic_grid(seed=1, num_inputs=20, num_conditions=5)
    assert latent.shape == (5, 2)
    assert ds.test.y.shape[0] == 10 * 5
    assert json.loads(ds.metadata)["seed"] == 1
    metrics = lvmogp.run_experiment(
        "braking-toy", {"repeats": 1, "settings": {"train": {"max_iters": 50}, "baseline": {"max_iters": 30}}}
    )
    assert metrics["repeats"] == 1
    for m in metrics["models"].values():
        assert m["std"] == 0.0
