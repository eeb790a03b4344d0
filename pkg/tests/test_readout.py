import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from magnonrc.data import DataError
from magnonrc.readout import (EnsembleModel, LinearModel, MlpModel, ProbeAborted, backprop_grad, chunk_bounds,
                              ann_gradient_probe, evaluate, fit_ensemble, fit_linear, fit_mlp, init_mlp, load_model,
                              one_hot, param_shift_grad, pinv, predict_labels, save_model, target_matrix)


def test_exact_recovery(rng):
    X = rng.normal(size=(50, 8))
    W = rng.normal(size=(8, 3))
    np.testing.assert_allclose(fit_linear(X, X @ W).W, W, atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 200), st.integers(1, 100), st.integers(0, 2 ** 31))
def test_pinv_consistency(n, d, seed):
    X = np.random.default_rng(seed).normal(size=(n, d))
    P = pinv(X)
    np.testing.assert_allclose(X @ P @ X, X, atol=1e-8 * max(1.0, np.abs(X).max()))


def test_pinv_rank_deficient_and_zero(rng):
    A = rng.normal(size=(30, 3))
    X = np.hstack([A, A[:, :1] * 2])
    np.testing.assert_allclose(X @ pinv(X) @ X, X, atol=1e-10)
    np.testing.assert_allclose(pinv(X), np.linalg.pinv(X), atol=1e-10)
    assert np.all(pinv(np.zeros((4, 2))) == 0)


def test_least_squares_optimality(rng):
    X = rng.normal(size=(40, 6))
    Y = rng.normal(size=(40, 1))
    W = fit_linear(X, Y).W
    best = np.linalg.norm(X @ W - Y)
    for _ in range(100):
        assert best <= np.linalg.norm(X @ (W + 0.1 * rng.normal(size=W.shape)) - Y) + 1e-12


def test_fit_linear_errors():
    with pytest.raises(DataError):
        fit_linear(np.zeros((3, 2)), np.zeros(4))
    with pytest.raises(DataError):
        fit_linear(np.array([[np.nan, 1.0]]), np.zeros(1))


def test_ensemble_chunks_and_reduction(rng):
    assert chunk_bounds(10, 3) == [(0, 3), (3, 6), (6, 10)]
    X = rng.normal(size=(23, 4))
    Y = rng.normal(size=23)
    e1 = fit_ensemble(X, Y, N=1)
    np.testing.assert_allclose(e1.predict(X), fit_linear(X, Y).predict(X), atol=1e-12)
    e = fit_ensemble(X, Y, N=3)
    assert e.N == 3
    manual = np.mean([fit_linear(X[a:b], Y[a:b]).predict(X) for a, b in chunk_bounds(23, 3)], axis=0)
    np.testing.assert_allclose(e.predict(X), manual)
    with pytest.raises(DataError):
        fit_ensemble(X, Y, N=24)


def test_targets_and_labels():
    np.testing.assert_array_equal(target_matrix([0, 1, 1], 2), [[0], [1], [1]])
    np.testing.assert_array_equal(one_hot([2, 0], 3), [[0, 0, 1], [1, 0, 0]])
    np.testing.assert_array_equal(predict_labels(np.array([0.49, 0.5, 0.9])), [0, 1, 1])
    np.testing.assert_array_equal(predict_labels(np.array([[0.3, 0.3, 0.1], [0, 1, 1]])), [0, 1])


def test_evaluate_permutation_invariant(rng):
    X = rng.normal(size=(30, 3))
    y = (X[:, 0] > 0).astype(int)
    m = fit_linear(np.hstack([X, np.ones((30, 1))]), y)
    Xb = np.hstack([X, np.ones((30, 1))])
    p = rng.permutation(30)
    assert evaluate(m, Xb, y) == evaluate(m, Xb[p], y[p])
    assert np.isnan(evaluate(m, Xb[:0], y[:0]))


def test_mlp_learns_xor():
    X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]] * 10, dtype=float)
    y = np.array([0, 1, 1, 0] * 10)
    m = fit_mlp(X, y, hidden=8, epochs=2000, lr=1e-2, seed=0)
    assert evaluate(m, X, y) == 100.0


def test_mlp_multiclass_and_determinism(rng):
    X = rng.normal(size=(90, 2))
    y = np.digitize(X[:, 0], [-0.5, 0.5])
    a = fit_mlp(X, y, epochs=300, lr=1e-2, seed=4)
    b = fit_mlp(X, y, epochs=300, lr=1e-2, seed=4)
    np.testing.assert_array_equal(a.to_vector(), b.to_vector())
    assert a.predict(X).shape == (90, 3)
    assert evaluate(a, X, y) > 85


def _tiny_mlp(output):
    # 1 input, 3 hidden, 1 output: 3 + 3 + 3 + 1 = 10 parameters
    m = init_mlp(1, 3, 1, output, seed=2)
    m.b1 = np.array([0.3, -0.2, 0.5])
    return m


@pytest.mark.parametrize("output", ["sigmoid", "linear"])
def test_backprop_matches_parameter_shift(output):
    m = _tiny_mlp(output)
    X = np.linspace(-1, 1, 9)[:, None]
    Y = (X[:, 0] > 0).astype(float)
    g = backprop_grad(m, X, Y)
    analytic = np.concatenate([g[k].ravel() for k in MlpModel.PARAMS])
    assert analytic.size == 10
    numeric = param_shift_grad(lambda v: m.with_vector(v).loss(X, Y), m.to_vector(), 1e-7)
    np.testing.assert_allclose(numeric, analytic, rtol=1e-2, atol=1e-7)


def test_backprop_softmax_and_linear_models(rng):
    m = init_mlp(3, 5, 3, "softmax", seed=1)
    X = rng.normal(size=(12, 3))
    Y = one_hot(rng.integers(0, 3, 12), 3)
    g = backprop_grad(m, X, Y)
    analytic = np.concatenate([g[k].ravel() for k in MlpModel.PARAMS])
    numeric = param_shift_grad(lambda v: m.with_vector(v).loss(X, Y), m.to_vector(), 1e-7)
    np.testing.assert_allclose(numeric, analytic, rtol=1e-2, atol=1e-6)
    lm = LinearModel(rng.normal(size=(3, 1)))
    Yl = rng.normal(size=(12, 1))
    f = lambda w: 0.5 * np.mean((X @ w.reshape(3, 1) - Yl) ** 2)
    np.testing.assert_allclose(param_shift_grad(f, lm.W.ravel(), 1e-7),
                               backprop_grad(lm, X, Yl)["W"].ravel(), rtol=1e-2)
    ens = EnsembleModel([lm, lm])
    assert set(backprop_grad(ens, X, Yl)) == {"member0", "member1"}


def test_param_shift_oracle():
    f = lambda p: p[0] ** 2 + 3 * p[1]
    g = param_shift_grad(f, np.array([3.0, 1.0]), delta=1e-3)
    np.testing.assert_allclose(g, [6.001, 3.0], rtol=1e-9)
    calls = []
    param_shift_grad(lambda p: calls.append(1) or 0.0, np.zeros(5))
    assert len(calls) == 6
    with pytest.raises(ValueError):
        param_shift_grad(f, np.zeros(2), 0.0)


@pytest.mark.parametrize("kind", ["linear", "ensemble", "mlp"])
def test_model_csv_round_trip(tmp_path, rng, kind):
    X = rng.normal(size=(20, 3))
    y = (X[:, 0] > 0).astype(int)
    m = {"linear": lambda: fit_linear(X, y), "ensemble": lambda: fit_ensemble(X, y, 2),
         "mlp": lambda: fit_mlp(X, y, epochs=20)}[kind]()
    save_model(m, tmp_path / "m.csv")
    back = load_model(tmp_path / "m.csv")
    np.testing.assert_allclose(back.predict(X), m.predict(X), rtol=1e-14)


def test_ann_gradient_probe_report(tmp_path):
    rep = ann_gradient_probe(lambda p: float(np.sum(p ** 2)), np.array([1.0, -2.0, 0.5]), delta=1e-6)
    np.testing.assert_allclose(rep.estimates, [2, -4, 1], atol=1e-4)
    assert rep.max_abs == pytest.approx(4, abs=1e-4)
    rep.to_csv(tmp_path / "g.csv")
    assert (tmp_path / "g.csv").read_text().startswith("param_index,estimate,delta,base_loss")
    flat = ann_gradient_probe(lambda p: 1.0 / (1.0 + np.exp(-1e4 * p[0])), np.array([1.0]), delta=1.0)
    assert flat.estimates[0] == 0.0

    def boom(p):
        if p[1] != 0:
            raise FloatingPointError("blowup")
        return 0.0
    with pytest.raises(ProbeAborted) as err:
        ann_gradient_probe(boom, np.zeros(3), indices=[0, 1, 2])
    assert err.value.index == 1
