import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import norm

from knockwave.baselines import (NaiveBayesModel, PcaModel, nb_fit, nb_predict, nb_predict_proba,
                                 one_nn_predict, pca_fit_transform)


def test_pca_rank_one(rng):
    t = rng.normal(size=50)
    direction = np.array([3.0, 4.0]) / 5.0
    X = np.outer(t, direction) + 7.0
    model, scores = pca_fit_transform(X, 1)
    np.testing.assert_allclose(np.abs(model.components[0]), direction, atol=1e-12)
    np.testing.assert_allclose(model.inverse_transform(scores), X, atol=1e-10)


def test_pca_orthonormal_and_variance(rng):
    X = rng.normal(size=(40, 6)) @ rng.normal(size=(6, 6))
    model, scores = pca_fit_transform(X, 4)
    np.testing.assert_allclose(model.components @ model.components.T, np.eye(4), atol=1e-12)
    np.testing.assert_allclose(scores.var(axis=0, ddof=1), model.explained_variance, rtol=1e-10)
    assert np.all(np.diff(model.explained_variance) <= 0)


def test_pca_full_rank_reconstructs(rng):
    X = rng.normal(size=(20, 5))
    model, scores = pca_fit_transform(X, 5)
    np.testing.assert_allclose(model.inverse_transform(scores), X, atol=1e-10)
    back = PcaModel.from_dict(model.to_dict())
    np.testing.assert_allclose(back.transform(X), scores)


def test_pca_bad_k(rng):
    with pytest.raises(ValueError):
        pca_fit_transform(rng.normal(size=(5, 3)), 4)


def manual_nb(X, y, Q):
    """Per-query Bayes rule with scipy densities (no variance floor needed here)."""
    C = y.max() + 1
    out = []
    for q in Q:
        scores = []
        for c in range(C):
            Xc = X[y == c]
            prior = np.log(np.mean(y == c))
            scores.append(prior + norm.logpdf(q, Xc.mean(0), Xc.std(0)).sum())
        scores = np.array(scores)
        out.append(np.exp(scores - np.logaddexp.reduce(scores)))
    return np.array(out)


def test_nb_matches_manual_bayes(rng):
    y = np.repeat([0, 1, 2], [10, 15, 8])
    X = rng.normal(size=(y.size, 4)) + y[:, None]
    Q = rng.normal(size=(12, 4)) + 1.0
    model = nb_fit(X, y)
    np.testing.assert_allclose(nb_predict_proba(model, Q), manual_nb(X, y, Q), rtol=1e-9)
    np.testing.assert_array_equal(nb_predict(model, Q), manual_nb(X, y, Q).argmax(1))


def test_nb_posterior_sums_to_one(rng):
    y = np.arange(30) % 3
    model = nb_fit(rng.normal(size=(30, 5)), y)
    P = nb_predict_proba(model, rng.normal(size=(7, 5)) * 50)
    np.testing.assert_allclose(P.sum(axis=1), 1.0)


def test_nb_tie_goes_to_lowest_class():
    model = NaiveBayesModel(np.zeros((2, 1)), np.ones((2, 1)), np.log([0.5, 0.5]))
    assert nb_predict(model, np.array([[0.3]])).tolist() == [0]


def test_nb_variance_floor_on_constant_feature():
    X = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 3.0]])
    model = nb_fit(X, np.array([0, 0, 1, 1]))
    assert np.all(model.variances > 0)
    assert np.all(np.isfinite(nb_predict_proba(model, X)))


def test_nb_needs_two_rows_per_class():
    with pytest.raises(ValueError):
        nb_fit(np.zeros((3, 1)), np.array([0, 0, 1]))


def test_nb_serialisation(rng):
    model = nb_fit(rng.normal(size=(6, 2)), np.array([0, 1] * 3))
    back = NaiveBayesModel.from_dict(model.to_dict())
    np.testing.assert_array_equal(back.means, model.means)


@given(st.integers(1, 30), st.integers(1, 20), st.integers(1, 4), st.integers(0, 1000))
def test_one_nn_matches_brute_force(n_train, n_query, d, seed):
    r = np.random.default_rng(seed)
    # integer grid makes exact ties common
    A = r.integers(-2, 3, size=(n_train, d)).astype(float)
    y = r.integers(0, 5, size=n_train)
    Q = r.integers(-2, 3, size=(n_query, d)).astype(float)
    expect = [y[np.argmin(((A - q) ** 2).sum(axis=1))] for q in Q]
    np.testing.assert_array_equal(one_nn_predict(A, y, Q, chunk=7), expect)


def test_one_nn_tie_lowest_index():
    A = np.array([[1.0], [-1.0]])
    assert one_nn_predict(A, np.array([5, 9]), np.array([[0.0]])).tolist() == [5]


def test_one_nn_errors():
    with pytest.raises(ValueError):
        one_nn_predict(np.zeros((0, 2)), np.zeros(0), np.zeros((1, 2)))
    with pytest.raises(ValueError):
        one_nn_predict(np.zeros((2, 2)), np.zeros(2), np.zeros((1, 3)))
