"""Reference classifiers: PCA features, Gaussian naive Bayes and 1-nearest-neighbour."""

import json
from dataclasses import dataclass

import numpy as np


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    @property
    def k(self):
        return self.components.shape[0]

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.mean) @ self.components.T

    def inverse_transform(self, scores):
        return scores @ self.components + self.mean

    def to_dict(self):
        return {"mean": self.mean.tolist(), "components": self.components.tolist(),
                "explained_variance": self.explained_variance.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(*(np.asarray(d[key], dtype=float)
                     for key in ("mean", "components", "explained_variance")))


def pca_fit_transform(X, k):
    """Principal components from the SVD of the centred data.

    Returns ``(PcaModel, scores)``; each score column has sample variance
    (ddof=1) equal to the matching explained variance.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if not 1 <= k <= min(n - 1, d):
        raise ValueError(f"k={k} must lie in [1, {min(n - 1, d)}]")
    mean = X.mean(axis=0)
    U, sv, Vt = np.linalg.svd(X - mean, full_matrices=False)
    # deterministic sign: largest-magnitude loading positive
    signs = np.sign(Vt[np.arange(Vt.shape[0]), np.argmax(np.abs(Vt), axis=1)])
    signs[signs == 0] = 1.0
    Vt = Vt * signs[:, None]
    comps = Vt[:k]
    var = sv[:k] ** 2 / (n - 1)
    model = PcaModel(mean, comps, var)
    return model, (X - mean) @ comps.T


@dataclass
class NaiveBayesModel:
    means: np.ndarray
    variances: np.ndarray
    log_priors: np.ndarray

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in ("means", "variances", "log_priors")}

    @classmethod
    def from_dict(cls, d):
        return cls(*(np.asarray(d[k], dtype=float) for k in ("means", "variances", "log_priors")))

    def dumps(self):
        return json.dumps(self.to_dict())


def nb_fit(X, y, n_classes=None, var_floor=1e-9):
    """Gaussian class-conditionals with a variance floor of ``var_floor`` times the pooled variance.

    The pooled ("global") variance is that of every entry of ``X`` taken together.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    C = int(y.max()) + 1 if n_classes is None else n_classes
    counts = np.bincount(y, minlength=C)
    if np.any(counts < 2):
        raise ValueError(f"classes {np.flatnonzero(counts < 2).tolist()} have fewer than 2 rows")
    floor = var_floor * max(float(np.var(X)), np.finfo(float).tiny)
    means = np.vstack([X[y == c].mean(axis=0) for c in range(C)])
    variances = np.vstack([X[y == c].var(axis=0) for c in range(C)])
    variances = np.maximum(variances, floor)
    return NaiveBayesModel(means, variances, np.log(counts / counts.sum()))


def nb_log_posterior(model, X):
    """Normalised log posterior, ``(n, C)``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.means.shape[1]:
        raise ValueError(f"expected {model.means.shape[1]} columns")
    inv = 1.0 / model.variances
    ll = -0.5 * (np.log(2 * np.pi * model.variances).sum(axis=1)
                 + (X ** 2) @ inv.T - 2.0 * X @ (model.means * inv).T
                 + (model.means ** 2 * inv).sum(axis=1))
    joint = ll + model.log_priors
    m = joint.max(axis=1, keepdims=True)
    return joint - (m + np.log(np.exp(joint - m).sum(axis=1, keepdims=True)))


def nb_predict_proba(model, X):
    return np.exp(nb_log_posterior(model, X))


def nb_predict(model, X):
    # argmax picks the lowest index on ties
    return np.argmax(nb_log_posterior(model, X), axis=1)


def one_nn_predict(train_X, train_y, X, chunk=2048):
    """Label of the Euclidean-nearest training row; ties go to the lowest training index."""
    A = np.asarray(train_X, dtype=float)
    Q = np.asarray(X, dtype=float)
    train_y = np.asarray(train_y)
    if A.shape[0] == 0:
        raise ValueError("training set is empty")
    if Q.ndim != 2 or Q.shape[1] != A.shape[1]:
        raise ValueError(f"query rows must have {A.shape[1]} columns")
    a2 = (A ** 2).sum(axis=1)
    out = np.empty(Q.shape[0], dtype=train_y.dtype)
    for start in range(0, Q.shape[0], chunk):
        q = Q[start:start + chunk]
        D = a2[None, :] - 2.0 * q @ A.T
        best = D.min(axis=1, keepdims=True)
        # the expanded form loses precision; rescore near-ties exactly
        cand = D <= best + 1e-9 * (np.abs(best) + (q ** 2).sum(axis=1, keepdims=True) + 1.0)
        for i in range(q.shape[0]):
            idx = np.flatnonzero(cand[i])
            if idx.size == 1:
                out[start + i] = train_y[idx[0]]
                continue
            exact = ((A[idx] - q[i]) ** 2).sum(axis=1)
            out[start + i] = train_y[idx[np.argmin(exact)]]
    return out
