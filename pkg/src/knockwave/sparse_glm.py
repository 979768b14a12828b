"""
L1-penalised binomial and multinomial logistic regression.

For each penalty ``lam`` on a decreasing path the fit minimises

    (1/n) * sum_i NLL_i(b0, B) + lam * sum_{c,j} |B[c, j]|

with unpenalised intercepts.  The multinomial model uses the symmetric
softmax parameterisation with one coefficient vector per class, and the
penalty is applied to every class coefficient separately ("ungrouped").
A grouped penalty, ``lam * sum_j ||B[:, j]||_2``, is available for
comparison.

The solver is a proximal Newton method: each outer step builds the
quadratic model of the loss (per class, for the multinomial) and solves the
resulting weighted lasso by cyclic coordinate descent, followed by a
backtracking step on the true objective.  Fits are warm-started along the
path and use sequential strong rules with a KKT check on the discarded
features.
"""

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .dataset import stratified_folds

logger = logging.getLogger(__name__)

W_FLOOR = 1e-5
KKT_TOL = 1e-4


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _soft(u, t):
    if u > t:
        return u - t
    if u < -t:
        return u + t
    return 0.0


@njit(cache=True, nogil=True)
def _wls_cd(X, w, r, beta, eligible, lam, tol, max_sweeps):
    """Coordinate descent for a weighted lasso with an unpenalised intercept.

    Minimises ``(1/2n) sum_i w_i (z_i - d0 - x_i . delta)^2 + lam |beta + delta|``
    where ``r = w * (z - current fit)`` is the working residual, updated in
    place together with ``beta``.  Returns ``(intercept shift, sweeps)``.
    """
    n, d = X.shape
    h = np.zeros(d)
    for j in range(d):
        if eligible[j]:
            acc = 0.0
            for i in range(n):
                acc += w[i] * X[i, j] * X[i, j]
            h[j] = acc / n
    h0 = w.sum() / n
    db0 = 0.0
    sweeps = 0
    full = True
    while sweeps < max_sweeps:
        sweeps += 1
        maxchg = 0.0
        for j in range(d):
            if not eligible[j]:
                continue
            if not full and beta[j] == 0.0:
                continue
            hj = h[j]
            if hj <= 0.0:
                beta[j] = 0.0
                continue
            g = 0.0
            for i in range(n):
                g += X[i, j] * r[i]
            g /= n
            new = _soft(g + hj * beta[j], lam) / hj
            delta = new - beta[j]
            if delta != 0.0:
                for i in range(n):
                    r[i] -= w[i] * X[i, j] * delta
                beta[j] = new
                chg = hj * delta * delta
                if chg > maxchg:
                    maxchg = chg
        g0 = r.sum() / n
        if h0 > 0.0:
            d0 = g0 / h0
            for i in range(n):
                r[i] -= w[i] * d0
            db0 += d0
            chg = h0 * d0 * d0
            if chg > maxchg:
                maxchg = chg
        if maxchg < tol:
            if full:
                break
            full = True
        else:
            full = False
    return db0, sweeps


@njit(cache=True, nogil=True)
def _binomial_objective(eta, y, beta, lam):
    n = eta.size
    acc = 0.0
    for i in range(n):
        e = eta[i]
        if e > 0:
            acc += e + np.log1p(np.exp(-e)) - y[i] * e
        else:
            acc += np.log1p(np.exp(e)) - y[i] * e
    return acc / n + lam * np.abs(beta).sum()


@njit(cache=True, nogil=True)
def _fit_binomial(X, y, beta, b0, eta, eligible, lam, tol, max_outer, max_sweeps):
    """Proximal Newton for one penalty value.  Updates beta/eta in place."""
    n, d = X.shape
    w = np.empty(n)
    r = np.empty(n)
    total_sweeps = 0
    converged = False
    it = 0
    obj = _binomial_objective(eta, y, beta, lam)
    while it < max_outer:
        it += 1
        for i in range(n):
            p = 1.0 / (1.0 + np.exp(-eta[i]))
            wi = p * (1.0 - p)
            w[i] = wi if wi > W_FLOOR else W_FLOOR
            r[i] = y[i] - p
        beta_old = beta.copy()
        db0, sw = _wls_cd(X, w, r, beta, eligible, lam, tol, max_sweeps)
        total_sweeps += sw
        step = beta - beta_old
        deta = np.full(n, db0)
        for j in range(d):
            if step[j] != 0.0:
                for i in range(n):
                    deta[i] += X[i, j] * step[j]
        t = 1.0
        new_eta = eta + deta
        new_obj = _binomial_objective(new_eta, y, beta_old + step, lam)
        while new_obj > obj + 1e-14 * abs(obj) and t > 1e-8:
            t *= 0.5
            new_eta = eta + t * deta
            new_obj = _binomial_objective(new_eta, y, beta_old + t * step, lam)
        for j in range(d):
            beta[j] = beta_old[j] + t * step[j]
        b0 += t * db0
        eta[:] = new_eta
        # change measured on the accepted step
        maxchg = 0.0
        for i in range(n):
            c = w[i] * (t * deta[i]) ** 2
            maxchg += c
        maxchg /= n
        obj = new_obj
        if maxchg < tol:
            converged = True
            break
    return b0, it, total_sweeps, converged


@njit(cache=True, nogil=True)
def _softmax_rows(eta):
    n, C = eta.shape
    P = np.empty_like(eta)
    for i in range(n):
        m = eta[i, 0]
        for c in range(1, C):
            if eta[i, c] > m:
                m = eta[i, c]
        s = 0.0
        for c in range(C):
            P[i, c] = np.exp(eta[i, c] - m)
            s += P[i, c]
        for c in range(C):
            P[i, c] /= s
    return P


@njit(cache=True, nogil=True)
def _multinomial_objective(eta, yi, B, lam):
    n, C = eta.shape
    acc = 0.0
    for i in range(n):
        m = eta[i, 0]
        for c in range(1, C):
            if eta[i, c] > m:
                m = eta[i, c]
        s = 0.0
        for c in range(C):
            s += np.exp(eta[i, c] - m)
        acc += m + np.log(s) - eta[i, yi[i]]
    return acc / n + lam * np.abs(B).sum()


@njit(cache=True, nogil=True)
def _fit_multinomial(X, yi, B, b0, eta, eligible, lam, tol, max_outer, max_sweeps):
    """Cyclic per-class proximal Newton for one penalty value (in place)."""
    n, d = X.shape
    C = B.shape[0]
    w = np.empty(n)
    r = np.empty(n)
    total_sweeps = 0
    converged = False
    it = 0
    obj = _multinomial_objective(eta, yi, B, lam)
    while it < max_outer:
        it += 1
        maxchg = 0.0
        for c in range(C):
            P = _softmax_rows(eta)
            for i in range(n):
                p = P[i, c]
                wi = p * (1.0 - p)
                w[i] = wi if wi > W_FLOOR else W_FLOOR
                r[i] = (1.0 if yi[i] == c else 0.0) - p
            beta = B[c].copy()
            beta_old = beta.copy()
            db0, sw = _wls_cd(X, w, r, beta, eligible, lam, tol, max_sweeps)
            total_sweeps += sw
            step = beta - beta_old
            deta = np.full(n, db0)
            for j in range(d):
                if step[j] != 0.0:
                    for i in range(n):
                        deta[i] += X[i, j] * step[j]
            col = eta[:, c].copy()
            t = 1.0
            eta[:, c] = col + deta
            B[c] = beta_old + step
            new_obj = _multinomial_objective(eta, yi, B, lam)
            while new_obj > obj + 1e-14 * abs(obj) and t > 1e-8:
                t *= 0.5
                eta[:, c] = col + t * deta
                B[c] = beta_old + t * step
                new_obj = _multinomial_objective(eta, yi, B, lam)
            b0[c] += t * db0
            obj = new_obj
            chg = 0.0
            for i in range(n):
                chg += w[i] * (t * deta[i]) ** 2
            chg /= n
            if chg > maxchg:
                maxchg = chg
        if maxchg < tol:
            converged = True
            break
    return it, total_sweeps, converged


@njit(cache=True, nogil=True)
def _fit_grouped(X, yi, B, b0, eta, lam, tol, max_sweeps):
    """Block coordinate descent for the group-penalised multinomial (in place).

    Each feature's C-vector takes a majorised (Hessian bound ``||x_j||^2 / 2n``)
    group soft-threshold step; the softmax Hessian never exceeds ``I / 2``.
    """
    n, d = X.shape
    C = B.shape[0]
    L = np.zeros(d)
    for j in range(d):
        acc = 0.0
        for i in range(n):
            acc += X[i, j] * X[i, j]
        L[j] = 0.5 * acc / n
    P = _softmax_rows(eta)
    g = np.empty(C)
    u = np.empty(C)
    delta = np.empty(C)
    sweeps = 0
    converged = False
    while sweeps < max_sweeps:
        sweeps += 1
        maxchg = 0.0
        for j in range(d):
            if L[j] <= 0.0:
                continue
            for c in range(C):
                g[c] = 0.0
            for i in range(n):
                xij = X[i, j]
                if xij != 0.0:
                    for c in range(C):
                        g[c] += xij * (P[i, c] - (1.0 if yi[i] == c else 0.0))
            norm = 0.0
            for c in range(C):
                u[c] = B[c, j] - g[c] / n / L[j]
                norm += u[c] * u[c]
            norm = np.sqrt(norm)
            shrink = 0.0
            if norm > 0.0:
                shrink = max(0.0, 1.0 - lam / (L[j] * norm))
            chg = 0.0
            for c in range(C):
                delta[c] = shrink * u[c] - B[c, j]
                chg += delta[c] * delta[c]
            if chg == 0.0:
                continue
            for c in range(C):
                B[c, j] += delta[c]
            for i in range(n):
                xij = X[i, j]
                if xij == 0.0:
                    continue
                m = -np.inf
                for c in range(C):
                    eta[i, c] += xij * delta[c]
                    if eta[i, c] > m:
                        m = eta[i, c]
                tot = 0.0
                for c in range(C):
                    P[i, c] = np.exp(eta[i, c] - m)
                    tot += P[i, c]
                for c in range(C):
                    P[i, c] /= tot
            if L[j] * chg > maxchg:
                maxchg = L[j] * chg
        # intercepts: majorised step with the same 1/2 curvature bound
        for c in range(C):
            g0 = 0.0
            for i in range(n):
                g0 += P[i, c] - (1.0 if yi[i] == c else 0.0)
            delta[c] = -2.0 * g0 / n
            b0[c] += delta[c]
            if 0.5 * delta[c] * delta[c] > maxchg:
                maxchg = 0.5 * delta[c] * delta[c]
        for i in range(n):
            for c in range(C):
                eta[i, c] += delta[c]
        P = _softmax_rows(eta)
        if maxchg < tol:
            converged = True
            break
    return sweeps, converged


# ---------------------------------------------------------------------------
# data containers
# ---------------------------------------------------------------------------

@dataclass
class SparseGlmFit:
    """Regularisation path of a (multinomial) logistic lasso.

    ``coefficients[k]`` is the ``(C, d)`` coefficient matrix at
    ``lambda_path[k]`` (``C = 1`` for the binomial model, whose single row
    is the log-odds of class 1).
    """

    task: str
    coefficients: np.ndarray
    intercepts: np.ndarray
    lambda_path: np.ndarray
    n_classes: int
    diagnostics: list = field(default_factory=list)

    @property
    def n_features(self):
        return self.coefficients.shape[2]

    def index_of(self, lam):
        k = np.flatnonzero(np.isclose(self.lambda_path, lam, rtol=1e-12, atol=0.0))
        if k.size == 0:
            raise ValueError(f"lambda {lam!r} is not on the fitted path")
        return int(k[0])

    def coef(self, lam):
        return self.coefficients[self.index_of(lam)]

    def intercept(self, lam):
        return self.intercepts[self.index_of(lam)]

    def nonzero_features(self, lam):
        """Indices of features with a nonzero coefficient in any class."""
        return np.flatnonzero(np.any(self.coef(lam) != 0.0, axis=0))

    def to_dict(self):
        """JSON-ready dict with coefficients as sparse ``(path, class, feature, value)`` triplets."""
        k, c, j = np.nonzero(self.coefficients)
        return {
            "task": self.task,
            "n_classes": int(self.n_classes),
            "n_features": int(self.n_features),
            "lambda_path": self.lambda_path.tolist(),
            "intercepts": self.intercepts.tolist(),
            "coefficients": [[int(a), int(b), int(e), float(v)] for a, b, e, v in
                             zip(k, c, j, self.coefficients[k, c, j])],
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, d):
        lam = np.asarray(d["lambda_path"], dtype=float)
        icpt = np.asarray(d["intercepts"], dtype=float)
        rows = icpt.shape[1]
        coefs = np.zeros((lam.size, rows, int(d["n_features"])))
        for k, c, j, v in d["coefficients"]:
            coefs[k, c, j] = v
        return cls(d["task"], coefs, icpt, lam, int(d["n_classes"]), d.get("diagnostics", []))

    def save(self, path):
        tmp = f"{path}.tmp{os.getpid()}"
        with open(tmp, "w") as fh:
            json.dump(self.to_dict(), fh)
        os.replace(tmp, path)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class CvResult:
    lambda_star: float
    lambda_path: np.ndarray
    cv_mean: np.ndarray
    cv_sd: np.ndarray
    seed: int
    index: int = 0


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _prepare(X, y):
    X = np.asfortranarray(np.asarray(X, dtype=float))
    y = np.asarray(y)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError(f"X has shape {X.shape} but y has shape {y.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("y must contain at least two classes")
    return X, y.astype(np.int64)


def _task_for(n_classes, task):
    if task is None:
        return "binomial" if n_classes == 2 else "multinomial"
    if task not in ("binomial", "multinomial"):
        raise ValueError(f"unknown task {task!r}")
    if task == "binomial" and n_classes != 2:
        raise ValueError("binomial task needs exactly two classes")
    return task


def _class_count(y, n_classes):
    C = int(y.max()) + 1 if n_classes is None else int(n_classes)
    if y.min() < 0 or y.max() >= C:
        raise ValueError(f"labels must lie in 0..{C - 1}")
    return C


def null_intercepts(y, n_classes=None, task=None):
    """Intercepts of the intercept-only model.

    Binomial: ``log(p1 / p0)``.  Multinomial: ``log(p_c)`` centred to mean
    zero, so that differences equal ``log(p_c / p_ref)``.
    """
    y = np.asarray(y, dtype=int)
    C = _class_count(y, n_classes)
    task = _task_for(C, task)
    freq = np.bincount(y, minlength=C) / y.size
    if np.any(freq == 0):
        raise ValueError("every class needs at least one observation")
    if task == "binomial":
        return np.array([np.log(freq[1] / freq[0])])
    logp = np.log(freq)
    return logp - logp.mean()


def _gradient(X, y, coefs, b0, task):
    """Gradient of the mean NLL wrt coefficients, shape ``(rows, d)``, and intercepts."""
    eta = X @ coefs.T + b0
    if task == "binomial":
        p = 1.0 / (1.0 + np.exp(-eta[:, 0]))
        R = (p - (y == 1))[:, None]
    else:
        eta = eta - eta.max(axis=1, keepdims=True)
        P = np.exp(eta)
        P /= P.sum(axis=1, keepdims=True)
        R = P.copy()
        R[np.arange(y.size), y] -= 1.0
    n = y.size
    return (X.T @ R).T / n, R.sum(axis=0) / n


def kkt_violation(X, y, coefs, b0, lam, task=None, penalty_mode="ungrouped"):
    """Largest violation of the lasso optimality conditions at one penalty.

    Zero coefficients need ``|g| <= lam``; nonzero ones need
    ``g = -lam * sign(beta)``; intercept gradients must vanish.  For the
    grouped penalty the same conditions apply to each feature's class
    vector with the Euclidean norm in place of the absolute value.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    coefs = np.atleast_2d(coefs)
    if task is None:
        task = "binomial" if coefs.shape[0] == 1 else "multinomial"
    G, g0 = _gradient(X, y, coefs, np.asarray(b0), task)
    if penalty_mode == "grouped" and task == "multinomial":
        norms = np.linalg.norm(coefs, axis=0)
        zero = norms == 0.0
        gn = np.linalg.norm(G, axis=0)
        v_zero = np.where(zero, gn - lam, 0.0)
        unit = coefs / np.where(zero, 1.0, norms)
        v_active = np.where(zero, 0.0, np.linalg.norm(G + lam * unit, axis=0))
        return float(max(v_zero.max(initial=0.0), v_active.max(initial=0.0), np.abs(g0).max()))
    zero = coefs == 0.0
    v_zero = np.where(zero, np.abs(G) - lam, 0.0)
    v_active = np.where(zero, 0.0, np.abs(G + lam * np.sign(coefs)))
    return float(max(v_zero.max(initial=0.0), v_active.max(initial=0.0), np.abs(g0).max()))


def lambda_max(X, y, n_classes=None, task=None, penalty_mode="ungrouped"):
    """Smallest penalty at which every coefficient is zero."""
    X, y = _prepare(X, y)
    C = _class_count(y, n_classes)
    task = _task_for(C, task)
    n = y.size
    freq = np.bincount(y, minlength=C) / n
    if task == "binomial":
        R = ((y == 1) - freq[1])[:, None]
    else:
        R = (y[:, None] == np.arange(C)[None, :]) - freq[None, :]
    if penalty_mode == "grouped" and task == "multinomial":
        return float(np.linalg.norm(X.T @ R, axis=1).max() / n)
    return float(np.abs(X.T @ R).max() / n)


def lambda_path(X, y, length=100, ratio=1e-4, n_classes=None, task=None,
                penalty_mode="ungrouped"):
    """Log-spaced path from ``lambda_max`` down to ``ratio * lambda_max``."""
    if length < 2:
        raise ValueError("path length must be at least 2")
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie in (0, 1)")
    lmax = lambda_max(X, y, n_classes, task, penalty_mode)
    if lmax <= 0.0:
        raise ValueError("lambda_max is zero; features carry no signal about y")
    return np.geomspace(lmax, ratio * lmax, length)


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

def fit_lasso_logistic(X, y, lambdas=None, task=None, penalty_mode="ungrouped",
                       n_classes=None, tol=1e-12, max_outer=200, max_sweeps=100000,
                       path_length=100, path_ratio=1e-4, certify=True, early_stop=True):
    """Fit the logistic lasso along a decreasing penalty path.

    Parameters
    ----------
    X : (n, d) array
        Standardised features; the intercept is added internally.
    y : (n,) int array
        Class ids ``0..C-1``.
    lambdas : array, optional
        Strictly decreasing penalties; by default :func:`lambda_path`.
    task : {"binomial", "multinomial"}, optional
        Inferred from the number of classes when omitted.
    penalty_mode : {"ungrouped", "grouped"}
        ``"grouped"`` penalises the Euclidean norm of each feature's class
        vector (multinomial only; binomial fits are unaffected).
    early_stop : bool
        Stop the path once the fit explains 99.9% of the null deviance or
        the deviance changes by less than 1e-5 (relative) between steps.
        Near-separable data otherwise spend most of their time on tiny
        penalties where coefficients diverge.  The returned path is then
        shorter than ``lambdas``.

    Returns
    -------
    SparseGlmFit
    """
    if penalty_mode not in ("ungrouped", "grouped"):
        raise ValueError(f"unknown penalty mode {penalty_mode!r}")
    X, y = _prepare(X, y)
    C = _class_count(y, n_classes)
    task = _task_for(C, task)
    grouped = penalty_mode == "grouped" and task == "multinomial"
    if lambdas is None:
        lambdas = lambda_path(X, y, path_length, path_ratio, C, task, penalty_mode)
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.ndim != 1 or lambdas.size == 0 or np.any(lambdas <= 0):
        raise ValueError("lambdas must be a non-empty vector of positive values")
    if np.any(np.diff(lambdas) >= 0):
        raise ValueError("lambdas must be strictly decreasing")

    n, d = X.shape
    rows = 1 if task == "binomial" else C
    B = np.zeros((rows, d))
    b0 = null_intercepts(y, C, task)
    eta = np.repeat(b0[None, :], n, axis=0)
    yf = (y == 1).astype(float)

    coefs = np.zeros((lambdas.size, rows, d))
    icpts = np.zeros((lambdas.size, rows))
    diags = []
    G, _ = _gradient(X, y, B, b0, task)
    null_dev = _mean_nll(eta, y, task)
    prev_dev = null_dev
    stop = lambdas.size
    prev_lam = lambdas[0]
    ever = np.zeros(d, dtype=np.bool_)
    for k, lam in enumerate(lambdas):
        if grouped:
            cur_tol = tol
            for attempt in range(6):
                eta = np.ascontiguousarray(X @ B.T + b0)
                sweeps, conv = _fit_grouped(X, y, B, b0, eta, lam, cur_tol, max_sweeps)
                it = sweeps
                viol = kkt_violation(X, y, B, b0, lam, task, "grouped") if certify else 0.0
                if viol <= KKT_TOL:
                    break
                cur_tol *= 1e-2
            b0 -= b0.mean()
            coefs[k] = B
            icpts[k] = b0
            diags.append({"lambda": float(lam), "outer_iterations": int(it),
                          "sweeps": int(sweeps), "converged": bool(conv),
                          "kkt_violation": float(viol), "nonzero": int(np.count_nonzero(B))})
            if certify and viol > KKT_TOL:
                logger.warning("lambda=%.3e: KKT violation %.2e exceeds %.0e", lam, viol, KKT_TOL)
            if early_stop:
                dev = _mean_nll(np.asarray(X @ B.T + b0), y, task)
                if k > 0 and (dev < 1e-3 * null_dev or prev_dev - dev < 1e-5 * prev_dev):
                    stop = k + 1
                    break
                prev_dev = dev
            continue
        # sequential strong rule
        eligible = ever | np.any(np.abs(G) >= 2.0 * lam - prev_lam, axis=0)
        cur_tol = tol
        viol = 0.0
        for attempt in range(6):
            if task == "binomial":
                beta = B[0]
                b, it, sweeps, conv = _fit_binomial(X, yf, beta, b0[0], eta[:, 0].copy(), eligible,
                                                    lam, cur_tol, max_outer, max_sweeps)
                b0[0] = b
                eta = X @ B.T + b0
            else:
                eta = np.ascontiguousarray(X @ B.T + b0)
                it, sweeps, conv = _fit_multinomial(X, y, B, b0, eta, eligible, lam, cur_tol,
                                                    max_outer, max_sweeps)
            G, g0 = _gradient(X, y, B, b0, task)
            violators = ~eligible & np.any(np.abs(G) > lam, axis=0)
            if violators.any():
                eligible |= violators
                continue
            viol = kkt_violation(X, y, B, b0, lam, task) if certify else 0.0
            if viol > KKT_TOL and certify and attempt == 0:
                eligible[:] = True
            if viol <= KKT_TOL or not certify:
                break
            cur_tol *= 1e-2
        if task == "multinomial":
            # intercepts are only identified up to a shift
            shift = b0.mean()
            b0 -= shift
            eta -= shift
        ever |= np.any(B != 0.0, axis=0)
        coefs[k] = B
        icpts[k] = b0
        diags.append({"lambda": float(lam), "outer_iterations": int(it), "sweeps": int(sweeps),
                      "converged": bool(conv), "kkt_violation": float(viol),
                      "nonzero": int(np.count_nonzero(B))})
        if certify and viol > KKT_TOL:
            logger.warning("lambda=%.3e: KKT violation %.2e exceeds %.0e", lam, viol, KKT_TOL)
        prev_lam = lam
        if early_stop:
            dev = _mean_nll(np.asarray(X @ B.T + b0), y, task)
            if k > 0 and (dev < 1e-3 * null_dev or prev_dev - dev < 1e-5 * prev_dev):
                stop = k + 1
                logger.debug("path stopped at lambda %d of %d (deviance %.3e)", stop,
                             lambdas.size, dev)
                break
            prev_dev = dev
    coefs, icpts, lambdas = coefs[:stop], icpts[:stop], lambdas[:stop]
    nnz = [dd["nonzero"] for dd in diags]
    if np.any(np.diff(nnz) < -max(2, 0.1 * d)):
        logger.info("nonzero count decreases noticeably along the path")
    return SparseGlmFit(task, coefs, icpts, lambdas, C, diags)


def _mean_nll(eta, y, task):
    """Mean negative log-likelihood for linear predictors ``eta`` (n x rows)."""
    if task == "binomial":
        e = eta[:, 0]
        return float(np.mean(np.logaddexp(0.0, e) - (y == 1) * e))
    m = eta.max(axis=1)
    lse = m + np.log(np.exp(eta - m[:, None]).sum(axis=1))
    return float(np.mean(lse - eta[np.arange(y.size), y]))


def predict_proba(fit, lam, X):
    """Class probabilities at penalty ``lam``; rows sum to one."""
    k = fit.index_of(lam)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != fit.n_features:
        raise ValueError(f"X must have {fit.n_features} columns")
    eta = X @ fit.coefficients[k].T + fit.intercepts[k]
    if fit.task == "binomial":
        p1 = 1.0 / (1.0 + np.exp(-eta[:, 0]))
        return np.column_stack([1.0 - p1, p1])
    eta = eta - eta.max(axis=1, keepdims=True)
    P = np.exp(eta)
    return P / P.sum(axis=1, keepdims=True)


def predict_classes(fit, lam, X):
    """Returns ``(probabilities, labels)``; ties go to the lowest class index."""
    P = predict_proba(fit, lam, X)
    return P, np.argmax(P, axis=1)


def _deviance(P, y):
    p = np.clip(P[np.arange(y.size), y], 1e-300, None)
    return -2.0 * np.log(p)


def cross_validate_lambda(X, y, lambdas=None, k=10, seed=0, task=None, n_classes=None,
                          jobs=1, **fit_kw):
    """Choose the penalty that minimises mean held-out deviance.

    Folds are stratified by class.  The lambda path is computed once on the
    full data and shared by every fold.  Returns a :class:`CvResult`.
    """
    X, y = _prepare(X, y)
    C = _class_count(y, n_classes)
    task = _task_for(C, task)
    if k < 2:
        raise ValueError("need at least 2 CV folds")
    if lambdas is None:
        lambdas = lambda_path(X, y, fit_kw.pop("path_length", 100),
                              fit_kw.pop("path_ratio", 1e-4), C, task,
                              fit_kw.get("penalty_mode", "ungrouped"))
    lambdas = np.asarray(lambdas, dtype=float)
    folds = stratified_folds(y, k, seed)
    for f in range(k):
        missing = np.setdiff1d(np.arange(C), y[folds != f])
        if missing.size:
            raise ValueError(f"class(es) {missing.tolist()} absent from CV training fold {f}")

    def one_fold(f):
        tr, va = folds != f, folds == f
        fit = fit_lasso_logistic(X[tr], y[tr], lambdas, task, n_classes=C, **fit_kw)
        out = np.empty(lambdas.size)
        last = fit.lambda_path.size - 1
        for i in range(lambdas.size):
            # past an early stop the last solution stands in for smaller penalties
            P = predict_proba(fit, fit.lambda_path[min(i, last)], X[va])
            out[i] = _deviance(P, y[va]).mean()
        return out

    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            curves = list(ex.map(one_fold, range(k)))
    else:
        curves = [one_fold(f) for f in range(k)]
    curves = np.vstack(curves)
    mean = curves.mean(axis=0)
    sd = curves.std(axis=0, ddof=1) / np.sqrt(k)
    idx = int(np.argmin(mean))
    return CvResult(float(lambdas[idx]), lambdas, mean, sd, seed, idx)


def fit_cv(X, y, k=10, seed=0, task=None, n_classes=None, jobs=1, **fit_kw):
    """Cross-validate the penalty then fit the full path; returns ``(fit, cv)``."""
    X, y = _prepare(X, y)
    C = _class_count(y, n_classes)
    lambdas = lambda_path(X, y, fit_kw.pop("path_length", 100), fit_kw.pop("path_ratio", 1e-4),
                          C, task, fit_kw.get("penalty_mode", "ungrouped"))
    fit = fit_lasso_logistic(X, y, lambdas, task, n_classes=C, **fit_kw)
    # the full-data path may stop early; only penalties it reached are candidates
    cv = cross_validate_lambda(X, y, fit.lambda_path, k, seed, task, C, jobs, **fit_kw)
    return fit, cv
