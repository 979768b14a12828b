"""
Second-order (Gaussian) model-X knockoffs.

Given feature moments ``(mu, Sigma)`` and a vector ``s``, knockoffs are drawn
from the Gaussian conditional of ``X_tilde`` given ``X`` under the joint
covariance

    G = [[Sigma,             Sigma - diag(s)],
         [Sigma - diag(s),   Sigma          ]],

which is valid whenever ``0 <= s`` and ``2 Sigma - diag(s)`` is PSD.
"""

import json
import logging
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import linalg

logger = logging.getLogger(__name__)

PSD_TOL = 1e-8


def estimate_moments(X, ridge=0.0):
    """Column means and sample covariance (ddof=1) plus ``ridge * I``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"expected an n x p matrix, got shape {X.shape}")
    if X.shape[0] < 2:
        raise ValueError("need at least two rows to estimate a covariance")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains non-finite values")
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    mu = X.mean(axis=0)
    Xc = X - mu
    Sigma = (Xc.T @ Xc) / (X.shape[0] - 1)
    Sigma = 0.5 * (Sigma + Sigma.T)
    if ridge:
        Sigma[np.diag_indices_from(Sigma)] += ridge
    if np.linalg.eigvalsh(Sigma)[0] <= 1e-12 * max(1.0, np.abs(Sigma).max()):
        logger.warning("covariance estimate is singular; consider a ridge")
    return mu, Sigma


def default_ridge(Sigma):
    """Ridge of ``1e-4 * mean(diag(Sigma))``."""
    return 1e-4 * float(np.mean(np.diag(Sigma)))


def _correlation(Sigma):
    Sigma = np.asarray(Sigma, dtype=float)
    d = np.diag(Sigma)
    if np.any(d <= 0):
        raise ValueError("Sigma must have a strictly positive diagonal")
    sd = np.sqrt(d)
    C = Sigma / np.outer(sd, sd)
    return 0.5 * (C + C.T), d


def _check_psd(C):
    lam_min = np.linalg.eigvalsh(C)[0]
    if lam_min < -PSD_TOL * max(1.0, np.abs(C).max()):
        raise ValueError(f"Sigma is not positive semi-definite (min eigenvalue {lam_min:.3e})")
    return max(lam_min, 0.0)


def solve_s_equi(Sigma):
    """Equicorrelated s: ``min(2 * lambda_min(corr), 1)`` on the correlation scale."""
    C, d = _correlation(Sigma)
    lam_min = _check_psd(C)
    return min(2.0 * lam_min, 1.0) * d


def _feasible_scale(C, s):
    """Largest gamma in [0, 1] with ``2C - gamma * diag(s)`` PSD."""
    pos = s > 0
    if not pos.any():
        return 1.0
    root = np.sqrt(s[pos])
    # gamma D <= 2C  <=>  gamma <= 2 / lambda_max(D^1/2 C^-1 D^1/2)
    Cinv = np.linalg.pinv(C, hermitian=True)
    M = Cinv[np.ix_(pos, pos)] * np.outer(root, root)
    lam = linalg.eigh(M, eigvals_only=True, subset_by_index=[M.shape[0] - 1, M.shape[0] - 1])[0]
    if lam <= 0:
        return 1.0
    return float(min(2.0 / lam, 1.0))


@njit(cache=True, nogil=True)
def _barrier_sweeps(Minv, s, mu, sweeps):
    """In-place coordinate ascent on ``sum(s) + mu * logdet(2C - diag(s))``, ``s <= 1``.

    For fixed others the exact coordinate optimum is ``s_j + 1/(M^-1)_jj - mu``;
    ``Minv`` is kept current by Sherman-Morrison rank-one updates.
    """
    b = s.size
    col = np.empty(b)
    for _ in range(sweeps):
        for j in range(b):
            if not Minv[j, j] > 0.0 or not np.isfinite(Minv[j, j]):
                return False
            new = s[j] + 1.0 / Minv[j, j] - mu
            new = min(max(new, 0.0), 1.0)
            delta = new - s[j]
            if delta == 0.0:
                continue
            for i in range(b):
                col[i] = Minv[i, j]
            f = delta / (1.0 - delta * col[j])
            for k in range(b):
                fk = f * col[k]
                for i in range(b):
                    Minv[i, k] += fk * col[i]
            s[j] = new
    return True


def _block_coordinate_ascent(Cb, s0, mu_start=1.0, mu_stop=1e-9, sweeps=1, decay=0.5):
    """Maximise sum(s) over 0 <= s <= 1, 2Cb - diag(s) >= 0 by a log-barrier path.

    ``s0`` must be strictly feasible.  ``mu`` shrinks by ``decay`` per stage;
    faster schedules leave coordinate ascent jammed short of the optimum.  The
    inverse is recomputed before every sweep because rank-one updates drift
    once ``M`` approaches singularity.
    """
    s = np.array(s0, dtype=float)
    mu = mu_start
    while mu >= mu_stop:
        for _ in range(sweeps):
            Minv = np.linalg.inv(2.0 * Cb - np.diag(s))
            trial = s.copy()
            if not _barrier_sweeps(0.5 * (Minv + Minv.T), trial, mu, 1):
                break
            s = trial
        mu *= decay
    return s


def solve_s_sdp(Sigma, block=50, refine=True):
    """Approximate SDP s-vector.

    Contiguous blocks of at most ``block`` features are solved by a
    log-barrier coordinate ascent and the concatenated vector is shrunk
    uniformly until ``2 Sigma - diag(s)`` is PSD.  With ``refine`` a
    barrier path on the full matrix, started strictly inside the feasible
    set, competes with that point; the full path matters when Sigma is
    (nearly) rank deficient, where a uniform shrink collapses every
    coordinate.  The best of these and the equicorrelated solution (by
    sum) is returned, so the result is never worse than equicorrelated.
    """
    if block < 1:
        raise ValueError("block size must be positive")
    C, d = _correlation(Sigma)
    lam_min = _check_psd(C)
    p = C.shape[0]
    s_equi = np.full(p, min(2.0 * lam_min, 1.0))
    s = np.empty(p)
    for start in range(0, p, block):
        idx = slice(start, min(start + block, p))
        Cb = C[idx, idx]
        lam_b = np.linalg.eigvalsh(Cb)[0]
        s[idx] = _block_coordinate_ascent(Cb, np.full(Cb.shape[0], 0.5 * min(2.0 * lam_b, 1.0)),
                                          sweeps=2)
    s = _feasible_scale(C, s) * s
    if s.sum() < s_equi.sum():
        s = s_equi.copy()
    if refine and lam_min > 0:
        try:
            # each sweep costs O(p^3); large problems get one sweep per stage
            sweeps = int(np.clip(1e9 / p ** 3, 1, 2))
            refined = _block_coordinate_ascent(C, 0.5 * s, sweeps=sweeps)
            refined = _feasible_scale(C, refined) * refined
            if refined.sum() > s.sum():
                s = refined
        except np.linalg.LinAlgError:
            logger.warning("full-matrix refinement of s failed; keeping block solution")
    # guard against round-off on the PSD boundary
    s = s * (1.0 - 1e-12)
    if s.sum() < s_equi.sum():
        s = s_equi
    return s * d


def joint_covariance(Sigma, s):
    """The 2p x 2p matrix ``G`` of original and knockoff features."""
    Sigma = np.asarray(Sigma, dtype=float)
    off = Sigma - np.diag(s)
    return np.block([[Sigma, off], [off, Sigma]])


@dataclass
class GaussianKnockoffSampler:
    mu: np.ndarray
    Sigma: np.ndarray
    s: np.ndarray
    A: np.ndarray
    L: np.ndarray
    ridge: float = 0.0
    clip_floor: float = 0.0
    n_clipped: int = 0
    seed: int = None

    @property
    def p(self):
        return self.mu.size

    @property
    def V(self):
        return self.L @ self.L.T

    def save(self, path):
        """Store sampler state as ``.npz``."""
        np.savez(path, mu=self.mu, Sigma=self.Sigma, s=self.s, A=self.A, L=self.L,
                 meta=json.dumps({"ridge": self.ridge, "clip_floor": self.clip_floor,
                                  "n_clipped": self.n_clipped, "seed": self.seed}))

    @classmethod
    def load(cls, path):
        with np.load(path) as z:
            meta = json.loads(str(z["meta"]))
            return cls(z["mu"], z["Sigma"], z["s"], z["A"], z["L"], **meta)


def fit_sampler(mu, Sigma, s, ridge=0.0, clip_rel=1e-10):
    """Precompute the conditional-Gaussian factors for sampling knockoffs.

    ``A = Sigma^-1 diag(s)`` and ``L L^T = V = 2 diag(s) - diag(s) Sigma^-1 diag(s)``.
    Eigenvalues of ``V`` below ``clip_rel * max eig(V)`` are raised to that
    floor before factoring; coordinates with ``s_j = 0`` are left out of the
    factorisation, so their knockoffs equal the originals exactly.
    """
    mu = np.asarray(mu, dtype=float)
    Sigma = np.asarray(Sigma, dtype=float)
    s = np.asarray(s, dtype=float)
    p = mu.size
    if Sigma.shape != (p, p) or s.shape != (p,):
        raise ValueError("mu, Sigma and s have inconsistent dimensions")
    if np.any(s < 0):
        raise ValueError("s must be non-negative")
    C, d = _correlation(Sigma)
    sc = s / d
    lam = np.linalg.eigvalsh(2.0 * C - np.diag(sc))[0]
    if lam < -PSD_TOL:
        raise ValueError(f"joint covariance G is not PSD (min eig of 2*corr - diag(s) = {lam:.3e})")

    try:
        cho = linalg.cho_factor(Sigma, lower=True)
        A = linalg.cho_solve(cho, np.diag(s))
    except linalg.LinAlgError:
        A = np.linalg.pinv(Sigma) @ np.diag(s)
    V = 2.0 * np.diag(s) - np.diag(s) @ A
    V = 0.5 * (V + V.T)

    # rows and columns of V with s_j = 0 vanish exactly; factor the rest only
    # so clipping cannot leak noise into knockoffs that must equal X_j
    act = np.flatnonzero(s > 0)
    L = np.zeros((p, p))
    floor, clipped = 0.0, 0
    if act.size:
        w, Q = np.linalg.eigh(V[np.ix_(act, act)])
        top = max(w[-1], 0.0)
        floor = clip_rel * top
        clipped = int(np.sum(w < floor))
        if clipped:
            logger.info("clipped %d of %d conditional-covariance eigenvalues (min %.3e)",
                        clipped, act.size, w[0])
        w = np.maximum(w, floor)
        if top > 0.0:
            Vc = (Q * w) @ Q.T
            Vc = 0.5 * (Vc + Vc.T)
            try:
                La = np.linalg.cholesky(Vc)
            except np.linalg.LinAlgError:
                La = Q * np.sqrt(w)
            if not np.all(np.isfinite(La)):
                raise np.linalg.LinAlgError(
                    f"could not factor conditional covariance (min eigenvalue {w[0]:.3e})")
            L[np.ix_(act, act)] = La
    return GaussianKnockoffSampler(mu, Sigma, s, A, L, ridge, floor, clipped)


def sample_knockoffs(sampler, X, seed=0):
    """Draw ``X_tilde = mu + (X - mu)(I - A) + Z L^T`` with ``Z`` standard normal."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != sampler.p:
        raise ValueError(f"X has shape {X.shape}; sampler expects {sampler.p} columns")
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal(X.shape)
    Xc = X - sampler.mu
    return sampler.mu + Xc - Xc @ sampler.A + Z @ sampler.L.T


AUTO_EQUI_FLOOR = 0.1


def solve_s(Sigma, method="auto", block=50):
    """Dispatch to an s solver.

    ``"auto"`` keeps the equicorrelated answer when it is at least
    ``AUTO_EQUI_FLOOR`` on the correlation scale and otherwise runs the SDP
    solver.  Overcomplete features (e.g. boundary-extended wavelet
    coefficients) have a singular covariance, which drives the
    equicorrelated s to about twice the ridge and leaves knockoffs that
    are near-copies of the originals.
    """
    if method == "equi":
        return solve_s_equi(Sigma)
    if method == "sdp":
        return solve_s_sdp(Sigma, block=block)
    if method != "auto":
        raise ValueError(f"unknown s method {method!r}; expected 'auto', 'equi' or 'sdp'")
    s = solve_s_equi(Sigma)
    if np.min(s / np.diag(Sigma)) >= AUTO_EQUI_FLOOR:
        return s
    logger.info("equicorrelated s is %.2e; switching to the SDP solver", np.min(s / np.diag(Sigma)))
    return solve_s_sdp(Sigma, block=block)


def knockoffs_for(X, seed=0, method="auto", ridge=None, block=50):
    """Estimate moments, solve for s and sample knockoffs in one call.

    Returns ``(X_tilde, sampler)``.
    """
    X = np.asarray(X, dtype=float)
    mu, Sigma = estimate_moments(X)
    r = default_ridge(Sigma) if ridge is None else ridge
    Sigma[np.diag_indices_from(Sigma)] += r
    # constant columns get a unit placeholder variance; their knockoffs stay constant
    const = np.diag(Sigma) <= r * (1 + 1e-12)
    s = solve_s(Sigma, method, block)
    s[const] = 0.0
    sampler = fit_sampler(mu, Sigma, s, ridge=r)
    sampler.seed = int(seed)
    return sample_knockoffs(sampler, X, seed), sampler
