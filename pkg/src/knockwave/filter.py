"""Knockoff importance statistics and the data-adaptive selection threshold."""

import json
import os
from dataclasses import dataclass

import numpy as np

from .dataset import write_rows_atomic


@dataclass
class ImportanceStats:
    """``Z`` holds 2p scores (originals then knockoffs); ``W = Z[:p] - Z[p:]``."""

    Z: np.ndarray
    W: np.ndarray


@dataclass
class SelectionResult:
    threshold: float
    selected: np.ndarray
    fdp_estimate: float
    q: float
    W: np.ndarray = None
    plus: bool = True

    def to_csv(self, path):
        mask = np.zeros(self.W.size, dtype=int)
        mask[self.selected] = 1
        write_rows_atomic(path, ["feature_index", "W", "selected"],
                          ([j, repr(float(w)), int(m)] for j, (w, m) in enumerate(zip(self.W, mask))))

    def summary(self):
        return {"T": None if np.isinf(self.threshold) else float(self.threshold),
                "q": float(self.q), "n_selected": int(self.selected.size),
                "fdp_estimate": float(self.fdp_estimate), "plus": bool(self.plus)}

    def save(self, csv_path, json_path=None):
        self.to_csv(csv_path)
        json_path = json_path or os.path.splitext(csv_path)[0] + ".json"
        tmp = f"{json_path}.tmp{os.getpid()}"
        with open(tmp, "w") as fh:
            json.dump(self.summary(), fh, indent=2)
        os.replace(tmp, json_path)

    @classmethod
    def from_csv(cls, path, q=float("nan")):
        """Read a selection table; the ``.json`` summary next to it, if any, supplies T and q."""
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        W = table[:, 1]
        selected = np.flatnonzero(table[:, 2] > 0)
        T = W[selected].min() if selected.size else np.inf
        fdp, plus = float("nan"), True
        side = os.path.splitext(os.fspath(path))[0] + ".json"
        if os.path.exists(side):
            with open(side) as fh:
                meta = json.load(fh)
            T = np.inf if meta["T"] is None else meta["T"]
            q, fdp, plus = meta["q"], meta["fdp_estimate"], meta["plus"]
        return cls(float(T), selected, fdp, q, W, plus)


def importance_stats(coefs, p=None):
    """Sum-of-absolute-coefficient scores and their knockoff contrasts.

    Parameters
    ----------
    coefs : array, shape (2p,) or (C, 2p)
        Coefficients of the model fitted on ``[X, X_tilde]``; for a
        multinomial fit the absolute values are summed over classes.
    p : int, optional
        Number of original features (defaults to half the width).
    """
    coefs = np.atleast_2d(np.asarray(coefs, dtype=float))
    width = coefs.shape[1]
    if p is None:
        p = width // 2
    if width != 2 * p:
        raise ValueError(f"expected {2 * p} coefficients (p={p}), got {width}")
    Z = np.abs(coefs).sum(axis=0)
    return ImportanceStats(Z, Z[:p] - Z[p:])


def importance_from_fit(fit, lam, p=None):
    """:func:`importance_stats` evaluated at penalty ``lam`` of a path fit."""
    return importance_stats(fit.coef(lam), p)


def fdp_hat(W, t, plus=True):
    """``(plus + #{W <= -t}) / max(1, #{W >= t})``."""
    W = np.asarray(W)
    return ((1.0 if plus else 0.0) + np.sum(W <= -t)) / max(1, int(np.sum(W >= t)))


def knockoff_threshold(W, q, plus=True):
    """Smallest candidate ``t`` among the nonzero ``|W_j|`` with estimated FDP <= q."""
    W = np.asarray(W, dtype=float)
    cand = np.unique(np.abs(W[W != 0]))
    if cand.size == 0:
        return np.inf
    # counts for every candidate at once: sort once, then binary search
    srt = np.sort(W)
    n_pos = W.size - np.searchsorted(srt, cand, side="left")
    n_neg = np.searchsorted(srt, -cand, side="right")
    fdp = ((1.0 if plus else 0.0) + n_neg) / np.maximum(1, n_pos)
    ok = np.flatnonzero(fdp <= q)
    return float(cand[ok[0]]) if ok.size else np.inf


def apply_knockoff_filter(W, q=0.1, plus=True):
    """Select ``{j : W_j >= T}`` at target FDR ``q``.

    ``plus=True`` (default) uses the offset estimator
    ``(1 + #{W <= -t}) / #{W >= t}``; ``plus=False`` drops the ``1``.
    Returns a :class:`SelectionResult`; ``T = inf`` selects nothing.
    """
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    W = np.asarray(W, dtype=float)
    if not np.all(np.isfinite(W)):
        raise ValueError("W contains non-finite values")
    T = knockoff_threshold(W, q, plus)
    if np.isinf(T):
        return SelectionResult(np.inf, np.array([], dtype=int), 0.0, q, W, plus)
    selected = np.flatnonzero(W >= T)
    return SelectionResult(T, selected, fdp_hat(W, T, plus), q, W, plus)
