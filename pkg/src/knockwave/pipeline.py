"""
Experiment harness: the task x representation grid, FDR-level sweeps, and a
synthetic logistic design on which the FDR guarantee can be checked.

Every randomised step takes its seed from the experiment seed, so a config
always reproduces the same report.
"""

import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import baselines
from .dataset import (SignalMatrix, load_dataset, make_folds, standardize, write_rows_atomic)
from .filter import apply_knockoff_filter, importance_from_fit
from .knockoff import knockoffs_for
from .sparse_glm import fit_cv, predict_classes
from .wavelet import WaveletFeatures, coiflet24, dwt, idwt, reconstruct_masked

logger = logging.getLogger(__name__)

REPRESENTATIONS = ("raw", "raw-selected", "wavelet", "wavelet-selected", "pca")
CLASSIFIERS = ("lasso-LR", "naive-bayes", "1-nn")


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name and fold index."""

    def __init__(self, stage, fold, cause):
        super().__init__(f"stage {stage!r} failed on fold {fold}: {cause}")
        self.stage = stage
        self.fold = fold


@dataclass
class KnockoffOptions:
    method: str = "auto"
    ridge: float = None
    block: int = 50
    plus: bool = True
    per_fold_knockoffs: bool = False


@dataclass
class SolverOptions:
    cv_folds: int = 10
    path_length: int = 100
    path_ratio: float = 1e-4
    tol: float = 1e-10


@dataclass
class ExperimentConfig:
    task: str = "isolate-30"
    representation: str = "wavelet-selected"
    classifier: str = "lasso-LR"
    q: float = 0.10
    folds: int = 5
    seed: int = 0
    data: str = None
    labels: str = None
    header: bool = False
    label_map: dict = None
    pca_components: object = None
    jobs: int = 1
    knockoff: KnockoffOptions = field(default_factory=KnockoffOptions)
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if isinstance(self.knockoff, dict):
            self.knockoff = _strict(KnockoffOptions, self.knockoff, "knockoff")
        if isinstance(self.solver, dict):
            self.solver = _strict(SolverOptions, self.solver, "solver")
        self.validate()

    def validate(self):
        rep = self.representation
        if rep.startswith("pca-"):
            try:
                self.pca_components = int(rep.split("-", 1)[1])
            except ValueError:
                raise ValueError(f"bad PCA representation {rep!r}; use 'pca-<k>'") from None
            self.representation = rep = "pca"
        if rep not in REPRESENTATIONS:
            raise ValueError(f"unknown representation {rep!r}; expected one of {REPRESENTATIONS}")
        if self.classifier not in CLASSIFIERS:
            raise ValueError(f"unknown classifier {self.classifier!r}; expected one of {CLASSIFIERS}")
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"q must lie in (0, 1), got {self.q}")
        if int(self.folds) < 2:
            raise ValueError(f"folds must be at least 2, got {self.folds}")
        if self.solver.cv_folds < 2:
            raise ValueError("solver.cv_folds must be at least 2")
        if self.knockoff.method not in ("auto", "equi", "sdp"):
            raise ValueError(f"unknown knockoff method {self.knockoff.method!r}")

    @property
    def selects(self):
        return self.representation.endswith("-selected")

    @property
    def base(self):
        return "wavelet" if self.representation.startswith("wavelet") else "raw"

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return _strict(cls, d, "config")

    @classmethod
    def from_file(cls, path):
        if str(path).endswith(".toml"):
            if sys.version_info >= (3, 11):
                import tomllib
            else:
                import tomli as tomllib
            with open(path, "rb") as fh:
                d = tomllib.load(fh)
        else:
            with open(path) as fh:
                d = json.load(fh)
        return cls.from_dict(d)


def _strict(cls, d, where):
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown key(s) in {where}: {sorted(unknown)}")
    return cls(**d)


@dataclass
class EvaluationReport:
    label: str
    fold_errors: list
    input_features: list
    nonzero_coefficients: list
    selected: list
    timings: list
    config: dict = None
    artifacts: list = field(default_factory=list, repr=False)

    @staticmethod
    def _ms(values):
        v = np.asarray(values, dtype=float)
        return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0

    @property
    def error_mean(self):
        return self._ms(self.fold_errors)[0]

    @property
    def error_sd(self):
        return self._ms(self.fold_errors)[1]

    def summary(self):
        fm, fs = self._ms(self.input_features)
        nm, ns = self._ms(self.nonzero_coefficients)
        em, es = self._ms(self.fold_errors)
        return {"input": self.label, "input_features": fm, "input_features_sd": fs,
                "nonzero_coefficients": nm, "nonzero_coefficients_sd": ns,
                "test_error_pct": em, "sd": es}

    def table_row(self):
        s = self.summary()
        return [s["input"]] + [repr(s[k]) for k in
                               ("input_features", "nonzero_coefficients", "test_error_pct", "sd")]

    def markdown(self):
        s = self.summary()
        return (
            "| Input | Input features | Nonzero coefficients | Test error (%) |\n"
            "|---|---|---|---|\n"
            f"| {s['input']} | {s['input_features']:.0f} ({s['input_features_sd']:.0f}) "
            f"| {s['nonzero_coefficients']:.0f} ({s['nonzero_coefficients_sd']:.0f}) "
            f"| {s['test_error_pct']:.1f} ({s['sd']:.1f}) |\n")

    def write(self, out_dir):
        """Write ``report.csv``, ``report.md``, ``folds.csv``, ``selected.json`` and ``timings.json``.

        Timings live in their own file so the other outputs are reproducible byte for byte.
        """
        os.makedirs(out_dir, exist_ok=True)
        write_rows_atomic(os.path.join(out_dir, "report.csv"),
                          ["input", "input_features", "nonzero_coefficients", "test_error_pct", "sd"],
                          [self.table_row()])
        write_rows_atomic(os.path.join(out_dir, "folds.csv"),
                          ["fold", "input_features", "nonzero_coefficients", "test_error_pct"],
                          [[f, a, b, repr(float(e))] for f, (a, b, e) in
                           enumerate(zip(self.input_features, self.nonzero_coefficients,
                                         self.fold_errors))])
        _write_text(os.path.join(out_dir, "report.md"), self.markdown())
        _write_text(os.path.join(out_dir, "selected.json"),
                    json.dumps([None if s is None else [int(j) for j in s] for s in self.selected]))
        _write_text(os.path.join(out_dir, "timings.json"), json.dumps(self.timings, indent=2))
        if self.config is not None:
            # worker count never changes results, so it is left out of the echo
            echo = {k: v for k, v in self.config.items() if k != "jobs"}
            _write_text(os.path.join(out_dir, "config.json"),
                        json.dumps(echo, indent=2, sort_keys=True))


def _write_text(path, text):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def misclassification_rate(predicted, truth):
    """Percentage of mismatched labels."""
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise ValueError(f"length mismatch: {predicted.shape} vs {truth.shape}")
    if truth.size == 0:
        raise ValueError("empty label vectors")
    return 100.0 * np.count_nonzero(predicted != truth) / truth.size


# ---------------------------------------------------------------------------
# experiment stages
# ---------------------------------------------------------------------------

def _seed(*parts):
    """Deterministic 32-bit seed from integers."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def base_features(signals, base):
    X = signals.values if isinstance(signals, SignalMatrix) else np.asarray(signals, dtype=float)
    if base == "wavelet":
        return dwt(X).coefficients
    return X


def select_features(F_train, Xk_train, y_train, q, seed, solver=None, plus=True, jobs=1):
    """Knockoff filter on one training split.

    Standardises ``[F, F_tilde]`` on the training rows, cross-validates the
    logistic lasso and thresholds ``W`` at the chosen penalty.  Returns
    ``(SelectionResult, fit, cv)``.
    """
    solver = solver or SolverOptions()
    p = F_train.shape[1]
    aug, _ = standardize(np.hstack([F_train, Xk_train]))
    fit, cv = fit_cv(aug, y_train, k=solver.cv_folds, seed=seed, jobs=jobs,
                     path_length=solver.path_length, path_ratio=solver.path_ratio, tol=solver.tol)
    W = importance_from_fit(fit, cv.lambda_star, p).W
    return apply_knockoff_filter(W, q, plus), fit, cv


def train_and_test(F_train, y_train, F_test, classifier="lasso-LR", seed=0, solver=None,
                   n_classes=None, jobs=1):
    """Fit one classifier on training columns and predict the test rows.

    Returns ``(predictions, nonzero_coefficients, model)``.
    """
    solver = solver or SolverOptions()
    C = int(max(y_train.max() + 1, n_classes or 0))
    if F_train.shape[1] == 0:
        counts = np.bincount(y_train, minlength=C)
        return np.full(F_test.shape[0], int(np.argmax(counts))), 0, None
    Ztr, stats = standardize(F_train)
    Zte, _ = standardize(F_test, stats)
    if classifier == "lasso-LR":
        fit, cv = fit_cv(Ztr, y_train, k=solver.cv_folds, seed=seed, n_classes=C, jobs=jobs,
                         path_length=solver.path_length, path_ratio=solver.path_ratio,
                         tol=solver.tol)
        _, pred = predict_classes(fit, cv.lambda_star, Zte)
        model = {"coef": fit.coef(cv.lambda_star), "intercept": fit.intercept(cv.lambda_star),
                 "lambda": cv.lambda_star, "scaling": stats}
        return pred, int(fit.nonzero_features(cv.lambda_star).size), model
    if classifier == "naive-bayes":
        model = baselines.nb_fit(Ztr, y_train, n_classes=C)
        return baselines.nb_predict(model, Zte), Ztr.shape[1], model
    if classifier == "1-nn":
        return baselines.one_nn_predict(Ztr, y_train, Zte), Ztr.shape[1], {"scaling": stats}
    raise ValueError(f"unknown classifier {classifier!r}")


def _resolve_data(config, signals, labels):
    if signals is None:
        if config.data is None:
            raise ValueError("no data: pass arrays or set 'data' in the config")
        signals, labelset = load_dataset(config.data, config.task, header=config.header,
                                         labels_path=config.labels, label_map=config.label_map)
        labels = labelset.labels
    X = signals.values if isinstance(signals, SignalMatrix) else np.asarray(signals, dtype=float)
    y = np.asarray(getattr(labels, "labels", labels), dtype=int)
    if y.shape != (X.shape[0],):
        raise ValueError("labels do not match the number of spectra")
    return X, y


def _shared_knockoffs(F, config):
    ko = config.knockoff
    Xk, _ = knockoffs_for(F, seed=_seed(config.seed, 1), method=ko.method, ridge=ko.ridge,
                          block=ko.block)
    return Xk


def _fold_knockoffs(F, Xk, tr, config, fold):
    if Xk is not None:
        return Xk[tr]
    ko = config.knockoff
    return knockoffs_for(F[tr], seed=_seed(config.seed, 1, fold), method=ko.method,
                         ridge=ko.ridge, block=ko.block)[0]


def _run_folds(n_folds, job, jobs):
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(job, range(n_folds)))
    return [job(f) for f in range(n_folds)]


def run_experiment(config, signals=None, labels=None):
    """Cross-fitted evaluation of one representation/classifier pair.

    For each outer fold: (optionally) select features with the knockoff
    filter on the training rows, standardise with training statistics, fit
    the classifier (penalty tuned by inner CV) and score the held-out fold.

    Returns an :class:`EvaluationReport`.
    """
    if isinstance(config, dict):
        config = ExperimentConfig.from_dict(config)
    config.validate()
    X, y = _resolve_data(config, signals, labels)
    n_classes = int(y.max()) + 1
    plan = make_folds(X.shape[0], config.folds, config.seed)

    pca_k = config.pca_components
    if config.representation == "pca" and pca_k is None:
        matched = ExperimentConfig(**{**config.to_dict(), "representation": "wavelet-selected",
                                      "classifier": "lasso-LR", "pca_components": None})
        pca_k = run_experiment(matched, X, y).input_features
        logger.info("PCA components matched to wavelet selections: %s", pca_k)
    if pca_k is not None and np.isscalar(pca_k):
        pca_k = [int(pca_k)] * config.folds

    F = base_features(X, config.base) if config.representation != "pca" else X
    Xk = None
    if config.selects and not config.knockoff.per_fold_knockoffs:
        t0 = time.perf_counter()
        try:
            Xk = _shared_knockoffs(F, config)
        except Exception as exc:
            raise StageError("knockoffs", -1, exc) from exc
        logger.info("knockoffs generated in %.1fs", time.perf_counter() - t0)

    def one_fold(f):
        tr, te = plan.train_index(f), plan.test_index(f)
        timing = {}
        stage = "selection"
        try:
            t0 = time.perf_counter()
            cols = None
            if config.selects:
                Xk_tr = _fold_knockoffs(F, Xk, tr, config, f)
                sel, _, _ = select_features(F[tr], Xk_tr, y[tr], config.q, _seed(config.seed, 2, f),
                                            config.solver, config.knockoff.plus)
                cols = sel.selected
                Ftr, Fte = F[tr][:, cols], F[te][:, cols]
            elif config.representation == "pca":
                stage = "pca"
                model, Ftr = baselines.pca_fit_transform(X[tr], pca_k[f])
                Fte = model.transform(X[te])
            else:
                Ftr, Fte = F[tr], F[te]
            timing["selection"] = time.perf_counter() - t0
            stage = "classifier"
            t0 = time.perf_counter()
            pred, nnz, model = train_and_test(Ftr, y[tr], Fte, config.classifier,
                                              _seed(config.seed, 3, f), config.solver, n_classes)
            timing["classifier"] = time.perf_counter() - t0
        except StageError:
            raise
        except Exception as exc:
            raise StageError(stage, f, exc) from exc
        err = misclassification_rate(pred, y[te])
        logger.info("fold %d: %d features, %d nonzero, error %.2f%%", f, Ftr.shape[1], nnz, err)
        return err, Ftr.shape[1], nnz, cols, timing, {"columns": cols, "model": model}

    results = _run_folds(config.folds, one_fold, config.jobs)
    label = config.representation
    if label == "pca":
        label = f"pca-{pca_k[0]}" if len(set(pca_k)) == 1 else "pca-matched"
    if config.classifier != "lasso-LR":
        label = f"{config.classifier}:{label}"
    return EvaluationReport(
        label=label,
        fold_errors=[r[0] for r in results],
        input_features=[int(r[1]) for r in results],
        nonzero_coefficients=[int(r[2]) for r in results],
        selected=[r[3] for r in results],
        timings=[r[4] for r in results],
        config=config.to_dict(),
        artifacts=[r[5] for r in results],
    )


def fdr_sweep(config, q_list, signals=None, labels=None):
    """Test error and selection size across FDR levels, plus an unfiltered lasso row.

    Folds, knockoffs and the augmented fit (hence ``W``) are shared across
    levels.  Returns a list of dicts with keys ``q`` (``None`` for the
    baseline), ``selected``, ``selected_sd``, ``test_error_pct``, ``sd``.
    """
    if isinstance(config, dict):
        config = ExperimentConfig.from_dict(config)
    q_list = [float(q) for q in q_list]
    if not q_list:
        raise ValueError("q list is empty")
    for q in q_list:
        if not 0.0 < q < 1.0:
            raise ValueError(f"q must lie in (0, 1), got {q}")
    if config.representation == "pca":
        raise ValueError("the sweep needs a raw or wavelet representation")
    X, y = _resolve_data(config, signals, labels)
    n_classes = int(y.max()) + 1
    plan = make_folds(X.shape[0], config.folds, config.seed)
    F = base_features(X, config.base)
    Xk = None if config.knockoff.per_fold_knockoffs else _shared_knockoffs(F, config)

    def one_fold(f):
        tr, te = plan.train_index(f), plan.test_index(f)
        Xk_tr = _fold_knockoffs(F, Xk, tr, config, f)
        first, _, _ = select_features(F[tr], Xk_tr, y[tr], q_list[0], _seed(config.seed, 2, f),
                                      config.solver, config.knockoff.plus)
        rows = []
        for q in q_list:
            sel = apply_knockoff_filter(first.W, q, config.knockoff.plus)
            cols = sel.selected
            pred, _, _ = train_and_test(F[tr][:, cols], y[tr], F[te][:, cols], config.classifier,
                                        _seed(config.seed, 3, f), config.solver, n_classes)
            rows.append((cols.size, misclassification_rate(pred, y[te])))
        pred, nnz, _ = train_and_test(F[tr], y[tr], F[te], config.classifier,
                                      _seed(config.seed, 3, f), config.solver, n_classes)
        rows.append((nnz, misclassification_rate(pred, y[te])))
        return rows

    per_fold = np.array(_run_folds(config.folds, one_fold, config.jobs), dtype=float)
    table = []
    for i, q in enumerate(q_list + [None]):
        counts, errs = per_fold[:, i, 0], per_fold[:, i, 1]
        table.append({"q": q, "selected": float(counts.mean()),
                      "selected_sd": float(counts.std(ddof=1)),
                      "test_error_pct": float(errs.mean()), "sd": float(errs.std(ddof=1))})
    return table


def write_sweep(table, path):
    write_rows_atomic(path, ["q", "selected", "selected_sd", "test_error_pct", "sd"],
                      [["lasso" if r["q"] is None else r["q"], r["selected"], r["selected_sd"],
                        r["test_error_pct"], r["sd"]] for r in table])


# ---------------------------------------------------------------------------
# synthetic validation
# ---------------------------------------------------------------------------

@dataclass
class SynthSpec:
    n: int = 800
    p: int = 100
    k: int = 20
    amplitude: float = 10.0
    rho: float = 0.5
    link: str = "logistic"
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.k <= self.p:
            raise ValueError("support size k must lie in [0, p]")
        if not abs(self.rho) < 1:
            raise ValueError("|rho| must be < 1")
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")
        if self.link != "logistic":
            raise ValueError("only the logistic link is supported")
        if self.n < 2 or self.p < 1:
            raise ValueError("need n >= 2 and p >= 1")


def ar1_covariance(p, rho):
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def synth_generate(spec):
    """Gaussian AR(1) design with a sparse logistic response.

    Returns ``(X, y, support)``; ``support`` is sorted.
    """
    rng = np.random.default_rng(spec.seed)
    Z = rng.standard_normal((spec.n, spec.p))
    X = np.empty_like(Z)
    X[:, 0] = Z[:, 0]
    c = np.sqrt(1.0 - spec.rho ** 2)
    for j in range(1, spec.p):
        X[:, j] = spec.rho * X[:, j - 1] + c * Z[:, j]
    support = np.sort(rng.choice(spec.p, size=spec.k, replace=False))
    beta = np.zeros(spec.p)
    beta[support] = rng.choice([-1.0, 1.0], size=spec.k) * spec.amplitude / np.sqrt(spec.n)
    prob = 1.0 / (1.0 + np.exp(-(X @ beta)))
    y = (rng.random(spec.n) < prob).astype(int)
    return X, y, support


@dataclass
class SynthResult:
    fdr: float
    power: float
    fdp: list
    powers: list
    n_selected: list
    W: list = field(default_factory=list, repr=False)

    def fdr_se(self):
        f = np.asarray(self.fdp)
        return float(f.std(ddof=1) / np.sqrt(f.size)) if f.size > 1 else 0.0


def synth_rep(spec, q=0.1, method="auto", plus=True, solver=None):
    """One replicate: data, knockoffs, augmented lasso, filter.

    Returns ``(fdp, power, n_selected, W)``.
    """
    X, y, support = synth_generate(spec)
    if np.unique(y).size < 2:
        return 0.0, 0.0, 0, np.zeros(spec.p)
    Xk, _ = knockoffs_for(X, seed=_seed(spec.seed, 11), method=method)
    sel, _, _ = select_features(X, Xk, y, q, _seed(spec.seed, 12), solver, plus)
    S = set(support.tolist())
    chosen = set(sel.selected.tolist())
    false = len(chosen - S)
    fdp = false / max(1, len(chosen))
    power = len(chosen & S) / spec.k if spec.k else 0.0
    return fdp, power, len(chosen), sel.W


def synth_fdr_experiment(spec, q=0.1, reps=100, method="auto", plus=True, solver=None, jobs=1):
    """Monte-Carlo FDR and power of the full knockoff pipeline.

    Replicate ``r`` uses data seed derived from ``(spec.seed, r)``.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")

    def one(r):
        s = SynthSpec(**{**asdict(spec), "seed": _seed(spec.seed, 10, r)})
        return synth_rep(s, q, method, plus, solver)

    out = _run_folds(reps, one, jobs)
    fdp = [o[0] for o in out]
    pw = [o[1] for o in out]
    return SynthResult(float(np.mean(fdp)), float(np.mean(pw)), fdp, pw, [o[2] for o in out],
                       [o[3] for o in out])


def calibrate_amplitude(spec, amplitudes, q=0.1, reps=10, target_power=0.5, **kw):
    """Smallest amplitude whose replicate-mean power exceeds ``target_power``.

    Calibration replicates use seeds disjoint from :func:`synth_fdr_experiment`'s
    (offset by 10**6).  Returns ``(amplitude or None, [(amplitude, power, fdr), ...])``.
    """
    trail = []
    for a in sorted(amplitudes):
        s = SynthSpec(**{**asdict(spec), "amplitude": float(a), "seed": spec.seed + 10 ** 6})
        res = synth_fdr_experiment(s, q, reps, **kw)
        trail.append((float(a), res.power, res.fdr))
        logger.info("amplitude %.2f: power %.3f, FDR %.3f", a, res.power, res.fdr)
        if res.power > target_power:
            return float(a), trail
    return None, trail


# ---------------------------------------------------------------------------
# figure data
# ---------------------------------------------------------------------------

def figure_data(signals, labels, out_dir, sample=0, selected=None, seed=0, max_corr=None):
    """CSV traces behind the signal/knockoff, correlation and reconstruction figures.

    Writes ``knockoff_signal.csv`` (sample spectrum and the IDWT of its
    knockoff wavelet row), ``corr_original.csv`` and ``corr_cross.csv``
    (correlations of wavelet features and original-vs-knockoff
    cross-correlations, first ``max_corr`` features), and, when ``selected``
    wavelet indices are given, ``masked_reconstruction.csv`` with one
    column per wavelet block.
    """
    os.makedirs(out_dir, exist_ok=True)
    sm = signals if isinstance(signals, SignalMatrix) else SignalMatrix(signals)
    basis = coiflet24()
    feats = dwt(sm.values, basis)
    Xk, _ = knockoffs_for(feats.coefficients, seed=seed)
    ko_signal = idwt(WaveletFeatures(Xk[sample], feats.level_lengths, feats.original_length), basis)
    write_rows_atomic(os.path.join(out_dir, "knockoff_signal.csv"),
                      ["wavenumber", "signal", "knockoff_signal"],
                      zip(sm.axis, sm.values[sample], ko_signal))

    m = feats.total if max_corr is None else min(max_corr, feats.total)
    Z = np.hstack([feats.coefficients[:, :m], Xk[:, :m]])
    Z = Z - Z.mean(axis=0)
    sd = Z.std(axis=0)
    sd[sd == 0] = 1.0
    R = (Z.T @ Z) / Z.shape[0] / np.outer(sd, sd)
    write_rows_atomic(os.path.join(out_dir, "corr_original.csv"), None, R[:m, :m].tolist())
    write_rows_atomic(os.path.join(out_dir, "corr_cross.csv"), None, R[:m, m:].tolist())

    if selected is not None:
        one = WaveletFeatures(feats.coefficients[sample], feats.level_lengths,
                              feats.original_length)
        cols, names = [], []
        for name, sl in one.block_slices().items():
            idx = [j for j in selected if sl.start <= j < sl.stop]
            cols.append(reconstruct_masked(one, idx, basis))
            names.append(name)
        write_rows_atomic(os.path.join(out_dir, "masked_reconstruction.csv"),
                          ["wavenumber", "signal"] + names,
                          zip(sm.axis, sm.values[sample], *cols))
