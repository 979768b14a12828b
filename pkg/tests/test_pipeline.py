import json

import numpy as np
import pytest
from conftest import peak_spectra

from knockwave.pipeline import (EvaluationReport, ExperimentConfig, SolverOptions, StageError,
                                SynthSpec, calibrate_amplitude, fdr_sweep, figure_data,
                                misclassification_rate, run_experiment, synth_fdr_experiment,
                                synth_generate, write_sweep)

FAST = {"cv_folds": 3, "path_length": 20, "path_ratio": 1e-2}


def small_config(**kw):
    base = {"task": "isolate-30", "representation": "raw-selected", "q": 0.2, "folds": 3,
            "seed": 4, "solver": dict(FAST)}
    base.update(kw)
    return ExperimentConfig.from_dict(base)


@pytest.fixture(scope="module")
def spectra():
    return peak_spectra(150, m=32, classes=3, seed=1, noise=0.3, height=0.8)


def test_misclassification_rate():
    assert misclassification_rate([1, 2, 3], [1, 2, 3]) == 0.0
    assert misclassification_rate([0, 0], [1, 1]) == 100.0
    assert misclassification_rate([0, 1, 0, 1], [0, 1, 1, 0]) == 50.0
    with pytest.raises(ValueError):
        misclassification_rate([1], [1, 2])
    with pytest.raises(ValueError):
        misclassification_rate([], [])


@pytest.mark.parametrize("bad", [
    {"folds": 1}, {"q": 0.0}, {"q": 1.0}, {"representation": "fourier"},
    {"classifier": "svm"}, {"representation": "pca-x"}, {"knockoff": {"method": "exact"}},
    {"solver": {"cv_folds": 1}},
])
def test_config_rejects_bad_values(bad):
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict(bad)


@pytest.mark.parametrize("bad", [{"foldz": 3}, {"knockoff": {"sdp": True}},
                                 {"solver": {"tolerance": 1}}])
def test_config_rejects_unknown_keys(bad):
    with pytest.raises(ValueError, match="unknown key"):
        ExperimentConfig.from_dict(bad)


def test_config_from_toml_and_json(tmp_path):
    (tmp_path / "c.toml").write_text(
        'task = "resistance-2"\nrepresentation = "pca-7"\nq = 0.05\n'
        '[knockoff]\nmethod = "sdp"\n[solver]\ncv_folds = 4\n')
    cfg = ExperimentConfig.from_file(tmp_path / "c.toml")
    assert cfg.representation == "pca" and cfg.pca_components == 7
    assert cfg.knockoff.method == "sdp" and cfg.solver.cv_folds == 4
    (tmp_path / "c.json").write_text(json.dumps({"q": 0.3}))
    assert ExperimentConfig.from_file(tmp_path / "c.json").q == 0.3


def test_synth_generate_deterministic_and_shaped():
    spec = SynthSpec(n=200, p=30, k=5, amplitude=5, seed=9)
    X, y, S = synth_generate(spec)
    X2, y2, S2 = synth_generate(spec)
    np.testing.assert_array_equal(X, X2)
    np.testing.assert_array_equal(y, y2)
    np.testing.assert_array_equal(S, S2)
    assert X.shape == (200, 30) and S.size == 5 and set(np.unique(y)) <= {0, 1}


def test_ar1_lag_one_correlation():
    X, _, _ = synth_generate(SynthSpec(n=20000, p=10, k=0, amplitude=0, rho=0.5, seed=2))
    lag = [np.corrcoef(X[:, j], X[:, j + 1])[0, 1] for j in range(9)]
    assert np.all(np.abs(np.array(lag) - 0.5) < 0.02)


def test_synth_spec_validation():
    with pytest.raises(ValueError):
        SynthSpec(k=200, p=100)
    with pytest.raises(ValueError):
        SynthSpec(rho=1.0)


def test_zero_amplitude_selections_are_false():
    res = synth_fdr_experiment(SynthSpec(n=300, p=20, k=0, amplitude=0, seed=3), q=0.2, reps=3,
                               solver=SolverOptions(**FAST))
    assert res.power == 0.0
    for fdp, n_sel in zip(res.fdp, res.n_selected):
        assert fdp == (1.0 if n_sel else 0.0)


def test_report_arithmetic_and_determinism(spectra, tmp_path):
    X, y = spectra
    rep = run_experiment(small_config(), X, y)
    assert len(rep.fold_errors) == 3
    assert rep.summary()["test_error_pct"] == pytest.approx(np.mean(rep.fold_errors))
    assert rep.summary()["sd"] == pytest.approx(np.std(rep.fold_errors, ddof=1))
    assert rep.input_features == [len(s) for s in rep.selected]
    assert all(nz <= f for nz, f in zip(rep.nonzero_coefficients, rep.input_features))
    # the peak region must beat chance (66.7% error for three classes)
    assert rep.error_mean < 20.0
    assert min(rep.input_features) > 0

    again = run_experiment(small_config(jobs=3), X, y)
    assert again.fold_errors == rep.fold_errors
    rep.write(tmp_path / "a")
    again.write(tmp_path / "b")
    for name in ("report.csv", "folds.csv", "report.md", "selected.json", "config.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert "jobs" not in json.loads((tmp_path / "a" / "config.json").read_text())


def _fold_fingerprint(rep, f):
    art = rep.artifacts[f]
    model = art["model"]
    coef = None if model is None else np.asarray(model["coef"])
    return art["columns"], coef


def test_no_leak_per_fold_knockoffs(spectra):
    X, y = spectra
    cfg = small_config(knockoff={"per_fold_knockoffs": True})
    base = run_experiment(cfg, X, y)
    from knockwave.dataset import make_folds
    te = make_folds(X.shape[0], cfg.folds, cfg.seed).test_index(0)
    X2 = X.copy()
    X2[te] = np.random.default_rng(0).normal(size=(te.size, X.shape[1])) * 10
    y2 = y.copy()
    y2[te] = (y2[te] + 1) % 3
    pert = run_experiment(cfg, X2, y2)
    c0, b0 = _fold_fingerprint(base, 0)
    c1, b1 = _fold_fingerprint(pert, 0)
    np.testing.assert_array_equal(c0, c1)
    np.testing.assert_array_equal(b0, b1)


def test_no_label_leak_shared_knockoffs(spectra):
    X, y = spectra
    cfg = small_config()
    base = run_experiment(cfg, X, y)
    from knockwave.dataset import make_folds
    te = make_folds(X.shape[0], cfg.folds, cfg.seed).test_index(1)
    y2 = y.copy()
    y2[te] = (y2[te] + 1) % 3
    pert = run_experiment(cfg, X, y2)
    c0, b0 = _fold_fingerprint(base, 1)
    c1, b1 = _fold_fingerprint(pert, 1)
    np.testing.assert_array_equal(c0, c1)
    np.testing.assert_array_equal(b0, b1)


@pytest.mark.parametrize("rep_,clf", [("raw", "naive-bayes"), ("raw", "1-nn"), ("pca-4", "lasso-LR")])
def test_other_representations_run(spectra, rep_, clf):
    X, y = spectra
    rep = run_experiment(small_config(representation=rep_, classifier=clf), X, y)
    assert len(rep.fold_errors) == 3
    assert rep.error_mean < 60.0
    if rep_.startswith("pca"):
        assert rep.input_features == [4, 4, 4]
        assert rep.label == "pca-4"


def test_stage_error_names_stage(spectra):
    X, y = spectra
    with pytest.raises(StageError) as info:
        run_experiment(small_config(representation="pca-200"), X, y)
    assert info.value.stage == "pca"


def test_fdr_sweep(spectra, tmp_path):
    X, y = spectra
    qs = [0.05, 0.2, 0.5]
    table = fdr_sweep(small_config(), qs, X, y)
    assert len(table) == len(qs) + 1
    assert table[-1]["q"] is None
    counts = [r["selected"] for r in table[:-1]]
    assert counts == sorted(counts)
    write_sweep(table, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0].startswith("q,") and lines[-1].startswith("lasso,")
    with pytest.raises(ValueError):
        fdr_sweep(small_config(), [], X, y)


def test_calibrate_amplitude_trail():
    spec = SynthSpec(n=300, p=20, k=5, seed=1)
    amp, trail = calibrate_amplitude(spec, [40, 0], q=0.2, reps=2, target_power=0.3,
                                     solver=SolverOptions(**FAST))
    assert [a for a, _, _ in trail] == [0.0, 40.0]
    assert trail[0][1] <= 0.3 < trail[1][1]
    assert amp == 40.0
    none, _ = calibrate_amplitude(spec, [0], q=0.2, reps=1, solver=SolverOptions(**FAST))
    assert none is None


def test_figure_data(tmp_path):
    X, _ = peak_spectra(40, m=100, seed=2)
    figure_data(X, None, tmp_path, selected=[0, 5, 40, 150], max_corr=20)
    for name in ("knockoff_signal.csv", "corr_original.csv", "corr_cross.csv",
                 "masked_reconstruction.csv"):
        assert (tmp_path / name).exists()
    R = np.loadtxt(tmp_path / "corr_original.csv", delimiter=",")
    assert R.shape == (20, 20)
    np.testing.assert_allclose(np.diag(R)[np.diag(R) != 0], 1.0)
    trace = np.loadtxt(tmp_path / "knockoff_signal.csv", delimiter=",", skiprows=1)
    assert trace.shape == (100, 3)


def test_report_markdown():
    rep = EvaluationReport("wavelet-selected", [5.0, 6.0], [130, 140], [100, 110],
                           [[1], [2]], [{}, {}])
    md = rep.markdown()
    assert "| wavelet-selected | 135 (7) | 105 (7) | 5.5 (0.7) |" in md
