"""Wavelet features, model-X knockoff selection and sparse logistic classification for spectra."""

from .baselines import nb_fit, nb_predict, one_nn_predict, pca_fit_transform
from .dataset import (FoldPlan, LabelSet, SignalMatrix, load_dataset, make_folds, standardize)
from .filter import apply_knockoff_filter, importance_stats, knockoff_threshold
from .knockoff import (GaussianKnockoffSampler, fit_sampler, knockoffs_for, sample_knockoffs,
                       solve_s_equi, solve_s_sdp)
from .pipeline import (EvaluationReport, ExperimentConfig, SynthSpec, fdr_sweep,
                       misclassification_rate, run_experiment, synth_fdr_experiment,
                       synth_generate)
from .sparse_glm import SparseGlmFit, cross_validate_lambda, fit_cv, fit_lasso_logistic
from .wavelet import WaveletBasis, WaveletFeatures, coiflet24, dwt, idwt, reconstruct_masked

__version__ = "0.1.0"
