"""``knockwave`` command-line interface.

Each subcommand wraps one library call.  Data go to files (or stdout for
short summaries); progress logs go to stderr.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import baselines, pipeline
from .dataset import ScalingStats, load_dataset, read_matrix_csv, save_signal_csv, standardize
from .filter import SelectionResult
from .knockoff import knockoffs_for
from .sparse_glm import SparseGlmFit, fit_cv, predict_classes
from .wavelet import WaveletBasis, WaveletFeatures, coiflet24, dwt, idwt

log = logging.getLogger("knockwave")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _write_json(path, obj):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
    os.replace(tmp, path)


def _resolve_seed(args, fallback=0):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("KNOCKWAVE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ValueError(f"KNOCKWAVE_SEED must be an integer, got {env!r}") from None
    return fallback


def _read_features(path, labelled):
    values, labels = read_matrix_csv(path, with_labels=labelled)
    return values, labels


def _cmd_ingest(args):
    signals, labels = load_dataset(args.input, args.task, header=args.header,
                                   labels_path=args.labels)
    tmp = f"{args.out}.tmp{os.getpid()}.npz"
    np.savez(tmp, values=signals.values, labels=labels.labels, axis=signals.axis)
    os.replace(tmp, args.out)
    counts = np.bincount(labels.labels, minlength=labels.n_classes)
    print(json.dumps({"rows": int(signals.values.shape[0]), "length": int(signals.values.shape[1]),
                      "task": args.task, "class_counts": counts.tolist()}))


def _cmd_dwt(args):
    if args.input.endswith(".npz"):
        with np.load(args.input) as z:
            values, labels = z["values"], z["labels"]
    else:
        values, labels = _read_features(args.input, not args.no_labels)
    basis = coiflet24(levels=args.levels, mode=args.mode)
    feats = dwt(values, basis)
    save_signal_csv(args.out, feats.coefficients, labels)
    names = list(feats.block_slices())
    _write_json(args.out + ".json", {"basis": basis.to_dict(),
                                     "level_lengths": list(feats.level_lengths),
                                     "blocks": dict(zip(names, feats.level_lengths)),
                                     "original_length": feats.original_length,
                                     "labelled": labels is not None})


def _cmd_idwt(args):
    with open(args.meta or args.input + ".json") as fh:
        meta = json.load(fh)
    values, labels = _read_features(args.input, meta.get("labelled", False))
    basis = WaveletBasis.from_dict(meta["basis"])
    feats = WaveletFeatures(values, tuple(meta["level_lengths"]), meta["original_length"])
    save_signal_csv(args.out, idwt(feats, basis), labels)


def _cmd_knockoffs(args):
    values, labels = _read_features(args.input, not args.no_labels)
    Xk, sampler = knockoffs_for(values, seed=_resolve_seed(args), method=args.method,
                                ridge=args.ridge, block=args.block)
    save_signal_csv(args.out, Xk, labels)
    if args.sampler:
        sampler.save(args.sampler)
    log.info("knockoffs: p=%d, sum(s)=%.4g, clipped=%d", sampler.p, sampler.s.sum(),
             sampler.n_clipped)


def _solver(args):
    return pipeline.SolverOptions(cv_folds=args.cv_folds)


def _cmd_select(args):
    X, y = _read_features(args.input, True)
    Xk, _ = _read_features(args.knockoffs, not args.no_labels)
    if Xk.shape != X.shape:
        raise ValueError(f"knockoff matrix {Xk.shape} does not match features {X.shape}")
    sel, _, cv = pipeline.select_features(X, Xk, y, args.q, _resolve_seed(args), _solver(args),
                                          not args.no_plus, jobs=args.jobs)
    sel.save(args.out)
    log.info("selected %d of %d features (T=%s, lambda*=%.4g)", sel.selected.size, X.shape[1],
             sel.summary()["T"], cv.lambda_star)


def _columns(path, p):
    if path is None:
        return np.arange(p)
    return SelectionResult.from_csv(path).selected


def _cmd_train(args):
    X, y = _read_features(args.input, True)
    cols = _columns(args.selection, X.shape[1])
    if cols.size == 0:
        # nothing selected: the best constant rule is the training majority class
        counts = np.bincount(y)
        _write_json(args.out, {"columns": [], "classifier": "majority",
                               "majority": int(np.argmax(counts)), "n_classes": int(counts.size)})
        log.warning("empty selection; stored a majority-class model")
        return
    Z, stats = standardize(X[:, cols])
    out = {"columns": cols.tolist(), "classifier": args.classifier,
           "scaling": {"mean": stats.mean.tolist(), "std": stats.std.tolist(),
                       "flagged": stats.flagged.tolist()},
           "n_classes": int(y.max()) + 1}
    if args.classifier == "lasso-LR":
        fit, cv = fit_cv(Z, y, k=args.cv_folds, seed=_resolve_seed(args), jobs=args.jobs)
        out["fit"] = fit.to_dict()
        out["lambda_star"] = cv.lambda_star
    elif args.classifier == "naive-bayes":
        out["model"] = baselines.nb_fit(Z, y).to_dict()
    else:
        out["train_X"] = Z.tolist()
        out["train_y"] = y.tolist()
    _write_json(args.out, out)


def _cmd_evaluate(args):
    with open(args.model) as fh:
        model = json.load(fh)
    X, y = _read_features(args.input, True)
    if model["classifier"] == "majority":
        pred = np.full(y.size, model["majority"])
        print(json.dumps({"test_error_pct": pipeline.misclassification_rate(pred, y),
                          "n": int(y.size)}))
        return
    sc = model["scaling"]
    stats = ScalingStats(np.asarray(sc["mean"]), np.asarray(sc["std"]),
                         np.asarray(sc["flagged"], dtype=bool))
    Z, _ = standardize(X[:, np.asarray(model["columns"], dtype=int)], stats)
    kind = model["classifier"]
    if kind == "lasso-LR":
        fit = SparseGlmFit.from_dict(model["fit"])
        _, pred = predict_classes(fit, model["lambda_star"], Z)
    elif kind == "naive-bayes":
        pred = baselines.nb_predict(baselines.NaiveBayesModel.from_dict(model["model"]), Z)
    else:
        pred = baselines.one_nn_predict(np.asarray(model["train_X"]),
                                        np.asarray(model["train_y"]), Z)
    err = pipeline.misclassification_rate(pred, y)
    if args.predictions:
        from .dataset import write_rows_atomic
        write_rows_atomic(args.predictions, ["index", "predicted", "true"],
                          ([i, int(p), int(t)] for i, (p, t) in enumerate(zip(pred, y))))
    print(json.dumps({"test_error_pct": err, "n": int(y.size)}))


def _config(args):
    cfg = pipeline.ExperimentConfig.from_file(args.config)
    if args.seed is not None or "KNOCKWAVE_SEED" in os.environ:
        cfg.seed = _resolve_seed(args)
    if args.q is not None:
        cfg.q = args.q
    cfg.jobs = args.jobs
    cfg.validate()
    return cfg


def _cmd_pipeline(args):
    report = pipeline.run_experiment(_config(args))
    report.write(args.out)
    sys.stdout.write(report.markdown())


def _cmd_sweep(args):
    cfg = _config(args)
    qs = [float(q) for q in args.qs.split(",") if q.strip()]
    table = pipeline.fdr_sweep(cfg, qs)
    pipeline.write_sweep(table, args.out)


def _cmd_synth_fdr(args):
    spec = pipeline.SynthSpec(n=args.n, p=args.p, k=args.k, amplitude=args.amplitude,
                              rho=args.rho, seed=_resolve_seed(args))
    q = 0.10 if args.q is None else args.q
    out = {}
    if args.calibrate:
        grid = [float(a) for a in args.calibrate.split(",")]
        amp, trail = pipeline.calibrate_amplitude(spec, grid, q=q, reps=args.calibration_reps,
                                                  jobs=args.jobs)
        out["calibration"] = [{"amplitude": a, "power": p, "fdr": f} for a, p, f in trail]
        if amp is None:
            raise RuntimeError("no amplitude in the grid reached power 0.5")
        spec.amplitude = amp
    res = pipeline.synth_fdr_experiment(spec, q, args.reps, method=args.method, jobs=args.jobs)
    out.update({"amplitude": spec.amplitude, "q": q, "reps": args.reps, "fdr": res.fdr,
                "fdr_se": res.fdr_se(), "power": res.power, "fdp": res.fdp,
                "n_selected": res.n_selected})
    if args.out:
        _write_json(args.out, out)
    print(json.dumps({k: out[k] for k in ("amplitude", "fdr", "fdr_se", "power")}))


def build_parser():
    p = _Parser(prog="knockwave", description="Wavelet features, knockoff selection and "
                                              "sparse logistic classification of spectra.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)
    sub.required = True

    def common(sp, q=False):
        sp.add_argument("--seed", type=int, default=None,
                        help="random seed (fallback: $KNOCKWAVE_SEED, then 0)")
        sp.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                        help="worker threads (default: available cores)")
        if q:
            sp.add_argument("--q", type=float, default=None, help="target FDR (default 0.10)")

    sp = sub.add_parser("ingest", help="validate a spectra CSV and store it as .npz")
    sp.add_argument("--input", required=True)
    sp.add_argument("--task", default="isolate-30")
    sp.add_argument("--labels", default=None, help="sidecar file, one integer label per line")
    sp.add_argument("--header", action="store_true", help="skip a header row")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=_cmd_ingest)

    sp = sub.add_parser("dwt", help="wavelet coefficients of each spectrum")
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--levels", type=int, default=5)
    sp.add_argument("--mode", default="symmetric", choices=["symmetric", "periodization"])
    sp.add_argument("--no-labels", action="store_true", help="input has no label column")
    sp.set_defaults(func=_cmd_dwt)

    sp = sub.add_parser("idwt", help="signals from wavelet coefficients")
    sp.add_argument("--input", required=True)
    sp.add_argument("--meta", default=None, help="sidecar JSON (default: INPUT.json)")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=_cmd_idwt)

    sp = sub.add_parser("knockoffs", help="Gaussian knockoff copies of a feature matrix")
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--method", default="auto", choices=["auto", "equi", "sdp"])
    sp.add_argument("--ridge", type=float, default=None)
    sp.add_argument("--block", type=int, default=50)
    sp.add_argument("--sampler", default=None, help="also save the sampler (.npz)")
    sp.add_argument("--no-labels", action="store_true")
    common(sp)
    sp.set_defaults(func=_cmd_knockoffs)

    sp = sub.add_parser("select", help="knockoff filter on features and their knockoffs")
    sp.add_argument("--input", required=True, help="labelled feature CSV")
    sp.add_argument("--knockoffs", required=True)
    sp.add_argument("--out", required=True, help="selection CSV (a .json summary is written too)")
    sp.add_argument("--cv-folds", type=int, default=10)
    sp.add_argument("--no-plus", action="store_true", help="drop the +1 offset")
    sp.add_argument("--no-labels", action="store_true", help="knockoff CSV has no label column")
    common(sp, q=True)
    sp.set_defaults(func=lambda a: _cmd_select(_default_q(a)))

    sp = sub.add_parser("train", help="fit a classifier on (selected) features")
    sp.add_argument("--input", required=True)
    sp.add_argument("--selection", default=None, help="selection CSV from 'select'")
    sp.add_argument("--classifier", default="lasso-LR", choices=list(pipeline.CLASSIFIERS))
    sp.add_argument("--cv-folds", type=int, default=10)
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=_cmd_train)

    sp = sub.add_parser("evaluate", help="test error of a trained model")
    sp.add_argument("--model", required=True)
    sp.add_argument("--input", required=True)
    sp.add_argument("--predictions", default=None)
    sp.set_defaults(func=_cmd_evaluate)

    sp = sub.add_parser("pipeline", help="full cross-fitted experiment from a config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", required=True)
    common(sp, q=True)
    sp.set_defaults(func=_cmd_pipeline)

    sp = sub.add_parser("sweep", help="selection size and test error across FDR levels")
    sp.add_argument("--config", required=True)
    sp.add_argument("--qs", default="0.01,0.05,0.1,0.2,0.3,0.5")
    sp.add_argument("--out", required=True)
    common(sp, q=True)
    sp.set_defaults(func=_cmd_sweep)

    sp = sub.add_parser("synth-fdr", help="FDR and power on synthetic logistic data")
    sp.add_argument("--n", type=int, default=800)
    sp.add_argument("--p", type=int, default=100)
    sp.add_argument("--k", type=int, default=20)
    sp.add_argument("--amplitude", type=float, default=10.0)
    sp.add_argument("--rho", type=float, default=0.5)
    sp.add_argument("--reps", type=int, default=100)
    sp.add_argument("--method", default="auto", choices=["auto", "equi", "sdp"])
    sp.add_argument("--calibrate", default=None,
                    help="comma-separated amplitude grid; use the smallest with power > 0.5")
    sp.add_argument("--calibration-reps", type=int, default=10)
    sp.add_argument("--out", default=None)
    common(sp, q=True)
    sp.set_defaults(func=_cmd_synth_fdr)
    return p


def _default_q(args):
    if args.q is None:
        args.q = 0.10
    return args


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:
        log.debug("traceback", exc_info=True)
        print(f"knockwave {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
