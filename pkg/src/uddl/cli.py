"""Command-line pipeline: synth, adapt, eval, pipeline.

Every command is a pure function of its input files, flags and seed; re-runs
write identical bytes. Failures map to exit codes 2 (format), 3
(shape/consistency), 4 (numeric) and 5 (sampling protocol). The default
seed comes from the UDDL_SEED environment variable when set.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import figures as figmod
from .adapt import adapt_fit
from .data import (
    FeatureMatrix,
    SynthSpec,
    load_features,
    save_features,
    synth_domain_pair,
)
from .errors import ConfigError, FormatError, ShapeError, UddlError
from .experiment import BASELINES, EvalOptions, run_eval
from .ksvd import KsvdConfig
from .model_io import AdaptedModel, load_model, model_from_fit, save_model
from .report import TrialReport, format_report, write_report

# config keys excluded from the report echo: execution details that cannot
# change any report content
_ECHO_SKIP = ("jobs",)


def _env_seed() -> int:
    return int(os.environ.get("UDDL_SEED", "0"))


# ---------------------------------------------------------------- synth


def _mean_shift_check(source, source_images, target, target_images) -> bool:
    """Do per-class feature means differ only by sampling noise?"""
    ok = True
    for c in range(source_images.num_classes):
        src_cols = np.concatenate(
            [np.arange(source_images.starts[i], source_images.starts[i] + source_images.lengths[i])
             for i in np.flatnonzero(source_images.labels == c)]
        )
        tgt_cols = np.concatenate(
            [np.arange(target_images.starts[i], target_images.starts[i] + target_images.lengths[i])
             for i in np.flatnonzero(target_images.labels == c)]
        )
        src = source.values[:, src_cols]
        tgt = target.values[:, tgt_cols]
        diff = np.linalg.norm(src.mean(axis=1) - tgt.mean(axis=1))
        stderr_sq = src.var(axis=1) / src.shape[1] + tgt.var(axis=1) / tgt.shape[1]
        bound = 4.0 * np.sqrt(stderr_sq.sum())
        passed = diff <= bound
        ok = ok and passed
        print(f"mean-shift check: class {c}: |mean_s - mean_t| = {diff:.5f} "
              f"(bound {bound:.5f}) {'OK' if passed else 'FAIL'}")
    return ok


def cmd_synth(args) -> int:
    spec = SynthSpec(
        dim=args.dim,
        atoms=args.atoms,
        classes=args.classes,
        images_per_class=args.images_per_class,
        features_per_image=args.features_per_image,
        sparsity=args.synth_sparsity,
        shift_strength=args.shift_strength,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
    )
    (src, src_images), (tgt, tgt_images), truth = synth_domain_pair(spec)
    save_features(src, src_images, args.source)
    save_features(tgt, tgt_images, args.target)
    if args.truth:
        save_features(FeatureMatrix(truth.atoms), None, args.truth)
    for key, value in vars(spec).items():
        print(f"synth {key} = {value}")
    print(f"wrote {args.source} ({src.dim}x{src.count}) and {args.target} ({tgt.dim}x{tgt.count})")
    if args.check:
        if not _mean_shift_check(src, src_images, tgt, tgt_images):
            print("mean-shift check failed", file=sys.stderr)
            return 4
    return 0


# ---------------------------------------------------------------- adapt


def cmd_adapt(args) -> int:
    source, src_images = load_features(args.source)
    target, tgt_images = load_features(args.target)
    config = KsvdConfig(
        num_atoms=args.num_atoms,
        sparsity=args.sparsity,
        iterations=args.iterations,
        seed=args.seed,
        unused_atom_threshold=args.unused_atom_threshold,
        convergence_tol=args.convergence_tol,
    )
    if config.num_atoms > target.count:
        print(
            f"warning: num_atoms ({config.num_atoms}) exceeds the number of "
            f"target features ({target.count}); the fit proceeds but atoms will repeat",
            file=sys.stderr,
        )
    dicts, _, report = adapt_fit(source, target, config)
    model = model_from_fit(
        dicts,
        report,
        config,
        extra_meta={"dim": source.dim, "source_count": source.count, "target_count": target.count},
    )
    save_model(model, args.out)
    for i, (coding, swept) in enumerate(
        zip(report.objective_after_coding, report.objective_per_iteration), start=1
    ):
        print(f"iteration {i}: objective {coding:.6g} -> {swept:.6g}")
    print(f"wrote {args.out} ({model.num_atoms} atoms, dim {model.dim}, "
          f"{report.iterations_run} iterations, {report.atoms_replaced} atoms re-seeded)")
    return 0


# ----------------------------------------------------------------- eval


def _load_eval_inputs(model_path, source_path, target_path):
    model = load_model(model_path)
    source, src_images = load_features(source_path)
    target, tgt_images = load_features(target_path)
    if src_images is None or tgt_images is None:
        raise ShapeError("eval inputs must carry image indices")
    return model, source, src_images, target, tgt_images


def _eval_options(args) -> EvalOptions:
    return EvalOptions(
        trials=args.trials,
        per_class=args.per_class,
        labeled_target_per_class=args.labeled_target_per_class,
        sparsity=args.sparsity,
        pool_mode=args.pool,
        normalize=args.descriptor_norm,
        reg_lambda=args.reg_lambda,
        epochs=args.epochs,
        seed=args.seed,
        baselines=tuple(dict.fromkeys(args.baseline or ())),
        bins=args.bins,
        kmeans_iterations=args.kmeans_iterations,
        jobs=args.jobs,
    )


def _emit_report(report: TrialReport, report_path, render_figures: bool, fit_report=None) -> None:
    sys.stdout.write(format_report(report))
    print(f"runtime_seconds: {report.runtime_seconds:.3f}")
    if report_path:
        write_report(report, report_path)
        print(f"wrote {report_path}")
        if render_figures:
            paths = figmod.figure_paths_for_report(report_path)
            print(f"wrote {figmod.render_accuracy_figure(report, paths['accuracy'])}")
            if fit_report is not None and fit_report.objective_per_iteration:
                print(f"wrote {figmod.render_objective_figure(fit_report, paths['objective'])}")


def cmd_eval(args) -> int:
    model, source, src_images, target, tgt_images = _load_eval_inputs(
        args.model, args.source, args.target
    )
    opts = _eval_options(args)
    echo = {
        "model": args.model,
        "source": args.source,
        "target": args.target,
        "trials": opts.trials,
        "per_class": opts.per_class,
        "labeled_target_per_class": opts.labeled_target_per_class,
        "pool": opts.pool_mode,
        "reg_lambda": opts.reg_lambda,
        "epochs": opts.epochs,
        "seed": opts.seed,
        "baselines": ",".join(opts.baselines),
        "bins": opts.bins,
    }
    report, last_svm = run_eval(model, source, src_images, target, tgt_images, opts,
                                config_echo={k: str(v) for k, v in echo.items()})
    _emit_report(report, args.report, args.figures, model.fit_report())
    if args.save_model:
        save_model(AdaptedModel(model.dicts, dict(model.meta), last_svm), args.save_model)
        print(f"wrote {args.save_model}")
    return 0


# ------------------------------------------------------------- pipeline

_PIPELINE_DEFAULTS = {
    # synthetic data
    "dim": 20,
    "atoms": 30,
    "classes": 5,
    "images_per_class": 40,
    "features_per_image": 30,
    "synth_sparsity": 3,
    "shift_strength": 0.5,
    "noise_sigma": 0.02,
    # dictionary fit
    "num_atoms": 64,
    "sparsity": 3,
    "iterations": 20,
    "convergence_tol": 1e-5,
    "unused_atom_threshold": 1,
    # protocol
    "trials": 5,
    "per_class": 20,
    "labeled_target_per_class": 0,
    "pool": "abs",
    "normalize_descriptors": True,
    "reg_lambda": 1e-4,
    "epochs": 100,
    "baselines": "source-only",
    "bins": 800,
    "kmeans_iterations": 50,
    # run control
    "seed": 0,
    "workdir": "uddl_run",
    "report": "",
    "figures": True,
    "jobs": 1,
}


def _parse_scalar(key: str, raw: str, like):
    raw = raw.strip()
    try:
        if isinstance(like, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(like, int):
            return int(raw)
        if isinstance(like, float):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"config key {key}: cannot parse {raw!r}") from exc


def parse_config(path) -> dict:
    """Read ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected key = value")
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in _PIPELINE_DEFAULTS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _parse_scalar(key, raw, _PIPELINE_DEFAULTS[key])
    return values


def cmd_pipeline(args) -> int:
    cfg = dict(_PIPELINE_DEFAULTS)
    cfg.update(parse_config(args.config))
    for key in ("seed", "trials", "jobs", "workdir", "report", "figures"):
        value = getattr(args, key)
        if value is not None:
            cfg[key] = value

    workdir = Path(cfg["workdir"])
    workdir.mkdir(parents=True, exist_ok=True)
    source_path = workdir / "source.dmat"
    target_path = workdir / "target.dmat"
    truth_path = workdir / "truth.dmat"
    model_path = workdir / "model.uddm"
    report_path = Path(cfg["report"]) if cfg["report"] else workdir / "report.tsv"

    spec = SynthSpec(
        dim=cfg["dim"],
        atoms=cfg["atoms"],
        classes=cfg["classes"],
        images_per_class=cfg["images_per_class"],
        features_per_image=cfg["features_per_image"],
        sparsity=cfg["synth_sparsity"],
        shift_strength=cfg["shift_strength"],
        noise_sigma=cfg["noise_sigma"],
        seed=cfg["seed"],
    )
    print("pipeline stage 1/3: synthesizing domain pair")
    (source, src_images), (target, tgt_images), truth = synth_domain_pair(spec)
    save_features(source, src_images, source_path)
    save_features(target, tgt_images, target_path)
    save_features(FeatureMatrix(truth.atoms), None, truth_path)

    print("pipeline stage 2/3: fitting coupled dictionaries")
    config = KsvdConfig(
        num_atoms=cfg["num_atoms"],
        sparsity=cfg["sparsity"],
        iterations=cfg["iterations"],
        seed=cfg["seed"],
        unused_atom_threshold=cfg["unused_atom_threshold"],
        convergence_tol=cfg["convergence_tol"],
    )
    dicts, _, fit_report = adapt_fit(source, target, config)
    model = model_from_fit(
        dicts, fit_report, config,
        extra_meta={"dim": source.dim, "source_count": source.count, "target_count": target.count},
    )
    save_model(model, model_path)
    print(f"fit: {fit_report.iterations_run} iterations, "
          f"final objective {fit_report.objective_per_iteration[-1]:.6g}")

    print("pipeline stage 3/3: running recognition trials")
    baselines = tuple(b for b in cfg["baselines"].split(",") if b.strip()) if cfg["baselines"] else ()
    opts = EvalOptions(
        trials=cfg["trials"],
        per_class=cfg["per_class"],
        labeled_target_per_class=cfg["labeled_target_per_class"],
        sparsity=cfg["sparsity"],
        pool_mode=cfg["pool"],
        normalize=cfg["normalize_descriptors"],
        reg_lambda=cfg["reg_lambda"],
        epochs=cfg["epochs"],
        seed=cfg["seed"],
        baselines=tuple(b.strip() for b in baselines),
        bins=min(cfg["bins"], source.count),
        kmeans_iterations=cfg["kmeans_iterations"],
        jobs=cfg["jobs"],
    )
    echo = {k: str(v) for k, v in cfg.items() if k not in _ECHO_SKIP}
    report, _ = run_eval(model, source, src_images, target, tgt_images, opts, config_echo=echo)
    _emit_report(report, report_path, cfg["figures"], fit_report)
    return 0


# ------------------------------------------------------------- parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uddl",
        description="Coupled two-domain dictionary learning and cross-domain recognition.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic source/target feature pair")
    p.add_argument("--source", required=True, help="output DMAT for the source domain")
    p.add_argument("--target", required=True, help="output DMAT for the target domain")
    p.add_argument("--truth", default="", help="optional output DMAT for the generating atoms")
    p.add_argument("--dim", type=int, default=20)
    p.add_argument("--atoms", type=int, default=30)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--images-per-class", type=int, default=40)
    p.add_argument("--features-per-image", type=int, default=30)
    p.add_argument("--synth-sparsity", type=int, default=3)
    p.add_argument("--shift-strength", type=float, default=0.5)
    p.add_argument("--noise-sigma", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=_env_seed())
    p.add_argument("--check", action="store_true",
                   help="verify per-class feature means across domains")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("adapt", help="fit coupled per-domain dictionaries")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out", required=True, help="output model file (UDDM)")
    p.add_argument("--num-atoms", type=int, default=512)
    p.add_argument("--sparsity", type=int, default=5)
    p.add_argument("--iterations", type=int, default=50)
    p.add_argument("--convergence-tol", type=float, default=1e-5)
    p.add_argument("--unused-atom-threshold", type=int, default=1)
    p.add_argument("--seed", type=int, default=_env_seed())
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("eval", help="run the recognition trial protocol")
    p.add_argument("--model", required=True)
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--per-class", type=int, default=20)
    p.add_argument("--labeled-target-per-class", type=int, default=0)
    p.add_argument("--sparsity", type=int, default=None,
                   help="coding sparsity; defaults to the model's")
    p.add_argument("--pool", choices=("abs", "signed"), default="abs")
    p.add_argument("--no-descriptor-norm", dest="descriptor_norm", action="store_false",
                   help="skip L2 normalization of pooled descriptors")
    p.add_argument("--reg-lambda", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--seed", type=int, default=_env_seed())
    p.add_argument("--baseline", action="append", choices=BASELINES,
                   help="additional method rows (repeatable)")
    p.add_argument("--bins", type=int, default=800, help="codebook size for the bow baseline")
    p.add_argument("--kmeans-iterations", type=int, default=50)
    p.add_argument("--report", default="", help="write the report to this path")
    p.add_argument("--no-figures", dest="figures", action="store_false",
                   help="do not render figure files next to the report")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for trials")
    p.add_argument("--save-model", default="",
                   help="write the model plus the last trial's classifier here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="synth + adapt + eval from one config file")
    p.add_argument("--config", required=True, help="key = value config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--workdir", default=None)
    p.add_argument("--report", default=None)
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=None)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UddlError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.exit_code


if __name__ == "__main__":
    sys.exit(main())
