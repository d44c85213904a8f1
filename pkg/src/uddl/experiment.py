"""Cross-domain recognition experiments over an adapted model.

Descriptors only depend on the dictionaries, so each method's image
encodings are computed once; the per-trial work is the seeded sampling
protocol plus classifier training and scoring. Trials are independent and
may run in worker processes; the report rows are keyed by trial index, so
results do not depend on scheduling.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .classify import LinearSvmModel, evaluate_accuracy, svm_predict, svm_train
from .data import FeatureMatrix, ImageSet, sample_protocol
from .errors import ConfigError, ShapeError
from .features import bow_encode, encode_image_set, kmeans_fit
from .ksvd import KsvdConfig, ksvd_fit
from .model_io import AdaptedModel
from .report import TrialReport
from .rng import derive_seed

METHOD_ADAPTED = "adapted"
METHOD_SOURCE_ONLY = "source-only"
METHOD_BOW = "bow"
BASELINES = (METHOD_SOURCE_ONLY, METHOD_BOW)

# seed stage keys
_KEY_SRC_SPLIT, _KEY_TGT_SPLIT, _KEY_SVM, _KEY_KMEANS = 100, 200, 300, 400


@dataclass
class EvalOptions:
    trials: int = 20
    per_class: int = 20
    labeled_target_per_class: int = 0
    sparsity: int | None = None  # None: take the model's coding sparsity
    pool_mode: str = "abs"
    normalize: bool = True
    reg_lambda: float = 1e-4
    epochs: int = 100
    seed: int = 0
    baselines: tuple = ()
    bins: int = 800
    kmeans_iterations: int = 50
    jobs: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        for b in self.baselines:
            if b not in BASELINES:
                raise ConfigError(f"unknown baseline {b!r}, expected one of {BASELINES}")


def _check_eval_inputs(model, source, source_images, target, target_images):
    if source_images is None or target_images is None:
        raise ShapeError("evaluation needs image indices in both feature files")
    source_images.check_covers(source)
    target_images.check_covers(target)
    if model.dim != source.dim or model.dim != target.dim:
        raise ShapeError(
            f"model expects {model.dim}-dimensional features, "
            f"got source {source.dim} / target {target.dim}"
        )


def _method_descriptors(model, source, source_images, target, target_images, opts):
    """Per-method (source descriptors, target descriptors), computed once."""
    sparsity = opts.sparsity or int(model.meta.get("sparsity", 5))
    out = {}
    out[METHOD_ADAPTED] = (
        encode_image_set(source_images, source, model.dicts.source_dict, sparsity,
                         mode=opts.pool_mode, normalize=opts.normalize),
        encode_image_set(target_images, target, model.dicts.target_dict, sparsity,
                         mode=opts.pool_mode, normalize=opts.normalize),
    )
    if METHOD_SOURCE_ONLY in opts.baselines:
        config = KsvdConfig(
            num_atoms=int(model.meta.get("num_atoms", model.num_atoms)),
            sparsity=sparsity,
            iterations=int(model.meta.get("iterations", 50)),
            seed=int(model.meta.get("seed", 0)),
            convergence_tol=float(model.meta.get("convergence_tol", 1e-5)),
        )
        source_dict, _, _ = ksvd_fit(source, config)
        out[METHOD_SOURCE_ONLY] = (
            encode_image_set(source_images, source, source_dict, sparsity,
                             mode=opts.pool_mode, normalize=opts.normalize),
            encode_image_set(target_images, target, source_dict, sparsity,
                             mode=opts.pool_mode, normalize=opts.normalize),
        )
    if METHOD_BOW in opts.baselines:
        codebook = kmeans_fit(source, opts.bins, seed=derive_seed(opts.seed, _KEY_KMEANS),
                              iterations=opts.kmeans_iterations)
        out[METHOD_BOW] = (
            bow_encode(source_images, source, codebook),
            bow_encode(target_images, target, codebook),
        )
    return out


@dataclass
class _TrialTask:
    trial: int
    seed: int
    per_class: int
    labeled_target_per_class: int
    reg_lambda: float
    epochs: int
    num_classes: int
    source_images: ImageSet = None
    target_images: ImageSet = None
    descriptors: dict = field(default_factory=dict)
    keep_svm: bool = False


def _run_trial(task: _TrialTask):
    src_train, _ = sample_protocol(
        task.source_images, task.per_class, 0, derive_seed(task.seed, _KEY_SRC_SPLIT, task.trial)
    )
    tgt_train, tgt_test = sample_protocol(
        task.target_images, 0, task.labeled_target_per_class,
        derive_seed(task.seed, _KEY_TGT_SPLIT, task.trial),
    )
    if not tgt_test:
        raise ShapeError("sampling protocol left no target test images")
    accuracies = {}
    svm_last = None
    for method, (src_desc, tgt_desc) in task.descriptors.items():
        train = [src_desc[i] for i in src_train] + [tgt_desc[i] for i in tgt_train]
        test = [tgt_desc[i] for i in tgt_test]
        labels = [d.label for d in test]
        model = svm_train(train, task.num_classes, task.reg_lambda, task.epochs,
                          seed=derive_seed(task.seed, _KEY_SVM, task.trial))
        accuracies[method] = evaluate_accuracy(svm_predict(model, test), labels)
        if method == METHOD_ADAPTED:
            svm_last = model
    return task.trial, accuracies, (svm_last if task.keep_svm else None)


def run_eval(
    model: AdaptedModel,
    source: FeatureMatrix,
    source_images: ImageSet,
    target: FeatureMatrix,
    target_images: ImageSet,
    opts: EvalOptions,
    config_echo: dict | None = None,
) -> tuple[TrialReport, LinearSvmModel | None]:
    """Run the trial protocol; returns the report and the last adapted SVM."""
    started = time.monotonic()
    _check_eval_inputs(model, source, source_images, target, target_images)
    num_classes = max(source_images.num_classes, target_images.num_classes)
    if num_classes < 2:
        raise ConfigError("evaluation needs at least two labeled classes")

    descriptors = _method_descriptors(model, source, source_images, target, target_images, opts)
    methods = [METHOD_ADAPTED] + [b for b in opts.baselines if b in descriptors]

    tasks = [
        _TrialTask(
            trial=t,
            seed=opts.seed,
            per_class=opts.per_class,
            labeled_target_per_class=opts.labeled_target_per_class,
            reg_lambda=opts.reg_lambda,
            epochs=opts.epochs,
            num_classes=num_classes,
            source_images=source_images,
            target_images=target_images,
            descriptors={m: descriptors[m] for m in methods},
            keep_svm=(t == opts.trials - 1),
        )
        for t in range(opts.trials)
    ]
    if opts.jobs > 1 and opts.trials > 1:
        with ProcessPoolExecutor(max_workers=min(opts.jobs, opts.trials)) as pool:
            results = list(pool.map(_run_trial, tasks))
    else:
        results = [_run_trial(task) for task in tasks]
    results.sort(key=lambda r: r[0])

    report = TrialReport(config_echo=dict(config_echo or {}))
    last_svm = None
    for trial, accuracies, svm in results:
        for method in methods:
            report.add(method, accuracies[method])
        if svm is not None:
            last_svm = svm
    report.runtime_seconds = time.monotonic() - started
    return report, last_svm
