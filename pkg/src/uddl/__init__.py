"""Coupled two-domain dictionary learning and cross-domain recognition."""

from .adapt import AdaptedDictionaries, StackedProblem, adapt_fit, joint_objective, stack_problem
from .classify import LinearSvmModel, evaluate_accuracy, svm_predict, svm_train
from .coupling import (
    AffinityMatrix,
    CouplingMatrix,
    apply_coupling,
    build_coupling,
    coupling_cost,
    gaussian_affinity,
)
from .data import (
    FeatureMatrix,
    ImageSet,
    SynthSpec,
    load_features,
    sample_protocol,
    save_features,
    synth_domain_pair,
)
from .errors import (
    ConfigError,
    ConsistencyError,
    FormatError,
    NumericError,
    SamplingError,
    ShapeError,
    UddlError,
)
from .features import (
    Codebook,
    ImageDescriptor,
    bow_encode,
    encode_image_set,
    export_descriptors,
    kmeans_fit,
    pool_max,
)
from .ksvd import (
    Dictionary,
    FitReport,
    KsvdConfig,
    init_dictionary,
    ksvd_fit,
    leading_singular_pair,
    replace_unused_atoms,
    update_atom,
)
from .model_io import AdaptedModel, load_model, model_from_fit, save_model
from .report import TrialReport, format_report, read_report, write_report
from .sparse_coding import SparseCode, SparseCodeMatrix, batch_encode, omp_encode

__version__ = "0.1.0"
