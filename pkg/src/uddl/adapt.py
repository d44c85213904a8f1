"""Joint two-domain dictionary learning through a stacked problem.

Coupled source features are stacked on top of the target features and a
single dictionary is fit to the stack, which forces both domains to share
one code per coupled pair. Splitting the stacked atoms row-wise yields the
per-domain dictionaries; because the split halves of a unit-norm stacked
atom are not unit-norm themselves, each half is re-normalized for
downstream encoding and its original scale kept alongside.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .coupling import CouplingMatrix, apply_coupling, build_coupling
from .data import FeatureMatrix
from .errors import NumericError, ShapeError
from .ksvd import Dictionary, KsvdConfig, ksvd_fit
from .rng import generator
from .sparse_coding import SparseCodeMatrix

log = logging.getLogger(__name__)

_DEGENERATE_NORM = 1e-12
_BLOCK_IDENTITY_RTOL = 1e-9


@dataclass
class StackedProblem:
    """Coupled-source rows stacked over target rows, one column per target feature."""

    stacked_signals: FeatureMatrix
    source_dim: int

    def __post_init__(self):
        if self.stacked_signals.dim != 2 * self.source_dim:
            raise ShapeError("stacked dim must be exactly twice the source dim")

    def unstack(self) -> tuple[FeatureMatrix, FeatureMatrix]:
        values = self.stacked_signals.values
        return FeatureMatrix(values[: self.source_dim]), FeatureMatrix(values[self.source_dim :])


@dataclass
class AdaptedDictionaries:
    """Per-domain dictionaries split from one stacked fit.

    ``source_dict`` / ``target_dict`` hold unit-norm atoms ready for
    encoding; ``source_scales`` / ``target_scales`` are the pre-normalization
    norms of each split half, so scale k times atom k reproduces the raw
    stacked half exactly.
    """

    source_dict: Dictionary
    target_dict: Dictionary
    source_scales: np.ndarray
    target_scales: np.ndarray
    stacked_dict_atoms_unit_norm: bool = True

    def __post_init__(self):
        if self.source_dict.num_atoms != self.target_dict.num_atoms:
            raise ShapeError("both dictionaries must share the atom count")
        if self.source_dict.dim != self.target_dict.dim:
            raise ShapeError("both dictionaries must share the feature dim")

    @property
    def num_atoms(self) -> int:
        return self.source_dict.num_atoms

    def raw_source(self) -> np.ndarray:
        return self.source_dict.atoms * self.source_scales

    def raw_target(self) -> np.ndarray:
        return self.target_dict.atoms * self.target_scales


def stack_problem(
    source: FeatureMatrix,
    target: FeatureMatrix,
    coupling: CouplingMatrix,
) -> StackedProblem:
    """Stack the coupled source features over the target features."""
    if source.dim != target.dim:
        raise ShapeError(f"source dim {source.dim} != target dim {target.dim}")
    if coupling.rows != source.count or coupling.cols != target.count:
        raise ShapeError("coupling shape does not match the feature matrices")
    coupled = apply_coupling(source, coupling)
    stacked = np.vstack([coupled.values, target.values])
    return StackedProblem(FeatureMatrix(stacked), source.dim)


def _split_half(raw: np.ndarray, seed: int, side: int):
    """Normalize split atoms, replacing degenerate (near-zero) halves."""
    scales = np.linalg.norm(raw, axis=0)
    atoms = np.array(raw)
    for k in np.flatnonzero(scales < _DEGENERATE_NORM):
        log.warning("split atom %d is degenerate on side %d; re-seeding a unit atom", k, side)
        col = generator(seed, 5, side, int(k)).normal(size=raw.shape[0])
        atoms[:, k] = col / np.linalg.norm(col)
        scales[k] = 0.0
    ok = scales >= _DEGENERATE_NORM
    atoms[:, ok] /= scales[ok]
    return Dictionary(atoms), scales


def adapt_fit(source: FeatureMatrix, target: FeatureMatrix, config: KsvdConfig):
    """Couple, stack, fit, and split.

    Returns (adapted_dictionaries, codes, report) where ``codes`` are the
    shared codes of the stacked problem (one column per target feature).
    The block identity - stacked objective equals the sum of the two
    per-domain terms evaluated with the raw split dictionaries - is
    re-verified on every call.
    """
    coupling = build_coupling(source, target)
    stacked = stack_problem(source, target, coupling)
    stacked_dict, codes, report = ksvd_fit(stacked.stacked_signals, config)

    d = source.dim
    source_dict, source_scales = _split_half(stacked_dict.atoms[:d], config.seed, 0)
    target_dict, target_scales = _split_half(stacked_dict.atoms[d:], config.seed, 1)
    dicts = AdaptedDictionaries(source_dict, target_dict, source_scales, target_scales)

    term_source, term_target = joint_objective(source, target, coupling, dicts, codes)
    stacked_objective = report.objective_per_iteration[-1]
    if abs((term_source + term_target) - stacked_objective) > _BLOCK_IDENTITY_RTOL * max(
        stacked_objective, 1.0
    ):
        raise NumericError(
            "stacked objective does not decompose into the two domain terms: "
            f"{stacked_objective} vs {term_source} + {term_target}"
        )
    return dicts, codes, report


def joint_objective(
    source: FeatureMatrix,
    target: FeatureMatrix,
    coupling: CouplingMatrix,
    dicts: AdaptedDictionaries,
    codes: SparseCodeMatrix,
) -> tuple[float, float]:
    """The two squared-error terms of the coupled objective, separately.

    Uses the raw (scale-carrying) split dictionaries, so the sum equals the
    stacked residual exactly up to floating-point rounding.
    """
    if codes.num_atoms != dicts.num_atoms:
        raise ShapeError("codes do not match the dictionaries")
    if len(codes) != target.count:
        raise ShapeError("one code column per target feature expected")
    coupled = apply_coupling(source, coupling)
    dense = codes.to_dense()
    res_source = coupled.values - dicts.raw_source() @ dense
    res_target = target.values - dicts.raw_target() @ dense
    return float(np.sum(res_source * res_source)), float(np.sum(res_target * res_target))
