"""Nearest-feature coupling between two domains.

For every target feature the closest source feature (Euclidean, ties to the
lowest index) is recorded in a binary selection matrix with exactly one 1
per column. Affinities use the Gaussian kernel exp(-||a - b||^2 / 2) scaled
by 1 / sqrt(2*pi); since the kernel decreases strictly with distance, the
per-column argmax over affinities and the nearest-neighbor rule pick the
same source feature. Selection is with replacement: one source feature may
serve many target features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import FeatureMatrix
from .errors import ConsistencyError, ShapeError
from .sparse_coding import SparseCodeMatrix

_GAUSS_SCALE = 1.0 / np.sqrt(2.0 * np.pi)
_BLOCK = 512  # target columns per distance block


@dataclass
class CouplingMatrix:
    """Column-sparse selection matrix: entry j names the source of target j."""

    rows: int
    cols: int
    selected_source: np.ndarray

    def __post_init__(self):
        self.selected_source = np.asarray(self.selected_source, dtype=np.int64)
        if len(self.selected_source) != self.cols:
            raise ShapeError("selected_source length must equal cols")
        if self.cols < 1 or self.rows < 1:
            raise ShapeError("coupling must be non-empty")
        if np.any(self.selected_source < 0) or np.any(self.selected_source >= self.rows):
            raise ConsistencyError("selected source index out of range")

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.rows, self.cols))
        dense[self.selected_source, np.arange(self.cols)] = 1.0
        return dense


@dataclass
class AffinityMatrix:
    values: np.ndarray

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


def _check_dims(source: FeatureMatrix, target: FeatureMatrix) -> None:
    if source.dim != target.dim:
        raise ShapeError(f"source dim {source.dim} != target dim {target.dim}")


def _sq_dists_block(src: np.ndarray, src_sq: np.ndarray, tgt_block: np.ndarray) -> np.ndarray:
    tgt_sq = np.einsum("ij,ij->j", tgt_block, tgt_block)
    d2 = src_sq[:, None] + tgt_sq[None, :] - 2.0 * (src.T @ tgt_block)
    np.maximum(d2, 0.0, out=d2)
    return d2


def gaussian_affinity(source: FeatureMatrix, target: FeatureMatrix) -> AffinityMatrix:
    """Pairwise Gaussian affinities, computed in column blocks."""
    _check_dims(source, target)
    src = source.values
    tgt = target.values
    src_sq = np.einsum("ij,ij->j", src, src)
    out = np.empty((source.count, target.count))
    for lo in range(0, target.count, _BLOCK):
        hi = min(lo + _BLOCK, target.count)
        d2 = _sq_dists_block(src, src_sq, tgt[:, lo:hi])
        out[:, lo:hi] = _GAUSS_SCALE * np.exp(-0.5 * d2)
    return AffinityMatrix(out)


def build_coupling(source: FeatureMatrix, target: FeatureMatrix) -> CouplingMatrix:
    """Select the Euclidean-nearest source feature for every target feature."""
    _check_dims(source, target)
    src = source.values
    tgt = target.values
    src_sq = np.einsum("ij,ij->j", src, src)
    selected = np.empty(target.count, dtype=np.int64)
    for lo in range(0, target.count, _BLOCK):
        hi = min(lo + _BLOCK, target.count)
        d2 = _sq_dists_block(src, src_sq, tgt[:, lo:hi])
        selected[lo:hi] = np.argmin(d2, axis=0)
    return CouplingMatrix(source.count, target.count, selected)


def coupling_cost(
    codes_source: SparseCodeMatrix,
    codes_target: SparseCodeMatrix,
    coupling: CouplingMatrix,
) -> float:
    """Squared Frobenius distance between target codes and coupled source codes."""
    if codes_source.num_atoms != codes_target.num_atoms:
        raise ShapeError("code matrices must share the atom count")
    if coupling.rows != len(codes_source) or coupling.cols != len(codes_target):
        raise ShapeError("coupling shape does not match the code matrices")
    total = 0.0
    for j, tgt_code in enumerate(codes_target.columns):
        src_code = codes_source.columns[int(coupling.selected_source[j])]
        union = np.union1d(tgt_code.support, src_code.support)
        tgt_vals = np.zeros(len(union))
        src_vals = np.zeros(len(union))
        tgt_vals[np.searchsorted(union, tgt_code.support)] = tgt_code.coeffs
        src_vals[np.searchsorted(union, src_code.support)] = src_code.coeffs
        diff = tgt_vals - src_vals
        total += float(diff @ diff)
    return total


def apply_coupling(source: FeatureMatrix, coupling: CouplingMatrix) -> FeatureMatrix:
    """Materialize the coupled source matrix: column j = source[selected[j]]."""
    if coupling.rows != source.count:
        raise ConsistencyError(
            f"coupling expects {coupling.rows} source features, matrix has {source.count}"
        )
    sel = coupling.selected_source
    if np.any(sel < 0) or np.any(sel >= source.count):
        raise ConsistencyError("selected source index out of range")
    return FeatureMatrix(source.values[:, sel])
