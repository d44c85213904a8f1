"""Orthogonal matching pursuit under a hard sparsity budget.

Each signal is decomposed greedily: pick the atom with the largest absolute
correlation to the current residual, then refit all selected coefficients by
least squares, until the atom budget is spent or the residual norm drops
below tolerance. Normal equations are solved by Cholesky with a 1e-10
diagonal jitter when near-singular; equal correlations break toward the
lowest atom index, so results are fully deterministic.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import NumericError, ShapeError

if TYPE_CHECKING:
    from .data import FeatureMatrix
    from .ksvd import Dictionary

_JITTER = 1e-10
DEFAULT_TOL_SCALE = 1e-9  # residual_tol defaults to this times ||y||


@dataclass
class SparseCode:
    """One signal's code: strictly increasing atom indices plus coefficients."""

    support: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        self.support = np.asarray(self.support, dtype=np.int64)
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if self.support.shape != self.coeffs.shape:
            raise ShapeError("support and coeffs must align")

    @property
    def nnz(self) -> int:
        return len(self.support)


@dataclass
class SparseCodeMatrix:
    """Column-wise sparse codes for a batch of signals."""

    num_atoms: int
    columns: list[SparseCode]

    def __len__(self) -> int:
        return len(self.columns)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.num_atoms, len(self.columns)))
        for j, code in enumerate(self.columns):
            out[code.support, j] = code.coeffs
        return out

    @classmethod
    def from_dense(cls, dense: np.ndarray) -> "SparseCodeMatrix":
        cols = []
        for j in range(dense.shape[1]):
            support = np.flatnonzero(dense[:, j])
            cols.append(SparseCode(support, dense[support, j]))
        return cls(dense.shape[0], cols)


def _solve_ls(sub: np.ndarray, target: np.ndarray) -> np.ndarray:
    gram = sub.T @ sub
    rhs = sub.T @ target
    try:
        return cho_solve(cho_factor(gram, lower=True), rhs)
    except np.linalg.LinAlgError:
        gram = gram + _JITTER * np.eye(gram.shape[0])
        return cho_solve(cho_factor(gram, lower=True), rhs)


def _omp_core(y: np.ndarray, atoms: np.ndarray, atoms_t: np.ndarray, sparsity: int, tol: float):
    """Greedy pursuit on one signal; inputs are pre-validated."""
    residual = y
    res_norm = np.sqrt(residual @ residual)
    support: list[int] = []
    coeffs = np.empty(0)
    while len(support) < sparsity and res_norm > tol:
        corr = atoms_t @ residual
        pick = int(np.argmax(np.abs(corr)))
        if pick in support:
            # residual already orthogonal to the span up to rounding
            break
        support.append(pick)
        sub = atoms[:, support]
        coeffs = _solve_ls(sub, y)
        residual = y - sub @ coeffs
        new_norm = np.sqrt(residual @ residual)
        # least-squares refit cannot make the residual grow
        assert new_norm <= res_norm + 1e-12 * (1.0 + res_norm), "residual increased"
        res_norm = new_norm
    order = np.argsort(support)
    support_arr = np.asarray(support, dtype=np.int64)[order]
    coeffs_arr = coeffs[order] if len(support) else np.empty(0)
    return SparseCode(support_arr, coeffs_arr)


def _check_dictionary(atoms: np.ndarray) -> None:
    norms = np.linalg.norm(atoms, axis=0)
    if np.any(norms < 1e-12):
        raise NumericError("dictionary contains a zero-norm atom")


def omp_encode(
    signal: np.ndarray,
    dictionary: "Dictionary",
    sparsity: int,
    residual_tol: float | None = None,
) -> SparseCode:
    """Encode one signal against unit-norm dictionary atoms.

    Parameters
    ----------
    signal : (d,) array
    dictionary : Dictionary with d-dimensional atoms
    sparsity : maximum number of selected atoms (>= 1)
    residual_tol : stop once the residual 2-norm falls to this; defaults to
        1e-9 * ||signal||.
    """
    y = np.asarray(signal, dtype=np.float64).ravel()
    if not np.all(np.isfinite(y)):
        raise NumericError("signal contains non-finite entries")
    atoms = dictionary.atoms
    if y.shape[0] != atoms.shape[0]:
        raise ShapeError(f"signal dim {y.shape[0]} != dictionary dim {atoms.shape[0]}")
    if sparsity < 1:
        raise ShapeError("sparsity must be >= 1")
    _check_dictionary(atoms)
    if residual_tol is None:
        residual_tol = DEFAULT_TOL_SCALE * np.linalg.norm(y)
    return _omp_core(y, atoms, np.ascontiguousarray(atoms.T), sparsity, residual_tol)


def batch_encode(
    signals: "FeatureMatrix",
    dictionary: "Dictionary",
    sparsity: int,
    jobs: int = 1,
) -> SparseCodeMatrix:
    """Encode every column of ``signals``; column j equals omp_encode of it.

    Encoding is per-column independent, so ``jobs > 1`` splits columns over
    threads; the result is identical regardless of schedule.
    """
    atoms = dictionary.atoms
    if signals.dim != atoms.shape[0]:
        raise ShapeError(f"signals dim {signals.dim} != dictionary dim {atoms.shape[0]}")
    if sparsity < 1:
        raise ShapeError("sparsity must be >= 1")
    _check_dictionary(atoms)
    values = signals.values
    atoms_t = np.ascontiguousarray(atoms.T)
    norms = np.linalg.norm(values, axis=0)

    def encode_range(lo: int, hi: int) -> list[SparseCode]:
        return [
            _omp_core(values[:, j], atoms, atoms_t, sparsity, DEFAULT_TOL_SCALE * norms[j])
            for j in range(lo, hi)
        ]

    n = signals.count
    if jobs <= 1 or n < 2:
        columns = encode_range(0, n)
    else:
        jobs = min(jobs, n)
        bounds = np.linspace(0, n, jobs + 1, dtype=int)
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(encode_range, bounds[:-1], bounds[1:]))
        columns = [code for chunk in chunks for code in chunk]
    return SparseCodeMatrix(atoms.shape[1], columns)
