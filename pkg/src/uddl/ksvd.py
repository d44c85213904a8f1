"""Dictionary learning by alternating sparse coding and rank-1 atom updates.

Each fit iteration encodes all signals, then sweeps the atoms in ascending
index order: the residual restricted to an atom's users is re-approximated
by its leading singular pair (computed by power iteration, so no general
SVD is needed), which replaces the atom and its coefficients. Atoms used by
fewer signals than a threshold are re-seeded from the worst-reconstructed
signals. Holding supports fixed, a sweep can only lower the squared
reconstruction error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import FeatureMatrix
from .errors import ConfigError, NumericError, ShapeError
from .rng import generator
from .sparse_coding import SparseCodeMatrix, batch_encode

_NORM_TOL = 1e-9
_POWER_ITERS = 100
_POWER_TOL = 1e-10


@dataclass
class Dictionary:
    """d x K matrix of unit-norm atoms."""

    atoms: np.ndarray

    def __post_init__(self):
        self.atoms = np.asarray(self.atoms, dtype=np.float64)
        if self.atoms.ndim != 2 or self.atoms.shape[1] < 1:
            raise ShapeError(f"dictionary must be 2-D, got shape {self.atoms.shape}")
        if not np.all(np.isfinite(self.atoms)):
            raise NumericError("dictionary contains non-finite entries")
        norms = np.linalg.norm(self.atoms, axis=0)
        if np.any(np.abs(norms - 1.0) > _NORM_TOL):
            raise NumericError("dictionary atoms must have unit 2-norm")

    @property
    def dim(self) -> int:
        return self.atoms.shape[0]

    @property
    def num_atoms(self) -> int:
        return self.atoms.shape[1]


@dataclass
class KsvdConfig:
    num_atoms: int = 512
    sparsity: int = 5
    iterations: int = 50
    seed: int = 0
    unused_atom_threshold: int = 1
    convergence_tol: float = 1e-5

    def __post_init__(self):
        if self.num_atoms < 1:
            raise ConfigError("num_atoms must be >= 1")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if not 1 <= self.sparsity <= self.num_atoms:
            raise ConfigError("sparsity must lie in [1, num_atoms]")
        if self.unused_atom_threshold < 0:
            raise ConfigError("unused_atom_threshold must be >= 0")


@dataclass
class FitReport:
    """Objective trace of one fit.

    ``objective_per_iteration`` is the squared Frobenius error after each
    full iteration (post atom sweep); ``objective_after_coding`` is the same
    quantity right after the coding stage of that iteration, so the pair
    exposes the per-sweep improvement.
    """

    objective_per_iteration: list = field(default_factory=list)
    iterations_run: int = 0
    atoms_replaced: int = 0
    objective_after_coding: list = field(default_factory=list)


def leading_singular_pair(mat: np.ndarray, max_iter: int = _POWER_ITERS, tol: float = _POWER_TOL):
    """Leading (u, sigma, v) of ``mat`` by power iteration on mat @ mat.T.

    The sign is fixed so u's largest-magnitude entry is non-negative.
    Requires a nonzero matrix.
    """
    gram = mat @ mat.T
    # deterministic start: the dominant column of mat
    start = mat[:, int(np.argmax(np.einsum("ij,ij->j", mat, mat)))]
    u = start / np.linalg.norm(start)
    for _ in range(max_iter):
        nxt = gram @ u
        norm = np.linalg.norm(nxt)
        if norm == 0.0:
            break
        nxt /= norm
        if np.linalg.norm(nxt - u) < tol:
            u = nxt
            break
        u = nxt
    proj = mat.T @ u
    sigma = np.linalg.norm(proj)
    v = proj / sigma
    if u[int(np.argmax(np.abs(u)))] < 0:
        u, v = -u, -v
    return u, sigma, v


def init_dictionary(signals: FeatureMatrix, num_atoms: int, seed: int) -> Dictionary:
    """Seed a dictionary from randomly chosen signal columns.

    Picks ``num_atoms`` distinct columns uniformly at random and normalizes
    them; exact duplicates get 1e-6 noise first. If there are fewer signals
    than atoms, the remainder are normalized Gaussian vectors.
    """
    if num_atoms < 1:
        raise ConfigError("num_atoms must be >= 1")
    rng = generator(seed)
    values = signals.values
    take = min(num_atoms, signals.count)
    chosen = rng.choice(signals.count, size=take, replace=False)
    atoms = np.array(values[:, chosen])
    seen: set[bytes] = set()
    for k in range(take):
        col = atoms[:, k]
        key = col.tobytes()
        if key in seen or np.linalg.norm(col) < 1e-12:
            col = col + 1e-6 * rng.normal(size=len(col))
            atoms[:, k] = col
        seen.add(key)
    if take < num_atoms:
        atoms = np.hstack([atoms, rng.normal(size=(signals.dim, num_atoms - take))])
    atoms /= np.linalg.norm(atoms, axis=0)
    return Dictionary(atoms)


def _users_of(codes: SparseCodeMatrix, atom_index: int) -> list[int]:
    return [j for j, code in enumerate(codes.columns) if atom_index in code.support]


def update_atom(
    dictionary: Dictionary,
    codes: SparseCodeMatrix,
    signals: FeatureMatrix,
    atom_index: int,
):
    """Rank-1 re-estimate of one atom over the signals that use it.

    Returns (new_atom, new_coeffs) where new_coeffs aligns with the users of
    the atom in column order. An unused atom is signalled by empty
    new_coeffs with the atom returned unchanged (replacement is the job of
    :func:`replace_unused_atoms`).
    """
    atoms = dictionary.atoms
    if codes.num_atoms != atoms.shape[1]:
        raise ShapeError("codes do not match dictionary size")
    if signals.dim != atoms.shape[0]:
        raise ShapeError("signals do not match dictionary dim")
    users = _users_of(codes, atom_index)
    if not users:
        return atoms[:, atom_index].copy(), np.empty(0)
    x_users = np.zeros((codes.num_atoms, len(users)))
    for col, j in enumerate(users):
        code = codes.columns[j]
        x_users[code.support, col] = code.coeffs
    restricted = signals.values[:, users] - atoms @ x_users
    restricted += np.outer(atoms[:, atom_index], x_users[atom_index])
    if np.linalg.norm(restricted) < 1e-15:
        return atoms[:, atom_index].copy(), np.zeros(len(users))
    u, sigma, v = leading_singular_pair(restricted)
    return u, sigma * v


def replace_unused_atoms(
    dictionary: Dictionary,
    codes: SparseCodeMatrix,
    signals: FeatureMatrix,
    threshold: int = 1,
):
    """Re-seed atoms used by fewer than ``threshold`` codes.

    Each such atom becomes the (normalized) signal with the largest current
    reconstruction error; replacements draw distinct signals in decreasing
    error order. Returns (new_dictionary, replaced_count).
    """
    atoms = np.array(dictionary.atoms)
    dense = codes.to_dense()
    usage = np.count_nonzero(dense, axis=1)
    dead = np.flatnonzero(usage < threshold)
    if len(dead) == 0:
        return Dictionary(atoms), 0
    residual = signals.values - atoms @ dense
    errors = np.einsum("ij,ij->j", residual, residual)
    worst = np.argsort(errors)[::-1]
    for rank, k in enumerate(dead):
        col = signals.values[:, worst[rank % len(worst)]]
        norm = np.linalg.norm(col)
        if norm < 1e-12:
            rng = generator(int(k))
            col = rng.normal(size=len(col))
            norm = np.linalg.norm(col)
        atoms[:, k] = col / norm
    return Dictionary(atoms), int(len(dead))


def ksvd_fit(signals: FeatureMatrix, config: KsvdConfig):
    """Alternate coding and atom sweeps until convergence.

    Returns (dictionary, codes, report). Deterministic for fixed
    (signals, config); see :class:`FitReport` for the recorded traces.
    """
    if config.sparsity > config.num_atoms:
        raise ConfigError("sparsity must not exceed num_atoms")
    y = signals.values
    atoms = np.array(init_dictionary(signals, config.num_atoms, config.seed).atoms)
    report = FitReport()
    x = np.zeros((config.num_atoms, signals.count))
    for iteration in range(config.iterations):
        codes = batch_encode(signals, Dictionary(atoms), config.sparsity)
        x = codes.to_dense()
        residual = y - atoms @ x
        report.objective_after_coding.append(float(np.sum(residual * residual)))

        for k in range(config.num_atoms):
            users = np.flatnonzero(x[k])
            if len(users) == 0:
                continue
            restricted = residual[:, users] + np.outer(atoms[:, k], x[k, users])
            if np.linalg.norm(restricted) < 1e-15:
                continue
            u, sigma, v = leading_singular_pair(restricted)
            coeffs = sigma * v
            atoms[:, k] = u
            x[k, users] = coeffs
            residual[:, users] = restricted - np.outer(u, coeffs)

        # re-seed dead atoms from the worst-reconstructed signals
        usage = np.count_nonzero(x, axis=1)
        dead = np.flatnonzero(usage < config.unused_atom_threshold)
        if len(dead):
            errors = np.einsum("ij,ij->j", residual, residual)
            worst = np.argsort(errors)[::-1]
            for rank, k in enumerate(dead):
                users = np.flatnonzero(x[k])
                if len(users):
                    residual[:, users] += np.outer(atoms[:, k], x[k, users])
                    x[k, users] = 0.0
                col = y[:, worst[rank % len(worst)]]
                norm = np.linalg.norm(col)
                if norm < 1e-12:
                    col = generator(config.seed, 4, iteration, int(k)).normal(size=len(col))
                    norm = np.linalg.norm(col)
                atoms[:, k] = col / norm
            report.atoms_replaced += int(len(dead))

        objective = float(np.sum(residual * residual))
        report.objective_per_iteration.append(objective)
        report.iterations_run = iteration + 1
        if iteration > 0:
            prev = report.objective_per_iteration[-2]
            rel = abs(prev - objective) / max(prev, 1e-30)
            if rel < config.convergence_tol:
                break
    return Dictionary(atoms), SparseCodeMatrix.from_dense(x), report
