"""Shared fixtures and independent oracle helpers.

The helpers here deliberately avoid the library's own numerics: supports
are found by exhaustive least squares, distances by direct norm loops, and
singular values via numpy's full SVD, so they can serve as oracles for the
implementation paths under test.
"""

import itertools

import numpy as np
import pytest

from uddl import FeatureMatrix, ImageSet


def unit_columns(mat):
    return mat / np.linalg.norm(mat, axis=0)


def mutual_coherence(atoms):
    gram = np.abs(atoms.T @ atoms)
    np.fill_diagonal(gram, 0.0)
    return gram.max()


def low_coherence_dictionary(dim, num_atoms, max_coherence, seed, max_rounds=5000):
    """Random unit-norm atoms nudged apart until coherence < max_coherence."""
    rng = np.random.Generator(np.random.Philox(seed))
    atoms = unit_columns(rng.normal(size=(dim, num_atoms)))
    for _ in range(max_rounds):
        gram = atoms.T @ atoms
        mags = np.abs(gram)
        np.fill_diagonal(mags, 0.0)
        i, j = np.unravel_index(np.argmax(mags), mags.shape)
        if mags[i, j] < max_coherence:
            return atoms
        sign = np.sign(gram[i, j])
        atoms[:, i] -= 0.1 * sign * atoms[:, j]
        atoms[:, j] -= 0.1 * sign * atoms[:, i]
        atoms[:, i] /= np.linalg.norm(atoms[:, i])
        atoms[:, j] /= np.linalg.norm(atoms[:, j])
    raise AssertionError("could not reach the requested coherence")


def best_support_bruteforce(y, atoms, max_size):
    """Exhaustive search over all supports of size <= max_size.

    Returns (support tuple, coefficients, residual norm) with the smallest
    least-squares residual; ties go to the smaller/lexicographically first
    support, which is only relevant for degenerate inputs.
    """
    best = ((), np.empty(0), float(np.linalg.norm(y)))
    num_atoms = atoms.shape[1]
    for size in range(1, max_size + 1):
        for support in itertools.combinations(range(num_atoms), size):
            sub = atoms[:, support]
            coeffs, *_ = np.linalg.lstsq(sub, y, rcond=None)
            res = float(np.linalg.norm(y - sub @ coeffs))
            if res < best[2] - 1e-12:
                best = (support, coeffs, res)
    return best


def nearest_source_bruteforce(source_values, target_values):
    """Per target column, the index of the closest source column (norm loop)."""
    out = np.empty(target_values.shape[1], dtype=np.int64)
    for j in range(target_values.shape[1]):
        dists = [np.linalg.norm(source_values[:, i] - target_values[:, j])
                 for i in range(source_values.shape[1])]
        out[j] = int(np.argmin(dists))
    return out


def single_feature_images(count, labels=None, num_classes=0):
    """Image set with one feature per image."""
    labels = np.full(count, -1, dtype=np.int64) if labels is None else np.asarray(labels)
    return ImageSet(
        np.arange(count, dtype=np.int64),
        np.ones(count, dtype=np.int64),
        labels,
        num_classes,
    )


def pytest_runtest_logreport(report):
    """One visible PASS/FAIL line per acceptance criterion."""
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call":
        outcome = "SKIPPED" if report.skipped else ("PASSED" if report.passed else "FAILED")
        print(f"\nACCEPTANCE {name}: {outcome}")
    elif report.when == "setup" and report.skipped:
        print(f"\nACCEPTANCE {name}: SKIPPED")


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(20240517))


@pytest.fixture
def small_features(rng):
    return FeatureMatrix(rng.normal(size=(6, 40)))
