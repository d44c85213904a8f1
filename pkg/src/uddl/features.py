"""Image-level descriptors: pooled sparse codes and histogram baselines.

An image's local sparse codes collapse to one global vector by per-atom max
pooling (absolute values by default, raw signed values optionally), then
L2 normalization. The baseline represents images as L1-normalized hard-
assignment histograms over a k-means codebook.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import FeatureMatrix, ImageSet
from .errors import ConfigError, ShapeError
from .ksvd import Dictionary
from .rng import generator
from .sparse_coding import SparseCodeMatrix, batch_encode

POOL_MODES = ("abs", "signed")


@dataclass
class ImageDescriptor:
    vector: np.ndarray
    image_id: int = 0
    label: int | None = None

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64)


@dataclass
class Codebook:
    """d x B matrix of cluster centers."""

    centers: np.ndarray

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=np.float64)
        if self.centers.ndim != 2 or self.centers.shape[1] < 1:
            raise ShapeError("codebook centers must be a d x B matrix")

    @property
    def bins(self) -> int:
        return self.centers.shape[1]


def pool_max(
    codes: SparseCodeMatrix,
    image_id: int = 0,
    label: int | None = None,
    mode: str = "abs",
    normalize: bool = True,
) -> ImageDescriptor:
    """Pool one image's sparse codes into a single global vector.

    ``abs`` takes the per-atom maximum of absolute coefficients (so the
    result is non-negative); ``signed`` takes the plain maximum, counting
    atoms absent from a column as 0. The pooled vector is L2-normalized
    unless it is all zeros or ``normalize`` is off.
    """
    if mode not in POOL_MODES:
        raise ConfigError(f"pool mode must be one of {POOL_MODES}")
    if len(codes.columns) == 0:
        raise ShapeError("cannot pool an image with no local features")
    k = codes.num_atoms
    if mode == "abs":
        pooled = np.zeros(k)
        for code in codes.columns:
            np.maximum.at(pooled, code.support, np.abs(code.coeffs))
    else:
        pooled = np.full(k, -np.inf)
        present = np.zeros(k, dtype=np.int64)
        for code in codes.columns:
            np.maximum.at(pooled, code.support, code.coeffs)
            present[code.support] += 1
        # atoms missing from at least one column compete with an implicit 0
        partial = present < len(codes.columns)
        pooled[partial] = np.maximum(pooled[partial], 0.0)
    norm = np.linalg.norm(pooled)
    if normalize and norm > 0:
        pooled = pooled / norm
    return ImageDescriptor(pooled, image_id=image_id, label=label)


def encode_image_set(
    images: ImageSet,
    features: FeatureMatrix,
    dictionary: Dictionary,
    sparsity: int,
    mode: str = "abs",
    normalize: bool = True,
) -> list[ImageDescriptor]:
    """Sparse-code and pool every image of a set with one domain's dictionary."""
    images.check_covers(features)
    descriptors = []
    for i in range(len(images)):
        sl = images.image_slice(i)
        codes = batch_encode(FeatureMatrix(features.values[:, sl]), dictionary, sparsity)
        label = int(images.labels[i]) if images.labels[i] >= 0 else None
        descriptors.append(pool_max(codes, image_id=i, label=label, mode=mode, normalize=normalize))
    return descriptors


def _assign(centers: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Nearest center per point column, ties to the lowest center index."""
    c_sq = np.einsum("ij,ij->j", centers, centers)
    d2 = c_sq[:, None] - 2.0 * (centers.T @ points)
    return np.argmin(d2, axis=0)


def kmeans_fit(features: FeatureMatrix, bins: int, seed: int = 0, iterations: int = 100) -> Codebook:
    """Lloyd's algorithm with k-means++ seeding; deterministic given seed."""
    if bins < 1:
        raise ConfigError("bins must be >= 1")
    if features.count < bins:
        raise ConfigError(f"need at least {bins} features to fit {bins} bins")
    points = features.values
    rng = generator(seed)

    centers = np.empty((features.dim, bins))
    first = int(rng.integers(features.count))
    centers[:, 0] = points[:, first]
    d2 = np.sum((points - centers[:, [0]]) ** 2, axis=0)
    for b in range(1, bins):
        total = d2.sum()
        if total <= 0:
            pick = int(rng.integers(features.count))
        else:
            pick = int(rng.choice(features.count, p=d2 / total))
        centers[:, b] = points[:, pick]
        d2 = np.minimum(d2, np.sum((points - centers[:, [b]]) ** 2, axis=0))

    centers, _ = lloyd(points, centers, iterations)
    return Codebook(centers)


def lloyd(points: np.ndarray, centers: np.ndarray, iterations: int):
    """Plain Lloyd iterations; returns (centers, within-cluster SSQ per iteration)."""
    centers = np.array(centers)
    wcss_trace = []
    assignment = None
    for _ in range(iterations):
        new_assignment = _assign(centers, points)
        for b in range(centers.shape[1]):
            members = points[:, new_assignment == b]
            if members.shape[1]:
                centers[:, b] = members.mean(axis=1)
        diff = points - centers[:, _assign(centers, points)]
        wcss_trace.append(float(np.sum(diff * diff)))
        if assignment is not None and np.array_equal(assignment, new_assignment):
            break
        assignment = new_assignment
    return centers, wcss_trace


def bow_encode(images: ImageSet, features: FeatureMatrix, codebook: Codebook) -> list[ImageDescriptor]:
    """Hard-assignment histogram descriptor per image, L1-normalized."""
    images.check_covers(features)
    if features.dim != codebook.centers.shape[0]:
        raise ShapeError("codebook dim does not match features")
    words = _assign(codebook.centers, features.values)
    descriptors = []
    for i in range(len(images)):
        sl = images.image_slice(i)
        hist = np.bincount(words[sl], minlength=codebook.bins).astype(np.float64)
        hist /= hist.sum()
        label = int(images.labels[i]) if images.labels[i] >= 0 else None
        descriptors.append(ImageDescriptor(hist, image_id=i, label=label))
    return descriptors


def export_descriptors(descriptors: list[ImageDescriptor], path) -> None:
    """Write descriptors as a DMAT file, one column per image, labels kept."""
    from .data import save_features

    if not descriptors:
        raise ShapeError("nothing to export")
    matrix = FeatureMatrix(np.stack([d.vector for d in descriptors], axis=1))
    labels = np.array([-1 if d.label is None else d.label for d in descriptors], dtype=np.int64)
    num_classes = int(labels.max()) + 1 if np.any(labels >= 0) else 0
    image_set = ImageSet(
        np.arange(len(descriptors), dtype=np.int64),
        np.ones(len(descriptors), dtype=np.int64),
        labels,
        num_classes,
    )
    save_features(matrix, image_set, path)
