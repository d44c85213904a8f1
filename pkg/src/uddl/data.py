"""Feature-set containers, DMAT file I/O, synthetic domain pairs, sampling.

A feature matrix stores d-dimensional local features column-wise; an image
set partitions its columns into contiguous per-image ranges with optional
class labels. The DMAT container is little-endian binary:

    magic "DMAT" | u32 version=1 | u64 rows | u64 cols |
    rows*cols float64 row-major |
    u8 has_images | [u64 image_count | per image: u64 start, u64 len,
    i64 label (-1 = unlabeled)]

Only labels are persisted; ``num_classes`` is recovered on load as
``max(label) + 1``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ConsistencyError, FormatError, NumericError, SamplingError
from .rng import generator

_MAGIC = b"DMAT"
_VERSION = 1

# stage keys for the synthetic generator
_KEY_DICT, _KEY_SHIFT, _KEY_SOURCE, _KEY_TARGET = 0, 1, 2, 3

# distance between corresponding atoms of different classes relative to
# their shared prototype; calibrated so cross-domain recognition is neither
# trivial nor hopeless at the default spec
_ATOM_SPREAD = 0.32


@dataclass
class FeatureMatrix:
    """Column-major collection of local feature vectors (d rows, L columns)."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise ConsistencyError(f"feature matrix must be 2-D and non-empty, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise NumericError("feature matrix contains non-finite entries")

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def count(self) -> int:
        return self.values.shape[1]


@dataclass
class ImageSet:
    """Contiguous per-image ranges into a feature matrix, with labels.

    ``labels`` uses -1 for unlabeled images; labeled entries lie in
    [0, num_classes).
    """

    starts: np.ndarray
    lengths: np.ndarray
    labels: np.ndarray
    num_classes: int = 0

    def __post_init__(self):
        self.starts = np.asarray(self.starts, dtype=np.int64)
        self.lengths = np.asarray(self.lengths, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = len(self.starts)
        if len(self.lengths) != n or len(self.labels) != n:
            raise ConsistencyError("starts, lengths and labels must have equal length")
        if n and (self.starts[0] != 0 or np.any(self.starts[1:] != self.starts[:-1] + self.lengths[:-1])):
            raise ConsistencyError("image ranges must be contiguous and start at 0")
        if np.any(self.lengths < 1):
            raise ConsistencyError("every image needs at least one feature")
        labeled = self.labels[self.labels >= 0]
        if labeled.size and self.num_classes <= int(labeled.max()):
            raise ConsistencyError("labels must lie in [0, num_classes)")

    def __len__(self) -> int:
        return len(self.starts)

    @property
    def total_features(self) -> int:
        return int(self.lengths.sum()) if len(self.starts) else 0

    def image_slice(self, i: int) -> slice:
        return slice(int(self.starts[i]), int(self.starts[i] + self.lengths[i]))

    def check_covers(self, matrix: FeatureMatrix) -> None:
        if self.total_features != matrix.count:
            raise ConsistencyError(
                f"image index covers {self.total_features} features, matrix has {matrix.count}"
            )


@dataclass
class SynthSpec:
    """Parameters of the synthetic two-domain generator."""

    dim: int = 20
    atoms: int = 30
    classes: int = 5
    images_per_class: int = 40
    features_per_image: int = 30
    sparsity: int = 3
    shift_strength: float = 0.5
    noise_sigma: float = 0.02
    seed: int = 0

    def __post_init__(self):
        for name in ("dim", "atoms", "classes", "images_per_class", "features_per_image", "sparsity"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.sparsity > self.atoms:
            raise ConfigError("sparsity cannot exceed the number of atoms")
        if self.shift_strength < 0 or self.noise_sigma < 0:
            raise ConfigError("shift_strength and noise_sigma must be >= 0")
        if self.classes > self.atoms:
            raise ConfigError("every class needs at least one atom")
        if self.sparsity > self.atoms // self.classes:
            raise ConfigError("sparsity exceeds the per-class atom budget")


def save_features(matrix: FeatureMatrix, image_set: ImageSet | None, path) -> None:
    """Write a feature matrix (and optional image index) as a DMAT file."""
    if image_set is not None:
        image_set.check_covers(matrix)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIQQ", _MAGIC, _VERSION, matrix.dim, matrix.count))
        fh.write(np.ascontiguousarray(matrix.values, dtype="<f8").tobytes())
        if image_set is None:
            fh.write(struct.pack("<B", 0))
        else:
            fh.write(struct.pack("<BQ", 1, len(image_set)))
            per_image = np.empty((len(image_set), 3), dtype="<i8")
            per_image[:, 0] = image_set.starts
            per_image[:, 1] = image_set.lengths
            per_image[:, 2] = image_set.labels
            fh.write(per_image.tobytes())


def load_features(path) -> tuple[FeatureMatrix, ImageSet | None]:
    """Read a DMAT file; inverse of :func:`save_features`."""
    with open(path, "rb") as fh:
        head = fh.read(24)
        if len(head) != 24:
            raise FormatError(f"{path}: truncated header")
        magic, version, rows, cols = struct.unpack("<4sIQQ", head)
        if magic != _MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {_MAGIC!r}")
        if version != _VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        payload = fh.read(8 * rows * cols)
        if len(payload) != 8 * rows * cols:
            raise FormatError(f"{path}: truncated matrix payload")
        values = np.frombuffer(payload, dtype="<f8").reshape(rows, cols).copy()
        flag = fh.read(1)
        if len(flag) != 1:
            raise FormatError(f"{path}: missing image-index flag")
        matrix = FeatureMatrix(values)
        if flag[0] == 0:
            return matrix, None
        (count,) = struct.unpack("<Q", fh.read(8))
        raw = fh.read(24 * count)
        if len(raw) != 24 * count:
            raise FormatError(f"{path}: truncated image index")
        per_image = np.frombuffer(raw, dtype="<i8").reshape(count, 3)
        labels = per_image[:, 2]
        num_classes = int(labels.max()) + 1 if np.any(labels >= 0) else 0
        image_set = ImageSet(per_image[:, 0].copy(), per_image[:, 1].copy(), labels.copy(), num_classes)
        image_set.check_covers(matrix)
        return matrix, image_set


def _unit_atoms(mat: np.ndarray) -> np.ndarray:
    return mat / np.linalg.norm(mat, axis=0)


def _synth_domain(atoms: np.ndarray, class_atoms: list[np.ndarray], spec: SynthSpec, stage: int):
    rng = generator(spec.seed, stage)
    n_images = spec.classes * spec.images_per_class
    n_feat = n_images * spec.features_per_image
    values = np.empty((spec.dim, n_feat))
    col = 0
    labels = np.repeat(np.arange(spec.classes, dtype=np.int64), spec.images_per_class)
    for c in range(spec.classes):
        pool = class_atoms[c]
        for _img in range(spec.images_per_class):
            for _feat in range(spec.features_per_image):
                support = rng.choice(pool, size=spec.sparsity, replace=False)
                coeffs = rng.uniform(0.5, 1.5, size=spec.sparsity) * rng.choice([-1.0, 1.0], size=spec.sparsity)
                feat = atoms[:, support] @ coeffs
                if spec.noise_sigma > 0:
                    feat = feat + rng.normal(0.0, spec.noise_sigma, size=spec.dim)
                values[:, col] = feat
                col += 1
    lengths = np.full(n_images, spec.features_per_image, dtype=np.int64)
    starts = np.arange(n_images, dtype=np.int64) * spec.features_per_image
    image_set = ImageSet(starts, lengths, labels, spec.classes)
    return FeatureMatrix(values), image_set


def synth_domain_pair(spec: SynthSpec):
    """Generate a (source, target) feature-set pair with a known dictionary.

    A ground-truth dictionary with unit-norm atoms is drawn first; each class
    owns a disjoint block of atoms. Corresponding atoms of different classes
    are near-twins (a shared prototype direction plus a class-specific
    deviation), which mirrors how visual codewords of different categories
    overlap and keeps the recognition task from saturating; with a single
    class the atoms are simply independent random directions. Every local
    feature is a sparse combination of its class atoms plus Gaussian noise.
    Target features use atoms passed through per-class perturbations
    Q_c = I + shift_strength * A_c (A_c seeded random, scaled to unit
    spectral norm) and re-normalized, so the two domains share class
    structure but differ in distribution.

    Returns ((source_matrix, source_images), (target_matrix, target_images),
    ground_truth_dictionary).
    """
    from .ksvd import Dictionary

    rng = generator(spec.seed, _KEY_DICT)

    # per-class atom blocks; leftover atoms go to the earliest classes
    base, extra = divmod(spec.atoms, spec.classes)
    sizes = [base + (1 if c < extra else 0) for c in range(spec.classes)]
    prototypes = _unit_atoms(rng.normal(size=(spec.dim, max(sizes))))
    true_atoms = np.empty((spec.dim, spec.atoms))
    class_atoms = []
    offset = 0
    for c in range(spec.classes):
        deviation = _ATOM_SPREAD * rng.normal(size=(spec.dim, sizes[c])) / np.sqrt(spec.dim)
        true_atoms[:, offset:offset + sizes[c]] = _unit_atoms(prototypes[:, : sizes[c]] + deviation)
        class_atoms.append(np.arange(offset, offset + sizes[c]))
        offset += sizes[c]

    target_atoms = np.array(true_atoms)
    if spec.shift_strength > 0:
        # each class's atoms pass through their own linear perturbation
        # Q_c = I + shift_strength * A_c with A_c scaled to unit spectral
        # norm; per-class transforms scramble atom identities across domains
        # while every class subspace stays closest to its own source subspace
        shift_rng = generator(spec.seed, _KEY_SHIFT)
        for cols in class_atoms:
            a = shift_rng.normal(size=(spec.dim, spec.dim))
            a /= np.linalg.norm(a, ord=2)
            q = np.eye(spec.dim) + spec.shift_strength * a
            target_atoms[:, cols] = _unit_atoms(q @ true_atoms[:, cols])

    source = _synth_domain(true_atoms, class_atoms, spec, _KEY_SOURCE)
    target = _synth_domain(target_atoms, class_atoms, spec, _KEY_TARGET)
    return source, target, Dictionary(true_atoms)


def sample_protocol(
    image_set: ImageSet,
    per_class: int,
    labeled_target_per_class: int = 0,
    seed: int = 0,
) -> tuple[list[int], list[int]]:
    """Split one domain's images into train and test ids.

    ``per_class`` labeled images per class go to training (source role);
    ``labeled_target_per_class`` more per class are moved from test to
    training (semi-supervised target role). All remaining labeled images
    form the test set. Unlabeled images are not eligible for either side.
    """
    if per_class < 0 or labeled_target_per_class < 0:
        raise ConfigError("per-class counts must be >= 0")
    rng = generator(seed)
    by_class: dict[int, np.ndarray] = {}
    for c in range(image_set.num_classes):
        by_class[c] = np.flatnonzero(image_set.labels == c)
    want = per_class + labeled_target_per_class
    train: list[int] = []
    taken = np.zeros(len(image_set), dtype=bool)
    for c in range(image_set.num_classes):
        ids = by_class[c]
        if len(ids) < want:
            raise SamplingError(
                f"class {c} has {len(ids)} images, protocol needs {want} per class"
            )
        pick = rng.choice(ids, size=want, replace=False) if want else np.empty(0, dtype=np.int64)
        train.extend(int(i) for i in np.sort(pick))
        taken[pick] = True
    test = [int(i) for i in np.flatnonzero((~taken) & (image_set.labels >= 0))]
    return train, test
