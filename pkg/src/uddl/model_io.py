"""Adapted-model container (UDDM files).

Layout, little-endian:

    magic "UDDM" | u32 version=1 | u32 section_count |
    per section: 4-byte tag | u64 payload_bytes | payload

Matrix payloads follow the DMAT matrix block (u64 rows, u64 cols, row-major
float64). Sections: SRCD / TGTD are the unit-norm per-domain dictionaries,
SCLS is a 2 x K matrix of pre-normalization atom scales (source row 0,
target row 1), SVMW an optional C x (F+1) classifier block with biases in
the last column, and META UTF-8 ``key=value`` lines.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .adapt import AdaptedDictionaries
from .classify import LinearSvmModel
from .errors import FormatError
from .ksvd import Dictionary, FitReport

_MAGIC = b"UDDM"
_VERSION = 1


@dataclass
class AdaptedModel:
    """Everything cmd-adapt learned, plus an optional classifier."""

    dicts: AdaptedDictionaries
    meta: dict = field(default_factory=dict)
    svm: LinearSvmModel | None = None

    @property
    def dim(self) -> int:
        return self.dicts.source_dict.dim

    @property
    def num_atoms(self) -> int:
        return self.dicts.num_atoms

    def fit_report(self) -> FitReport:
        report = FitReport()
        if self.meta.get("objective_trace"):
            report.objective_per_iteration = [float(v) for v in self.meta["objective_trace"].split(",")]
        if self.meta.get("objective_after_coding"):
            report.objective_after_coding = [float(v) for v in self.meta["objective_after_coding"].split(",")]
        report.iterations_run = int(self.meta.get("iterations_run", len(report.objective_per_iteration)))
        report.atoms_replaced = int(self.meta.get("atoms_replaced", 0))
        return report


def _matrix_payload(mat: np.ndarray) -> bytes:
    mat = np.ascontiguousarray(mat, dtype="<f8")
    return struct.pack("<QQ", mat.shape[0], mat.shape[1]) + mat.tobytes()


def _parse_matrix(payload: bytes, tag: str) -> np.ndarray:
    if len(payload) < 16:
        raise FormatError(f"section {tag}: truncated matrix header")
    rows, cols = struct.unpack("<QQ", payload[:16])
    if len(payload) != 16 + 8 * rows * cols:
        raise FormatError(f"section {tag}: payload size does not match {rows}x{cols}")
    return np.frombuffer(payload[16:], dtype="<f8").reshape(rows, cols).copy()


def _meta_payload(meta: dict) -> bytes:
    lines = [f"{key}={meta[key]}" for key in sorted(meta)]
    return "\n".join(lines).encode("utf-8")


def _parse_meta(payload: bytes) -> dict:
    meta = {}
    for line in payload.decode("utf-8").splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        meta[key] = value
    return meta


def save_model(model: AdaptedModel, path) -> None:
    dicts = model.dicts
    scales = np.stack([dicts.source_scales, dicts.target_scales])
    sections: list[tuple[bytes, bytes]] = [
        (b"SRCD", _matrix_payload(dicts.source_dict.atoms)),
        (b"TGTD", _matrix_payload(dicts.target_dict.atoms)),
        (b"SCLS", _matrix_payload(scales)),
    ]
    meta = dict(model.meta)
    if model.svm is not None:
        block = np.hstack([model.svm.weights, model.svm.biases[:, None]])
        sections.append((b"SVMW", _matrix_payload(block)))
        meta.setdefault("svm_reg_lambda", repr(model.svm.reg_lambda))
        meta.setdefault("svm_epochs", str(model.svm.epochs))
        meta.setdefault("svm_seed", str(model.svm.seed))
    sections.append((b"META", _meta_payload(meta)))
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", _MAGIC, _VERSION, len(sections)))
        for tag, payload in sections:
            fh.write(struct.pack("<4sQ", tag, len(payload)))
            fh.write(payload)


def load_model(path) -> AdaptedModel:
    with open(path, "rb") as fh:
        head = fh.read(12)
        if len(head) != 12:
            raise FormatError(f"{path}: truncated header")
        magic, version, count = struct.unpack("<4sII", head)
        if magic != _MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {_MAGIC!r}")
        if version != _VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        raw_sections: dict[str, bytes] = {}
        for _ in range(count):
            section_head = fh.read(12)
            if len(section_head) != 12:
                raise FormatError(f"{path}: truncated section header")
            tag, size = struct.unpack("<4sQ", section_head)
            payload = fh.read(size)
            if len(payload) != size:
                raise FormatError(f"{path}: truncated section {tag!r}")
            raw_sections[tag.decode("ascii", "replace")] = payload

    for required in ("SRCD", "TGTD", "SCLS"):
        if required not in raw_sections:
            raise FormatError(f"{path}: missing section {required}")
    source_atoms = _parse_matrix(raw_sections["SRCD"], "SRCD")
    target_atoms = _parse_matrix(raw_sections["TGTD"], "TGTD")
    scales = _parse_matrix(raw_sections["SCLS"], "SCLS")
    if scales.shape != (2, source_atoms.shape[1]):
        raise FormatError(f"{path}: SCLS must be 2 x K")
    meta = _parse_meta(raw_sections.get("META", b""))
    dicts = AdaptedDictionaries(
        Dictionary(source_atoms),
        Dictionary(target_atoms),
        scales[0],
        scales[1],
    )
    svm = None
    if "SVMW" in raw_sections:
        block = _parse_matrix(raw_sections["SVMW"], "SVMW")
        if block.shape[1] < 2:
            raise FormatError(f"{path}: SVMW must be C x (F+1)")
        svm = LinearSvmModel(
            block[:, :-1],
            block[:, -1],
            float(meta.get("svm_reg_lambda", "1e-4")),
            int(meta.get("svm_epochs", "100")),
            int(meta.get("svm_seed", "0")),
        )
    return AdaptedModel(dicts, meta, svm)


def model_from_fit(dicts: AdaptedDictionaries, report: FitReport, config, extra_meta: dict | None = None) -> AdaptedModel:
    """Bundle a fit's outputs with a config echo into a saveable model."""
    meta = {
        "num_atoms": str(config.num_atoms),
        "sparsity": str(config.sparsity),
        "iterations": str(config.iterations),
        "seed": str(config.seed),
        "unused_atom_threshold": str(config.unused_atom_threshold),
        "convergence_tol": repr(config.convergence_tol),
        "iterations_run": str(report.iterations_run),
        "atoms_replaced": str(report.atoms_replaced),
        "objective_trace": ",".join(repr(v) for v in report.objective_per_iteration),
        "objective_after_coding": ",".join(repr(v) for v in report.objective_after_coding),
    }
    if extra_meta:
        meta.update({k: str(v) for k, v in extra_meta.items()})
    return AdaptedModel(dicts, meta)
