import numpy as np
import pytest

from uddl import (
    FeatureMatrix,
    FormatError,
    KsvdConfig,
    LinearSvmModel,
    adapt_fit,
    load_model,
    model_from_fit,
    save_model,
)
from uddl.model_io import AdaptedModel


@pytest.fixture
def fitted_model(rng):
    source = FeatureMatrix(rng.normal(size=(5, 40)))
    target = FeatureMatrix(rng.normal(size=(5, 30)))
    config = KsvdConfig(num_atoms=8, sparsity=2, iterations=4, seed=1)
    dicts, _, report = adapt_fit(source, target, config)
    return model_from_fit(dicts, report, config, extra_meta={"dim": 5})


class TestModelRoundTrip:
    def test_dictionaries_bit_exact(self, fitted_model, tmp_path):
        path = tmp_path / "model.uddm"
        save_model(fitted_model, path)
        loaded = load_model(path)
        assert loaded.dicts.source_dict.atoms.tobytes() == fitted_model.dicts.source_dict.atoms.tobytes()
        assert loaded.dicts.target_dict.atoms.tobytes() == fitted_model.dicts.target_dict.atoms.tobytes()
        assert loaded.dicts.source_scales.tobytes() == fitted_model.dicts.source_scales.tobytes()
        assert loaded.dicts.target_scales.tobytes() == fitted_model.dicts.target_scales.tobytes()

    def test_meta_round_trip(self, fitted_model, tmp_path):
        path = tmp_path / "model.uddm"
        save_model(fitted_model, path)
        loaded = load_model(path)
        assert loaded.meta == fitted_model.meta
        report = loaded.fit_report()
        assert report.objective_per_iteration == fitted_model.fit_report().objective_per_iteration

    def test_save_is_deterministic(self, fitted_model, tmp_path):
        a, b = tmp_path / "a.uddm", tmp_path / "b.uddm"
        save_model(fitted_model, a)
        save_model(fitted_model, b)
        assert a.read_bytes() == b.read_bytes()

    def test_svm_section_round_trip(self, fitted_model, rng, tmp_path):
        svm = LinearSvmModel(rng.normal(size=(3, 8)), rng.normal(size=3), 1e-4, 50, 7)
        model = AdaptedModel(fitted_model.dicts, dict(fitted_model.meta), svm)
        path = tmp_path / "model.uddm"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.svm is not None
        assert loaded.svm.weights.tobytes() == svm.weights.tobytes()
        assert loaded.svm.biases.tobytes() == svm.biases.tobytes()
        assert loaded.svm.reg_lambda == svm.reg_lambda
        assert loaded.svm.epochs == svm.epochs

    def test_no_svm_loads_none(self, fitted_model, tmp_path):
        path = tmp_path / "model.uddm"
        save_model(fitted_model, path)
        assert load_model(path).svm is None


class TestModelFormatErrors:
    def test_bad_magic(self, fitted_model, tmp_path):
        path = tmp_path / "model.uddm"
        save_model(fitted_model, path)
        corrupted = tmp_path / "bad.uddm"
        corrupted.write_bytes(b"XDDM" + path.read_bytes()[4:])
        with pytest.raises(FormatError):
            load_model(corrupted)

    def test_truncated_section(self, fitted_model, tmp_path):
        path = tmp_path / "model.uddm"
        save_model(fitted_model, path)
        corrupted = tmp_path / "bad.uddm"
        corrupted.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(FormatError):
            load_model(corrupted)

    def test_missing_required_section(self, tmp_path):
        import struct

        path = tmp_path / "empty.uddm"
        path.write_bytes(struct.pack("<4sII", b"UDDM", 1, 0))
        with pytest.raises(FormatError):
            load_model(path)


class TestBlockIdentityOnReload:
    def test_raw_halves_reassemble_stacked_atoms(self, fitted_model, tmp_path):
        path = tmp_path / "model.uddm"
        save_model(fitted_model, path)
        loaded = load_model(path)
        stacked = np.vstack([loaded.dicts.raw_source(), loaded.dicts.raw_target()])
        norms = np.linalg.norm(stacked, axis=0)
        assert np.allclose(norms, 1.0, atol=1e-9)
