"""Acceptance gate: every criterion below runs at its stated tolerance.

Each test prints one PASS/FAIL line through the conftest hook. The
end-to-end experiment uses the bundled pipeline config; its expected
margins were measured once on the reference setup and are pinned here as
regression floors.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from uddl import (
    Dictionary,
    FeatureMatrix,
    KsvdConfig,
    SynthSpec,
    adapt_fit,
    build_coupling,
    joint_objective,
    ksvd_fit,
    load_features,
    omp_encode,
    read_report,
    sample_protocol,
    synth_domain_pair,
)
from uddl.cli import main
from uddl.rng import generator

from conftest import (
    best_support_bruteforce,
    low_coherence_dictionary,
    nearest_source_bruteforce,
    single_feature_images,
)

CONFIG_PATH = Path(__file__).resolve().parents[1] / "configs" / "synthetic.cfg"

# ---------------------------------------------------------------------------
# recovery fixture shared by the monotonicity and atom-recovery criteria:
# d=20, K=30, L=1500, T0=3, noise 0.01, 50 iterations
# ---------------------------------------------------------------------------

RECOVERY_SEEDS = (0, 1, 2, 3, 4)


def _recovery_spec(seed):
    return SynthSpec(dim=20, atoms=30, classes=1, images_per_class=50,
                     features_per_image=30, sparsity=3, shift_strength=0.0,
                     noise_sigma=0.01, seed=seed)


@pytest.fixture(scope="module")
def recovery_fits():
    fits = {}
    for seed in RECOVERY_SEEDS:
        (source, _), _, truth = synth_domain_pair(_recovery_spec(seed))
        config = KsvdConfig(num_atoms=30, sparsity=3, iterations=50, seed=seed,
                            convergence_tol=0.0)
        started = time.monotonic()
        dictionary, codes, report = ksvd_fit(source, config)
        fits[seed] = (dictionary, truth, report, time.monotonic() - started)
    return fits


def _greedy_match_rate(learned, truth, threshold=0.99):
    matches = np.abs(learned.T @ truth)
    available = matches.copy()
    hits = 0
    for _ in range(truth.shape[1]):
        i, j = np.unravel_index(np.argmax(available), available.shape)
        if available[i, j] > threshold:
            hits += 1
        available[i, :] = -1.0
        available[:, j] = -1.0
    return hits / truth.shape[1]


def test_a1_omp_oracle_equivalence():
    """100 seeded low-coherence instances: OMP equals exhaustive search."""
    started = time.monotonic()
    agreements = 0
    for seed in range(100):
        atoms = low_coherence_dictionary(8, 12, 1.0 / 3.0, seed)
        rng = np.random.Generator(np.random.Philox(seed + 10_000))
        support = tuple(sorted(rng.choice(12, size=2, replace=False)))
        coeffs = rng.uniform(0.5, 1.5, size=2) * rng.choice([-1.0, 1.0], size=2)
        y = atoms[:, list(support)] @ coeffs
        code = omp_encode(y, Dictionary(atoms), sparsity=2)
        oracle_support, _, oracle_residual = best_support_bruteforce(y, atoms, 2)
        assert tuple(code.support.tolist()) == oracle_support
        recon = atoms[:, code.support] @ code.coeffs
        assert abs(np.linalg.norm(y - recon) - oracle_residual) <= 1e-9
        agreements += 1
    assert agreements == 100
    assert time.monotonic() - started < 10.0


def test_a2_ksvd_sweep_monotonicity(recovery_fits):
    """Across 50 iterations the atom sweep never worsens the objective."""
    _, _, report, elapsed = recovery_fits[0]
    assert report.iterations_run == 50
    for coded, swept in zip(report.objective_after_coding, report.objective_per_iteration):
        assert swept <= coded * (1.0 + 1e-9)
    assert elapsed < 60.0


def test_a3_ksvd_atom_recovery(recovery_fits):
    """>= 80% of generating atoms matched at |cos| > 0.99 in >= 4 of 5 seeds."""
    rates = {}
    for seed in RECOVERY_SEEDS:
        dictionary, truth, _, _ = recovery_fits[seed]
        rates[seed] = _greedy_match_rate(dictionary.atoms, truth.atoms)
    passing = sum(1 for rate in rates.values() if rate >= 0.80)
    assert passing >= 4, f"recovery rates {rates}"


def test_a4_coupling_oracle():
    """build_coupling equals brute-force nearest neighbor on 20 seeds."""
    for seed in range(20):
        rng = generator(seed, 42)
        l_s = int(rng.integers(20, 201))
        l_t = int(rng.integers(20, 151))
        source = FeatureMatrix(rng.normal(size=(16, l_s)))
        target = FeatureMatrix(rng.normal(size=(16, l_t)))
        coupling = build_coupling(source, target)
        oracle = nearest_source_bruteforce(source.values, target.values)
        assert np.array_equal(coupling.selected_source, oracle), f"seed {seed}"


def test_a5_block_identity():
    """Stacked objective equals the sum of the two domain terms, 1e-9 relative."""
    for seed in range(4):
        rng = generator(seed, 77)
        source = FeatureMatrix(rng.normal(size=(8, 60)))
        target = FeatureMatrix(rng.normal(size=(8, 45)))
        config = KsvdConfig(num_atoms=12, sparsity=3, iterations=5, seed=seed)
        # adapt_fit re-verifies the identity internally and raises on failure
        dicts, codes, report = adapt_fit(source, target, config)
        coupling = build_coupling(source, target)
        term_source, term_target = joint_objective(source, target, coupling, dicts, codes)
        stacked = report.objective_per_iteration[-1]
        assert abs(term_source + term_target - stacked) <= 1e-9 * max(stacked, 1.0)


def test_a6_end_to_end_adaptation_gain(tmp_path):
    """Bundled synthetic pipeline: adapted beats source-only by >= 10 points
    and chance by >= 30 points; pinned floors are regression fixtures."""
    started = time.monotonic()
    workdir = tmp_path / "run"
    assert main(["pipeline", "--config", str(CONFIG_PATH),
                 "--workdir", str(workdir)]) == 0
    elapsed = time.monotonic() - started
    report = read_report(workdir / "report.tsv")
    adapted = report.mean("adapted")
    source_only = report.mean("source-only")
    bow = report.mean("bow")
    print(f"adapted={adapted:.4f} source-only={source_only:.4f} bow={bow:.4f} "
          f"({elapsed:.0f}s)")
    assert adapted - source_only >= 0.10
    assert adapted - 0.20 >= 0.30
    assert adapted >= 3 * 0.20  # held-out accuracy at least 3x chance
    # regression floors pinned from the reference run
    # (adapted 0.823, source-only 0.592, gap 23.1 points at seed 0)
    assert adapted >= 0.78
    assert adapted - source_only >= 0.18
    assert elapsed < 300.0


def test_a7_protocol_fidelity():
    """20/class over 10 classes -> 200 train ids; 3 labeled target/class -> 30."""
    labels = np.repeat(np.arange(10), 30)
    images = single_feature_images(300, labels, 10)
    train, test = sample_protocol(images, per_class=20, seed=4)
    assert len(train) == 200
    assert len(test) == 100
    target_train, target_test = sample_protocol(images, per_class=0,
                                                labeled_target_per_class=3, seed=4)
    assert len(target_train) == 30
    assert len(target_test) == 270
    assert set(target_train).isdisjoint(target_test)


def test_a8_pipeline_determinism(tmp_path):
    """cmd_pipeline re-run with one config writes byte-identical reports."""
    config = tmp_path / "determinism.cfg"
    workdir = tmp_path / "work"
    config.write_text(
        "dim = 10\natoms = 12\nclasses = 3\nimages_per_class = 8\n"
        "features_per_image = 10\nsynth_sparsity = 2\nshift_strength = 0.5\n"
        "noise_sigma = 0.02\nnum_atoms = 16\nsparsity = 2\niterations = 4\n"
        "trials = 2\nper_class = 4\nepochs = 30\nbaselines = source-only\n"
        f"seed = 11\nworkdir = {workdir}\nfigures = false\n"
    )
    assert main(["pipeline", "--config", str(config)]) == 0
    first = (workdir / "report.tsv").read_bytes()
    assert main(["pipeline", "--config", str(config)]) == 0
    second = (workdir / "report.tsv").read_bytes()
    assert first == second


def test_a9_real_data_ordering():
    """Optional: user-supplied precomputed features (non-gating)."""
    data_dir = os.environ.get("UDDL_OFFICE_DIR", "")
    if not data_dir:
        pytest.skip("set UDDL_OFFICE_DIR to a directory of per-domain DMAT "
                    "files to run the real-data check")
    domains = sorted(Path(data_dir).glob("*.dmat"))
    if len(domains) < 2:
        pytest.skip("need at least two domain files")
    from uddl import model_from_fit
    from uddl.experiment import EvalOptions, run_eval

    failures = []
    for src_path in domains:
        for tgt_path in domains:
            if src_path == tgt_path:
                continue
            source, src_images = load_features(src_path)
            target, tgt_images = load_features(tgt_path)
            config = KsvdConfig(num_atoms=512, sparsity=5, iterations=20, seed=0)
            dicts, _, report = adapt_fit(source, target, config)
            model = model_from_fit(dicts, report, config)
            per_class = 8 if source.count < 4000 else 20
            opts = EvalOptions(trials=20, per_class=per_class, sparsity=5,
                               seed=0, baselines=("bow",), bins=800)
            trial_report, _ = run_eval(model, source, src_images, target, tgt_images, opts)
            if trial_report.mean("adapted") <= trial_report.mean("bow"):
                failures.append((src_path.stem, tgt_path.stem))
    assert not failures, f"adapted did not beat bow on {failures}"
