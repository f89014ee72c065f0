"""End-to-end verification criteria.

Each test covers one release criterion at its stated tolerance and
prints a PASS line (visible under pytest -s) once its assertions hold.
Heavy artifacts (the synthetic cohort, the trained reference-topology
model, the full analysis run) are built once per session and shared.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import quad

from conftest import build_model, finite_difference_grads, random_small_layers, random_psd
from vnnage import io as vio
from vnnage import pipeline, synth, training
from vnnage.linalg import sym_eigendecompose
from vnnage.stats import anova_f_two_group, f_sf
from vnnage.training import TrainConfig, backward
from vnnage.vnn import (
    covariance_filter_apply,
    default_architecture,
    forward_batch,
    frequency_response,
    parameter_count,
)

ACCEPTANCE_TRAIN_SEED = 11


@pytest.fixture(scope="session")
def timings():
    return {}


@pytest.fixture(scope="session")
def acceptance_cohort(timings):
    t0 = time.perf_counter()
    cohort, truth = synth.generate_cohort(synth.default_acceptance_config())
    timings["generate"] = time.perf_counter() - t0
    return cohort, truth


@pytest.fixture(scope="session")
def acceptance_model(acceptance_cohort, timings):
    cohort, _ = acceptance_cohort
    hc = cohort.select_group(vio.HC_GROUP)
    t0 = time.perf_counter()
    model, report = training.train(hc, TrainConfig(seed=ACCEPTANCE_TRAIN_SEED))
    timings["train"] = time.perf_counter() - t0
    return model, report


@pytest.fixture(scope="session")
def acceptance_run(acceptance_cohort, acceptance_model, timings):
    cohort, truth = acceptance_cohort
    model, _ = acceptance_model
    hc = cohort.select_group(vio.HC_GROUP)
    disease = cohort.exclude_group(vio.HC_GROUP)
    t0 = time.perf_counter()
    delta, regions, explain = pipeline.run_pipeline(model, hc, disease)
    timings["pipeline"] = time.perf_counter() - t0
    return delta, regions, explain


def test_criterion_1_spectral_equivalence(rng):
    start = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        m = int(rng.integers(2, 17))
        A = rng.standard_normal((m, m))
        C = 0.5 * (A + A.T)
        C /= np.linalg.norm(C)
        taps = rng.uniform(-1.0, 1.0, size=int(rng.integers(1, 7)))
        x = rng.standard_normal(m)
        eig = sym_eigendecompose(C)
        filtered = covariance_filter_apply(C, taps, x)
        for i in range(m):
            v = eig.eigenvectors[:, i]
            vx = float(v @ x)
            deviation = abs(float(v @ filtered) - frequency_response(taps, eig.eigenvalues[i]) * vx)
            bound = 1e-9 * (1.0 + abs(vx))
            assert deviation <= bound
            worst = max(worst, deviation)
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    print(f"\n[acceptance] criterion 1 PASS: max spectral deviation {worst:.2e} in {elapsed:.2f}s")


def test_criterion_2_gradient_correctness(rng):
    start = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        layers = random_small_layers(rng)
        m = int(rng.integers(2, 9))
        model = build_model(
            layers, m, covariance=random_psd(rng, m), seed=int(rng.integers(1e6))
        )
        X = rng.standard_normal((3, m))
        ages = rng.uniform(1.0, 5.0, size=3)
        analytic = backward(model, X, ages)
        numeric = finite_difference_grads(model, X, ages, step=1e-5)
        for a, n in zip(analytic, numeric):
            err = np.abs(a - n) / np.maximum(np.abs(n), 1e-7)
            small = np.abs(a - n) <= 1e-7
            assert np.all((err <= 1e-5) | small)
            worst = max(worst, float(err[~small].max()) if np.any(~small) else 0.0)
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0
    print(f"\n[acceptance] criterion 2 PASS: max relative gradient error {worst:.2e} in {elapsed:.1f}s")


def test_criterion_3_parameter_count(acceptance_model):
    model, _ = acceptance_model
    assert parameter_count(default_architecture()) == 22570
    assert model.n_parameters == 22570
    assert sum(block.size for block in model.taps) == 22570
    print("\n[acceptance] criterion 3 PASS: reference architecture has 22570 parameters")


def test_criterion_4_bias_correction_identity(acceptance_run, rng):
    delta, _, _ = acceptance_run
    hc_mean = delta.hc_stats.mean
    assert abs(hc_mean) <= 1e-9
    # also directly on an arbitrary synthetic healthy cohort
    ages = rng.uniform(55, 85, size=80)
    raw = 20.0 + 0.6 * ages + rng.standard_normal(80) * 4.0
    corrector = pipeline.fit_bias_corrector(ages, raw)
    deltas = [pipeline.apply_bias_correction(corrector, a, p)[1] for a, p in zip(ages, raw)]
    assert abs(float(np.mean(deltas))) <= 1e-9
    print(f"\n[acceptance] criterion 4 PASS: HC mean delta-age {hc_mean:.2e}")


def test_criterion_5_statistics_oracles(rng):
    result = anova_f_two_group([1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
    assert result.f_value == 13.5

    for _ in range(100):
        n1, n2 = int(rng.integers(2, 40)), int(rng.integers(2, 40))
        a = rng.standard_normal(n1) * rng.uniform(0.5, 2.0)
        b = rng.standard_normal(n2) + rng.uniform(-1.5, 1.5)
        got = anova_f_two_group(a, b).f_value
        sp2 = (np.sum((a - a.mean()) ** 2) + np.sum((b - b.mean()) ** 2)) / (n1 + n2 - 2)
        t = (a.mean() - b.mean()) / math.sqrt(sp2 * (1.0 / n1 + 1.0 / n2))
        assert got == pytest.approx(t * t, rel=1e-10)

    def f_tail_by_quadrature(f, d1, d2):
        ln_beta = math.lgamma(d1 / 2) + math.lgamma(d2 / 2) - math.lgamma((d1 + d2) / 2)

        def pdf(x):
            return math.exp(
                (d1 / 2) * math.log(d1)
                + (d2 / 2) * math.log(d2)
                + (d1 / 2 - 1) * math.log(x)
                - ((d1 + d2) / 2) * math.log(d2 + d1 * x)
                - ln_beta
            )

        tail, _ = quad(pdf, f, math.inf, limit=200)
        return tail

    worst = 0.0
    for d1, d2, f in [
        (1, 4, 13.5),
        (1, 48, 4.04),
        (2, 10, 3.3),
        (3, 33, 7.7),
        (1, 200, 11.1),
        (5, 5, 1.9),
    ]:
        got = f_sf(f, d1, d2)
        want = f_tail_by_quadrature(f, d1, d2)
        worst = max(worst, abs(got - want))
        assert got == pytest.approx(want, abs=1e-6)
    print(f"\n[acceptance] criterion 5 PASS: F oracle exact, tail probabilities within {worst:.2e}")


def test_criterion_6_end_to_end_synthetic_reproduction(
    acceptance_cohort, acceptance_model, acceptance_run, timings
):
    cohort, truth = acceptance_cohort
    model, report = acceptance_model
    delta, regions, explain = acceptance_run

    # (a) reference-topology model trained on synthetic healthy controls
    assert model.layers == default_architecture()
    assert report.selected_epoch >= 1
    assert report.train_losses[-1] < report.train_losses[0]

    # (b) disease group shows elevated delta-age
    hc_deltas = [s.delta_age for s in delta.subjects if s.role == "hc"]
    disease_deltas = [s.delta_age for s in delta.subjects if s.role == "disease"]
    separation = float(np.mean(disease_deltas) - np.mean(hc_deltas))
    anova = anova_f_two_group(disease_deltas, hc_deltas)
    assert separation >= 1.0
    assert anova.p_raw < 0.01

    # (c) the anatomic table ranks the true atrophy regions on top
    order = sorted(range(68), key=lambda i: -regions.rows[i].f_value)
    overlap = len(set(order[:10]) & set(truth.disease_regions))
    assert overlap >= 5

    # (d) at least one covariance eigenvector is flagged, none on an HC copy
    flagged = explain.flagged_indices()
    assert len(flagged) >= 1
    assert all(row.p_raw <= 1e-4 for row in explain.eigen_rows if row.significant)
    hc = cohort.select_group(vio.HC_GROUP)
    _, _, explain_copy = pipeline.run_pipeline(model, hc, hc)
    assert explain_copy.flagged_indices() == []

    total = sum(timings.values())
    assert total < 300.0
    print(
        f"\n[acceptance] criterion 6 PASS: separation {separation:.2f}y "
        f"(p={anova.p_raw:.1e}), {overlap}/8 truth regions in top 10, "
        f"eigenvectors {flagged[:6]} flagged, runtime {total:.0f}s"
    )


def test_criterion_7_determinism_and_persistence(acceptance_model, tmp_path, rng):
    # identical (seed, config, data) -> byte-identical model files/reports
    config = replace(
        synth.default_acceptance_config(), n_hc=50, n_disease=20, seed=2718
    )
    train_config = TrainConfig(
        seed=5, max_epochs=3, batch_size=5, learning_rate=0.05
    )
    artifacts = []
    for tag in ("first", "second"):
        cohort, _ = synth.generate_cohort(config)
        hc = cohort.select_group(vio.HC_GROUP)
        disease = cohort.exclude_group(vio.HC_GROUP)
        model, _ = training.train(hc, train_config)
        model_path = tmp_path / f"model_{tag}.json"
        vio.save_model(model, model_path)
        delta, regions, explain = pipeline.run_pipeline(model, hc, disease)
        delta_path = tmp_path / f"delta_{tag}.json"
        regions_path = tmp_path / f"regions_{tag}.csv"
        vio.export_json(delta.to_dict(), delta_path)
        vio.export_region_table_csv(regions, regions_path)
        artifacts.append(
            model_path.read_bytes() + delta_path.read_bytes() + regions_path.read_bytes()
        )
    assert artifacts[0] == artifacts[1]

    # save/load round trip preserves predictions bit-exactly
    model, _ = acceptance_model
    path = tmp_path / "acceptance_model.json"
    vio.save_model(model, path)
    reloaded = vio.load_model(path)
    X = rng.standard_normal((10, 68)) + 2.5
    before, _ = forward_batch(model, X)
    after, _ = forward_batch(reloaded, X)
    np.testing.assert_array_equal(before, after)
    print("\n[acceptance] criterion 7 PASS: byte-identical reruns and bit-exact round trip")


def test_criterion_8_residual_invariants(acceptance_cohort, acceptance_model, acceptance_run):
    from vnnage.linalg import sample_covariance
    from vnnage.vnn import with_covariance

    cohort, _ = acceptance_cohort
    model, _ = acceptance_model
    delta, _, explain = acceptance_run

    worst_sum = 0.0
    for subject in delta.subjects:
        total = abs(float(subject.regional_residuals.sum()))
        assert total <= 1e-9
        worst_sum = max(worst_sum, total)

    # r == V @ <r, v_j> for every subject, with V from the swapped covariance
    hc = cohort.select_group(vio.HC_GROUP)
    swapped = with_covariance(model, sample_covariance(hc.features))
    eig = sym_eigendecompose(swapped.covariance)
    eigenvalues = np.array([row.eigenvalue for row in explain.eigen_rows])
    np.testing.assert_allclose(eigenvalues, eig.eigenvalues, atol=1e-12)
    worst_roundtrip = 0.0
    for subject, record in zip(delta.subjects, explain.subjects):
        assert subject.subject_id == record.subject_id
        reconstructed = eig.eigenvectors @ record.projections
        gap = float(np.max(np.abs(reconstructed - subject.regional_residuals)))
        assert gap <= 1e-9
        worst_roundtrip = max(worst_roundtrip, gap)

    print(
        f"\n[acceptance] criterion 8 PASS: max |sum r| {worst_sum:.2e}, "
        f"max round-trip gap {worst_roundtrip:.2e}"
    )
