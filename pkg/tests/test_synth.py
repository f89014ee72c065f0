import hashlib

import numpy as np
import pytest

from vnnage.io import REGION_LABELS
from vnnage.linalg import sample_covariance
from vnnage.synth import (
    SynthConfig,
    default_acceptance_config,
    factor_loadings,
    generate_cohort,
)


def small_config(**overrides) -> SynthConfig:
    base = dict(
        n_hc=6,
        n_disease=4,
        age_range=(55.0, 85.0),
        baselines=(2.0, 2.4, 2.8, 3.0),
        aging_slopes=(0.01, 0.02, 0.015, 0.012),
        disease_regions=(0,),
        acceleration=2.0,
        n_latent=0,
        loading_scale=0.0,
        noise_std=0.0,
        seed=5,
    )
    base.update(overrides)
    return SynthConfig(**base)


class TestGenerateCohort:
    def test_noise_free_matches_formula(self):
        config = small_config()
        cohort, truth = generate_cohort(config)
        baselines = np.asarray(config.baselines)
        slopes = np.asarray(config.aging_slopes)
        for i in range(cohort.n_subjects):
            scale = np.ones(4)
            if cohort.groups[i] != "HC":
                scale[0] = config.acceleration
            expected = baselines - slopes * scale * (cohort.ages[i] - 55.0)
            np.testing.assert_array_equal(cohort.features[i], expected)

    def test_zero_slopes_give_baseline_exactly(self):
        config = small_config(aging_slopes=(0.0, 0.0, 0.0, 0.0))
        cohort, _ = generate_cohort(config)
        np.testing.assert_array_equal(
            cohort.features, np.tile(config.baselines, (cohort.n_subjects, 1))
        )

    def test_same_seed_is_bit_identical(self):
        config = small_config(noise_std=0.1, n_latent=2, loading_scale=0.05)
        c1, _ = generate_cohort(config)
        c2, _ = generate_cohort(config)
        np.testing.assert_array_equal(c1.features, c2.features)
        np.testing.assert_array_equal(c1.ages, c2.ages)
        assert c1.subject_ids == c2.subject_ids

    def test_disease_differs_only_in_marked_regions(self):
        config = small_config()
        cohort, truth = generate_cohort(config)
        baselines = np.asarray(config.baselines)
        slopes = np.asarray(config.aging_slopes)
        for i in range(cohort.n_subjects):
            if cohort.groups[i] == "HC":
                continue
            hc_at_same_age = baselines - slopes * (cohort.ages[i] - 55.0)
            diff = cohort.features[i] - hc_at_same_age
            assert diff[0] < 0.0  # accelerated thinning in region 0
            np.testing.assert_array_equal(diff[1:], np.zeros(3))

    def test_groups_and_order(self):
        cohort, truth = generate_cohort(small_config())
        assert cohort.groups == ["HC"] * 6 + ["DIS"] * 4
        assert truth.groups == tuple(cohort.groups)
        assert truth.disease_regions == (0,)

    def test_rejects_bad_config(self):
        with pytest.raises(ValueError):
            small_config(age_range=(85.0, 55.0))
        with pytest.raises(ValueError):
            small_config(disease_regions=(9,))
        with pytest.raises(ValueError):
            small_config(acceleration=0.5)

    def test_config_round_trip(self):
        config = small_config(noise_std=0.2, n_latent=3, loading_scale=0.1)
        again = SynthConfig.from_dict(config.to_dict())
        assert again == config
        with pytest.raises(ValueError):
            SynthConfig.from_dict({**config.to_dict(), "bogus": 1})


class TestCovarianceStructure:
    def test_latent_plus_noise_covariance(self):
        # slopes zero: covariance should approach L L^T + sigma^2 I
        m, k = 12, 3
        config = SynthConfig(
            n_hc=2000,
            n_disease=0,
            age_range=(55.0, 85.0),
            baselines=tuple([2.5] * m),
            aging_slopes=tuple([0.0] * m),
            disease_regions=(),
            acceleration=1.0,
            n_latent=k,
            loading_scale=0.5,
            noise_std=0.2,
            seed=77,
        )
        cohort, _ = generate_cohort(config)
        observed = sample_covariance(cohort.features)
        L = factor_loadings(config)
        expected = L @ L.T + config.noise_std**2 * np.eye(m)
        rel = np.linalg.norm(observed - expected) / np.linalg.norm(expected)
        assert rel < 0.10


class TestDefaultAcceptanceConfig:
    def test_shape_of_config(self):
        config = default_acceptance_config()
        assert len(config.disease_regions) == 8
        assert len(config.region_labels) == 68
        assert config.region_labels == REGION_LABELS
        assert config.n_hc == 400 and config.n_disease == 150
        assert config.acceleration == 2.0 and config.noise_std == 0.1

    def test_reproducible_hash(self):
        h = []
        for _ in range(2):
            cohort, _ = generate_cohort(default_acceptance_config())
            digest = hashlib.sha256()
            digest.update(cohort.ages.tobytes())
            digest.update(cohort.features.tobytes())
            h.append(digest.hexdigest())
        assert h[0] == h[1]

    def test_features_stay_positive(self):
        cohort, _ = generate_cohort(default_acceptance_config())
        assert cohort.features.min() > 0.0
