"""Shared builders for the test suite."""

import numpy as np
import pytest

from vnnage.io import Cohort
from vnnage.linalg import normalize_covariance
from vnnage.vnn import LayerConfig, VnnModel, init_parameters


def random_psd(rng: np.random.Generator, m: int) -> np.ndarray:
    root = rng.standard_normal((m + 2, m))
    return root.T @ root / (m + 2)


def build_model(layers, m, *, seed=0, covariance=None, labels=None, taps=None) -> VnnModel:
    """Small model with seeded taps and a normalized covariance."""
    if covariance is None:
        covariance = np.eye(m)
    normalized, lam = normalize_covariance(covariance)
    return VnnModel(
        layers=tuple(layers),
        taps=tuple(taps) if taps is not None else tuple(init_parameters(layers, seed)),
        covariance=normalized,
        lambda_max=lam,
        region_labels=tuple(labels) if labels is not None else tuple(f"r{i}" for i in range(m)),
    )


def toy_cohort(n: int, m: int, seed: int, group: str = "HC") -> Cohort:
    """Cohort whose age is a clean linear function of mean thickness."""
    rng = np.random.default_rng(seed)
    features = 2.5 + 0.5 * rng.standard_normal((n, m))
    ages = 70.0 - 12.0 * (features.mean(axis=1) - 2.5) + 0.5 * rng.standard_normal(n)
    return Cohort(
        subject_ids=[f"s{i:03d}" for i in range(n)],
        ages=ages,
        sexes=["F" if i % 2 else "M" for i in range(n)],
        groups=[group] * n,
        features=features,
        region_labels=tuple(f"r{i}" for i in range(m)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_small_layers(rng: np.random.Generator):
    """Layer chain with widths <= 3, taps <= 4 counts, mixed activations."""
    width = int(rng.integers(1, 4))
    acts = ["relu", "tanh"]
    return (
        LayerConfig(1, width, int(rng.integers(1, 5)), acts[int(rng.integers(0, 2))]),
        LayerConfig(width, width, int(rng.integers(1, 5)), acts[int(rng.integers(0, 2))]),
        LayerConfig(width, 1, int(rng.integers(1, 5)), "identity"),
    )


def finite_difference_grads(model: VnnModel, X, ages, step: float = 1e-5):
    """Central-difference gradient of the batch MSE w.r.t. every tap.

    Independent of the analytic backward path: only uses forward passes
    on perturbed copies of the model.
    """
    from vnnage.training import mse_loss
    from vnnage.vnn import forward_batch

    def loss_for(taps):
        probe = VnnModel(
            layers=model.layers,
            taps=tuple(np.array(b) for b in taps),
            covariance=model.covariance.copy(),
            lambda_max=model.lambda_max,
            region_labels=model.region_labels,
        )
        predictions, _ = forward_batch(probe, X)
        return mse_loss(predictions, ages)

    grads = []
    for layer_idx, block in enumerate(model.taps):
        grad = np.zeros_like(block)
        for flat_idx in range(block.size):
            idx = np.unravel_index(flat_idx, block.shape)
            plus = [np.array(b) for b in model.taps]
            minus = [np.array(b) for b in model.taps]
            plus[layer_idx][idx] += step
            minus[layer_idx][idx] -= step
            grad[idx] = (loss_for(plus) - loss_for(minus)) / (2.0 * step)
        grads.append(grad)
    return grads
