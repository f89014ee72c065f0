"""Supervised training of the filter-bank network on a healthy cohort.

Gradients are computed by hand: a layer's tap gradient contracts the
cached covariance powers of its input channels against the loss signal
arriving at its pre-activation, and the input gradient pushes that
signal back through the (symmetric) covariance polynomial.  Optimization
is plain minibatch Adam with best-validation-epoch selection.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import stats
from .io import Cohort
from .linalg import normalize_covariance, sample_covariance
from .rng import SplitMix64, derive_seed
from .vnn import (
    VnnModel,
    _activate,
    _activate_grad,
    _channel_powers,
    _layer_preactivation,
    default_architecture,
    forward_batch,
    init_parameters,
)

# Stream tags for deriving independent RNG streams from one base seed.
_STREAM_SPLIT = 1
_STREAM_INIT = 2
_STREAM_EPOCH = 3
_STREAM_MEMBER = 4


@dataclass(frozen=True)
class SplitSpec:
    """Train/validation/test partition, by exact sizes or by fractions.

    With fractions (f_train, f_val, f_test) summing to 1, the validation
    and test counts are floor(n * f) and training takes the remainder.
    """

    fractions: tuple[float, float, float] | None = (0.8, 0.1, 0.1)
    sizes: tuple[int, int, int] | None = None

    def resolve(self, n: int) -> tuple[int, int, int]:
        if self.sizes is not None:
            n_train, n_val, n_test = self.sizes
            if min(n_train, n_val, n_test) < 0 or n_train + n_val + n_test != n:
                raise ValueError(
                    f"split sizes {self.sizes} do not partition {n} subjects"
                )
            return n_train, n_val, n_test
        if self.fractions is None:
            raise ValueError("split needs either fractions or sizes")
        f_train, f_val, f_test = self.fractions
        if min(f_train, f_val, f_test) < 0 or abs(f_train + f_val + f_test - 1.0) > 1e-9:
            raise ValueError("split fractions must be non-negative and sum to 1")
        n_val = int(n * f_val)
        n_test = int(n * f_test)
        n_train = n - n_val - n_test
        if n_train < 1:
            raise ValueError("split leaves no training subjects")
        return n_train, n_val, n_test


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.15
    batch_size: int = 10
    max_epochs: int = 100
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    split: SplitSpec = field(default_factory=SplitSpec)
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")

    def to_dict(self) -> dict:
        split = (
            {"sizes": list(self.split.sizes)}
            if self.split.sizes is not None
            else {"fractions": list(self.split.fractions)}
        )
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_epsilon": self.adam_epsilon,
            "split": split,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        known = {
            "learning_rate",
            "batch_size",
            "max_epochs",
            "adam_beta1",
            "adam_beta2",
            "adam_epsilon",
            "split",
            "seed",
        }
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        kwargs = {k: v for k, v in raw.items() if k != "split"}
        if "split" in raw:
            split_raw = raw["split"]
            extra = set(split_raw) - {"fractions", "sizes"}
            if extra or len(split_raw) != 1:
                raise ValueError("split must contain exactly one of fractions/sizes")
            if "sizes" in split_raw:
                kwargs["split"] = SplitSpec(fractions=None, sizes=tuple(split_raw["sizes"]))
            else:
                kwargs["split"] = SplitSpec(fractions=tuple(split_raw["fractions"]))
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ValueError(f"malformed training config: {exc}") from None


@dataclass
class AdamState:
    """First/second moment accumulators shaped like the tap tensors."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, taps) -> "AdamState":
        return cls(
            m=[np.zeros_like(block) for block in taps],
            v=[np.zeros_like(block) for block in taps],
        )


@dataclass
class TrainReport:
    train_losses: list[float]
    val_maes: list[float]
    selected_epoch: int
    best_val_mae: float | None
    test_mae: float | None
    test_pearson_r: float | None
    split_sizes: tuple[int, int, int]

    def to_dict(self) -> dict:
        return {
            "train_losses": self.train_losses,
            "val_maes": self.val_maes,
            "selected_epoch": self.selected_epoch,
            "best_val_mae": self.best_val_mae,
            "test_mae": self.test_mae,
            "test_pearson_r": self.test_pearson_r,
            "split_sizes": list(self.split_sizes),
        }


def mse_loss(predictions, targets) -> float:
    """Mean squared error over paired predictions/targets."""
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(targets, dtype=float)
    if p.shape != t.shape or p.ndim != 1:
        raise ValueError("predictions and targets must be 1-d of equal length")
    if p.size == 0:
        raise ValueError("inputs must be non-empty")
    return float(np.mean((p - t) ** 2))


def _forward_backward(configs, taps, C, X, ages):
    """Batch loss, predictions and per-layer tap gradients.

    X is (B, m), ages (B,).  Gradients are of the batch-mean squared
    error, so the 1/B averaging is already folded in.
    """
    X = np.asarray(X, dtype=float)
    ages = np.asarray(ages, dtype=float)
    if X.ndim != 2 or X.shape[1] != C.shape[0]:
        raise ValueError(f"X must be (batch, {C.shape[0]})")
    if ages.shape != (X.shape[0],) or X.shape[0] == 0:
        raise ValueError("ages must pair with a non-empty batch")
    B, m = X.shape

    Z = X[:, :, None]
    caches = []
    for cfg, block in zip(configs, taps):
        powers = _channel_powers(C, Z, cfg.num_taps)
        pre = _layer_preactivation(block, powers)
        caches.append((powers, pre))
        Z = _activate(cfg.activation, pre)

    predictions = Z[:, :, 0].mean(axis=1)
    residuals = predictions - ages
    loss = float(np.mean(residuals**2))

    # d(loss)/d(final regional output) = 2 * residual / (B * m)
    grad_out = np.broadcast_to(
        (2.0 / (B * m)) * residuals[:, None, None], (B, m, 1)
    ).copy()

    grads: list[np.ndarray] = [None] * len(configs)  # type: ignore[list-item]
    for idx in range(len(configs) - 1, -1, -1):
        cfg = configs[idx]
        powers, pre = caches[idx]
        grad_pre = grad_out * _activate_grad(cfg.activation, pre)
        grads[idx] = np.einsum("bmf,bkmg->fgk", grad_pre, powers, optimize=True)
        if idx > 0:
            # C is symmetric, so the adjoint of H(C) is H(C) itself.
            back_powers = _channel_powers(C, grad_pre, cfg.num_taps)
            grad_out = np.einsum(
                "fgk,bkmf->bmg", taps[idx], back_powers, optimize=True
            )
    return loss, predictions, grads


def backward(model: VnnModel, X, ages) -> list[np.ndarray]:
    """Gradient of the batch-mean squared error w.r.t. every tap."""
    _, _, grads = _forward_backward(
        model.layers, model.taps, model.covariance, X, ages
    )
    return grads


def adam_step(taps, grads, state: AdamState, config: TrainConfig):
    """One bias-corrected Adam update; returns (new taps, new state)."""
    if len(taps) != len(grads) or len(taps) != len(state.m):
        raise ValueError("taps, grads and state must have matching structure")
    for block, g in zip(taps, grads):
        if block.shape != g.shape:
            raise ValueError("gradient shape does not match parameters")
    t = state.t + 1
    b1, b2, eps = config.adam_beta1, config.adam_beta2, config.adam_epsilon
    new_taps, new_m, new_v = [], [], []
    for block, g, m1, v1 in zip(taps, grads, state.m, state.v):
        m2 = b1 * m1 + (1.0 - b1) * g
        v2 = b2 * v1 + (1.0 - b2) * g * g
        m_hat = m2 / (1.0 - b1**t)
        v_hat = v2 / (1.0 - b2**t)
        new_taps.append(block - config.learning_rate * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m2)
        new_v.append(v2)
    return new_taps, AdamState(m=new_m, v=new_v, t=t)


def split_dataset(cohort: Cohort, config: TrainConfig, seed: int | None = None):
    """Seeded disjoint (train, validation, test) index arrays."""
    n = cohort.n_subjects
    n_train, n_val, n_test = config.split.resolve(n)
    base = config.seed if seed is None else seed
    perm = SplitMix64(derive_seed(base, _STREAM_SPLIT)).permutation(n)
    train_idx = np.array(perm[:n_train], dtype=int)
    val_idx = np.array(perm[n_train : n_train + n_val], dtype=int)
    test_idx = np.array(perm[n_train + n_val : n_train + n_val + n_test], dtype=int)
    return train_idx, val_idx, test_idx


def evaluate(model: VnnModel, cohort: Cohort) -> tuple[float, float | None]:
    """MAE and Pearson r of raw predictions against chronological age.

    r is None when undefined (constant predictions or ages, or fewer
    than two subjects); it is never silently reported as 0.
    """
    if cohort.n_subjects == 0:
        raise ValueError("cohort is empty")
    predictions, _ = forward_batch(model, cohort.features)
    mae_value = stats.mae(predictions, cohort.ages)
    if cohort.n_subjects < 2:
        return mae_value, None
    try:
        r = stats.pearson(predictions, cohort.ages)
    except ValueError:
        return mae_value, None
    return mae_value, r


def train(cohort: Cohort, config: TrainConfig, architecture=None):
    """Train on a cohort of healthy subjects; returns (model, report).

    The covariance is estimated from the full training portion
    (train subset plus validation) once, normalized, and frozen for the
    whole run.  After each epoch the validation MAE of raw predictions
    is recorded and the tap snapshot with the minimum is returned.
    """
    configs = tuple(architecture) if architecture is not None else default_architecture()
    train_idx, val_idx, test_idx = split_dataset(cohort, config)
    if len(train_idx) < config.batch_size:
        raise ValueError(
            f"need at least batch_size={config.batch_size} training subjects, "
            f"got {len(train_idx)}"
        )
    if config.max_epochs > 0 and len(val_idx) == 0:
        raise ValueError("validation split is empty; cannot select an epoch")
    if float(np.ptp(cohort.ages)) == 0.0:
        warnings.warn(
            "cohort ages are constant; downstream bias correction will be undefined",
            stacklevel=2,
        )

    fit_features = cohort.features[np.concatenate([train_idx, val_idx])]
    covariance, lam = normalize_covariance(sample_covariance(fit_features))
    taps = init_parameters(configs, derive_seed(config.seed, _STREAM_INIT))

    def build(tap_blocks, epochs_run, best_val):
        return VnnModel(
            layers=configs,
            taps=tuple(np.array(b) for b in tap_blocks),
            covariance=covariance.copy(),
            lambda_max=lam,
            region_labels=tuple(cohort.region_labels),
            metadata={
                "seed": config.seed,
                "epochs_run": epochs_run,
                "best_val_mae": best_val,
            },
        )

    X_train = cohort.features[train_idx]
    y_train = cohort.ages[train_idx]
    val_cohort = cohort.select(val_idx) if len(val_idx) else None

    state = AdamState.zeros_like(taps)
    train_losses: list[float] = []
    val_maes: list[float] = []
    best_val: float | None = None
    best_taps = [block.copy() for block in taps]
    selected_epoch = 0

    for epoch in range(1, config.max_epochs + 1):
        order = SplitMix64(derive_seed(config.seed, _STREAM_EPOCH, epoch)).permutation(
            len(train_idx)
        )
        batch_losses = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            loss, _, grads = _forward_backward(
                configs, taps, covariance, X_train[batch], y_train[batch]
            )
            taps, state = adam_step(taps, grads, state, config)
            batch_losses.append(loss)
        train_losses.append(float(np.mean(batch_losses)))
        val_mae, _ = evaluate(build(taps, epoch, best_val), val_cohort)
        val_maes.append(val_mae)
        if best_val is None or val_mae < best_val:
            best_val = val_mae
            best_taps = [block.copy() for block in taps]
            selected_epoch = epoch

    final = build(best_taps, config.max_epochs, best_val)
    if len(test_idx):
        test_mae, test_r = evaluate(final, cohort.select(test_idx))
    else:
        test_mae, test_r = None, None
    report = TrainReport(
        train_losses=train_losses,
        val_maes=val_maes,
        selected_epoch=selected_epoch,
        best_val_mae=best_val,
        test_mae=test_mae,
        test_pearson_r=test_r,
        split_sizes=(len(train_idx), len(val_idx), len(test_idx)),
    )
    return final, report


def train_ensemble(cohort: Cohort, config: TrainConfig, n_models: int = 10, architecture=None):
    """Independent training runs over distinct data permutations.

    Member 0 trains with the base config unchanged (so a one-member
    ensemble reproduces train() exactly); later members get seeds
    derived from the base seed, giving each its own split, shuffle
    order and initialization.
    """
    if n_models < 1:
        raise ValueError("n_models must be >= 1")
    results = []
    for member in range(n_models):
        member_config = config if member == 0 else replace(
            config, seed=derive_seed(config.seed, _STREAM_MEMBER, member)
        )
        results.append(train(cohort, member_config, architecture=architecture))
    return results


def ensemble_test_mae(results) -> tuple[float, float]:
    """Mean and (sample) std of test MAE across ensemble members."""
    values = [report.test_mae for _, report in results if report.test_mae is not None]
    if not values:
        raise ValueError("no ensemble member produced a test MAE")
    arr = np.asarray(values, dtype=float)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std
