"""Polynomial covariance filters and the filter-bank network built on them.

A filter is a polynomial in the (normalized) covariance matrix with
scalar taps, H(C) = sum_k h_k C^k.  A layer applies a grid of such
filters across input/output channels followed by a pointwise
nonlinearity; the network chains layers and reads out the unweighted
mean of the final per-region channel as its scalar age estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import normalize_covariance
from .rng import SplitMix64

ACTIVATIONS = ("relu", "tanh", "identity")


def _activate(name: str, s: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(s, 0.0)
    if name == "tanh":
        return np.tanh(s)
    if name == "identity":
        return s
    raise ValueError(f"unknown activation {name!r}")


def _activate_grad(name: str, s: np.ndarray) -> np.ndarray:
    # Derivative w.r.t. the pre-activation; relu subgradient at 0 is 0.
    if name == "relu":
        return (s > 0.0).astype(float)
    if name == "tanh":
        t = np.tanh(s)
        return 1.0 - t * t
    if name == "identity":
        return np.ones_like(s)
    raise ValueError(f"unknown activation {name!r}")


@dataclass(frozen=True)
class LayerConfig:
    """One filter-bank layer: f_in input channels to f_out output channels,
    each filter having num_taps polynomial coefficients."""

    f_in: int
    f_out: int
    num_taps: int
    activation: str = "relu"

    def __post_init__(self):
        if self.f_in < 1 or self.f_out < 1 or self.num_taps < 1:
            raise ValueError("f_in, f_out and num_taps must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


def default_architecture() -> tuple[LayerConfig, ...]:
    """Reference brain-age architecture: a 2-tap expansion layer and a
    6-tap hidden layer at width 61, plus a 2-tap linear readout bank.
    Totals 22,570 learnable taps."""
    return (
        LayerConfig(f_in=1, f_out=61, num_taps=2, activation="relu"),
        LayerConfig(f_in=61, f_out=61, num_taps=6, activation="relu"),
        LayerConfig(f_in=61, f_out=1, num_taps=2, activation="identity"),
    )


def parameter_count(configs) -> int:
    """Total learnable taps across a chain of layer configs."""
    return sum(cfg.f_in * cfg.f_out * cfg.num_taps for cfg in configs)


def validate_chain(configs) -> None:
    configs = tuple(configs)
    if not configs:
        raise ValueError("need at least one layer")
    if configs[0].f_in != 1:
        raise ValueError("first layer must take a single input channel")
    if configs[-1].f_out != 1:
        raise ValueError("last layer must emit a single output channel")
    for prev, nxt in zip(configs, configs[1:]):
        if prev.f_out != nxt.f_in:
            raise ValueError(
                f"layer widths do not chain: {prev.f_out} -> {nxt.f_in}"
            )


def init_parameters(configs, seed: int) -> list[np.ndarray]:
    """Seed-deterministic tap tensors, one (f_out, f_in, num_taps) array
    per layer, drawn uniform on (-a, a) with a = 1/sqrt(f_in * num_taps)."""
    validate_chain(configs)
    stream = SplitMix64(seed)
    taps = []
    for cfg in configs:
        a = 1.0 / np.sqrt(cfg.f_in * cfg.num_taps)
        block = np.empty((cfg.f_out, cfg.f_in, cfg.num_taps))
        for f in range(cfg.f_out):
            for g in range(cfg.f_in):
                for k in range(cfg.num_taps):
                    block[f, g, k] = stream.uniform(-a, a)
        taps.append(block)
    return taps


@dataclass(frozen=True)
class VnnModel:
    """A trained or initialized filter-bank network bound to a covariance.

    covariance is stored post-normalization (spectrum in [0, 1]);
    lambda_max is the scale factor that was divided out, kept so the
    same data always reproduces the same predictions.
    """

    layers: tuple[LayerConfig, ...]
    taps: tuple[np.ndarray, ...]
    covariance: np.ndarray
    lambda_max: float
    region_labels: tuple[str, ...]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        validate_chain(self.layers)
        if len(self.taps) != len(self.layers):
            raise ValueError("one tap tensor required per layer")
        for cfg, block in zip(self.layers, self.taps):
            if block.shape != (cfg.f_out, cfg.f_in, cfg.num_taps):
                raise ValueError(
                    f"tap tensor shape {block.shape} does not match layer "
                    f"({cfg.f_out}, {cfg.f_in}, {cfg.num_taps})"
                )
        C = self.covariance
        m = len(self.region_labels)
        if C.shape != (m, m):
            raise ValueError("covariance must be m x m for m region labels")
        if np.max(np.abs(C - C.T), initial=0.0) > 1e-9:
            raise ValueError("covariance must be symmetric")
        if self.lambda_max < 0.0:
            raise ValueError("lambda_max must be non-negative")
        for block in self.taps:
            block.setflags(write=False)
        self.covariance.setflags(write=False)

    @property
    def n_regions(self) -> int:
        return len(self.region_labels)

    @property
    def n_parameters(self) -> int:
        return parameter_count(self.layers)


@dataclass(frozen=True)
class ForwardOutput:
    """Final per-region values and their mean, the raw age estimate."""

    regional_outputs: np.ndarray
    age_estimate: float
    layer_outputs: tuple[np.ndarray, ...] | None = None


def covariance_filter_apply(C, taps, x) -> np.ndarray:
    """Apply H(C) x = sum_k taps[k] C^k x by iterated multiply-accumulate.

    Powers of C are never formed explicitly; cost is O(K m^2).
    """
    C = np.asarray(C, dtype=float)
    h = np.asarray(taps, dtype=float)
    z = np.asarray(x, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError("C must be square")
    if z.shape != (C.shape[0],):
        raise ValueError("x length must match C")
    if h.ndim != 1 or h.size < 1:
        raise ValueError("taps must be a non-empty 1-d array")
    acc = h[0] * z
    w = z
    for k in range(1, h.size):
        w = C @ w
        acc = acc + h[k] * w
    return acc


def frequency_response(taps, lam: float) -> float:
    """Scalar spectral response h(lam) = sum_k taps[k] lam^k (Horner).

    For an eigenpair (v, lam) of C this satisfies
    v^T H(C) x = h(lam) * v^T x, which ties the filter to the principal
    directions of the covariance.
    """
    h = np.asarray(taps, dtype=float)
    acc = 0.0
    for coeff in h[::-1]:
        acc = acc * lam + coeff
    return float(acc)


def _channel_powers(C: np.ndarray, X: np.ndarray, num_taps: int) -> np.ndarray:
    """Stack C^k applied to every channel: X (..., m, F) -> (..., K+1, m, F)."""
    P = np.empty(X.shape[:-2] + (num_taps, X.shape[-2], X.shape[-1]))
    P[..., 0, :, :] = X
    for k in range(1, num_taps):
        P[..., k, :, :] = C @ P[..., k - 1, :, :]
    return P


def _layer_preactivation(taps: np.ndarray, powers: np.ndarray) -> np.ndarray:
    # taps (f_out, f_in, K+1), powers (..., K+1, m, f_in) -> (..., m, f_out)
    return np.einsum("fgk,...kmg->...mf", taps, powers, optimize=True)


def layer_forward(config: LayerConfig, taps, C, X_in) -> np.ndarray:
    """One MIMO filter-bank layer on a single subject.

    X_in is (m, f_in); the result is (m, f_out) where each output channel
    is the activation of the sum over input channels of filtered signals.
    """
    X = np.asarray(X_in, dtype=float)
    block = np.asarray(taps, dtype=float)
    C = np.asarray(C, dtype=float)
    if X.ndim != 2 or X.shape[1] != config.f_in:
        raise ValueError(f"X_in must be (m, {config.f_in})")
    if block.shape != (config.f_out, config.f_in, config.num_taps):
        raise ValueError("tap tensor shape does not match the layer config")
    if C.shape != (X.shape[0], X.shape[0]):
        raise ValueError("C must be m x m matching X_in rows")
    powers = _channel_powers(C, X, config.num_taps)
    return _activate(config.activation, _layer_preactivation(block, powers))


def vnn_forward(model: VnnModel, x, keep_layers: bool = False) -> ForwardOutput:
    """Full forward pass on one subject's m-vector of regional features."""
    z = np.asarray(x, dtype=float)
    if z.shape != (model.n_regions,):
        raise ValueError(f"x must have length {model.n_regions}")
    X = z[:, None]
    collected = []
    for cfg, block in zip(model.layers, model.taps):
        X = layer_forward(cfg, block, model.covariance, X)
        if keep_layers:
            collected.append(X)
    regional = X[:, 0].copy()
    return ForwardOutput(
        regional_outputs=regional,
        age_estimate=float(regional.mean()),
        layer_outputs=tuple(collected) if keep_layers else None,
    )


def forward_batch(model: VnnModel, X) -> tuple[np.ndarray, np.ndarray]:
    """Forward many subjects at once.

    X is (n, m); returns (raw age estimates (n,), regional outputs (n, m)).
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_regions:
        raise ValueError(f"X must be (n, {model.n_regions})")
    Z = X[:, :, None]
    for cfg, block in zip(model.layers, model.taps):
        powers = _channel_powers(model.covariance, Z, cfg.num_taps)
        Z = _activate(cfg.activation, _layer_preactivation(block, powers))
    regional = Z[:, :, 0]
    return regional.mean(axis=1), regional


def with_covariance(model: VnnModel, C_new) -> VnnModel:
    """Rebind the model to a new covariance (normalized by its own
    largest eigenvalue); taps and everything else are shared unchanged."""
    C = np.asarray(C_new, dtype=float)
    m = model.n_regions
    if C.shape != (m, m):
        raise ValueError(f"covariance must be {m} x {m}")
    normalized, lam = normalize_covariance(C)
    return VnnModel(
        layers=model.layers,
        taps=model.taps,
        covariance=normalized,
        lambda_max=lam,
        region_labels=model.region_labels,
        metadata=dict(model.metadata),
    )
