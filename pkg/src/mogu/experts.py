"""Forecasting experts: an encoder, a mean head and a variance head.

Two expert kinds are provided:

``dlinear``
    Moving-average trend/seasonal split followed by two linear maps over the
    time axis whose weights are shared across variables.
``mlp``
    Flatten the window, one tanh hidden layer, linear read-out.

Every expert optionally carries a variance head whose pre-activation goes
through a softplus (base 2 by default) so the predicted variance is positive.
All tensors are batched: inputs are ``(B, T, V)``, means ``(B, h, V)`` and
variances ``(B, h, V)`` or ``(B, 1, V)`` for time-fixed resolution.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .numgrad import Graph, Tensor, uniform_init

KINDS = ("dlinear", "mlp")
HEAD_TYPES = ("fc", "mlp")
RESOLUTIONS = ("time_varying", "time_fixed")


@dataclass(frozen=True)
class ExpertSpec:
    kind: str = "dlinear"
    lookback: int = 96
    horizon: int = 96
    num_variables: int = 1
    hidden_dim: int = 128
    decomposition_kernel: int = 25
    head_type: str = "mlp"
    uncertainty_resolution: str = "time_varying"
    softplus_base: str = "2"
    with_variance: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"expert kind must be one of {KINDS}, got {self.kind!r}")
        if self.head_type not in HEAD_TYPES:
            raise ValueError(f"head_type must be one of {HEAD_TYPES}, got {self.head_type!r}")
        if self.uncertainty_resolution not in RESOLUTIONS:
            raise ValueError(f"uncertainty_resolution must be one of {RESOLUTIONS}")
        if self.softplus_base not in ("2", "e"):
            raise ValueError("softplus_base must be '2' or 'e'")
        for field_name in ("lookback", "horizon", "num_variables", "hidden_dim"):
            if getattr(self, field_name) < 1:
                raise ValueError(f"{field_name} must be >= 1")
        if self.kind == "dlinear":
            _check_kernel(self.decomposition_kernel, self.lookback)

    @property
    def variance_steps(self) -> int:
        return self.horizon if self.uncertainty_resolution == "time_varying" else 1

    def to_dict(self) -> dict:
        return asdict(self)


class ExpertOutput(NamedTuple):
    mean: Tensor
    variance: Tensor | None


def _check_kernel(kernel: int, length: int) -> None:
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError(f"decomposition kernel must be odd and positive, got {kernel}")
    if kernel > length:
        raise ValueError(f"decomposition kernel {kernel} exceeds window length {length}")


def moving_average_matrix(length: int, kernel: int) -> np.ndarray:
    """``A`` such that ``A @ x`` is the centred moving average of ``x`` with
    edge-replication padding."""
    _check_kernel(kernel, length)
    half = (kernel - 1) // 2
    A = np.zeros((length, length))
    for t in range(length):
        for j in range(t - half, t + half + 1):
            A[t, min(max(j, 0), length - 1)] += 1.0 / kernel
    return A


def series_decompose(x: np.ndarray, kernel: int) -> tuple[np.ndarray, np.ndarray]:
    """Split ``x`` (``(..., T, V)``) into ``(trend, seasonal)``; ``trend + seasonal == x``."""
    x = np.asarray(x, dtype=np.float64)
    A = moving_average_matrix(x.shape[-2], kernel)
    trend = A @ x
    return trend, x - trend


def _softplus(graph: Graph, z: Tensor, base: str) -> Tensor:
    out = graph.softplus2(z)
    return out if base == "2" else out * math.log(2.0)


def init_params(spec: ExpertSpec, rng: np.random.Generator, prefix: str = "") -> dict[str, np.ndarray]:
    T, h, V, H = spec.lookback, spec.horizon, spec.num_variables, spec.hidden_dim
    hv = spec.variance_steps
    p = {}
    if spec.kind == "dlinear":
        for part in ("trend", "seasonal"):
            p[f"mean.{part}.w"] = uniform_init(rng, T, (h, T))
            p[f"mean.{part}.b"] = uniform_init(rng, T, (h, 1))
        if spec.with_variance:
            if spec.head_type == "mlp":
                p["var.hidden.w"] = uniform_init(rng, T, (T, T))
                p["var.hidden.b"] = uniform_init(rng, T, (T, 1))
            p["var.out.w"] = uniform_init(rng, T, (hv, T))
            p["var.out.b"] = uniform_init(rng, T, (hv, 1))
    else:
        p["enc.w"] = uniform_init(rng, T * V, (T * V, H))
        p["enc.b"] = uniform_init(rng, T * V, (H,))
        p["mean.w"] = uniform_init(rng, H, (H, h * V))
        p["mean.b"] = uniform_init(rng, H, (h * V,))
        if spec.with_variance:
            if spec.head_type == "mlp":
                p["var.hidden.w"] = uniform_init(rng, H, (H, H))
                p["var.hidden.b"] = uniform_init(rng, H, (H,))
            p["var.out.w"] = uniform_init(rng, H, (H, hv * V))
            p["var.out.b"] = uniform_init(rng, H, (hv * V,))
    return {prefix + k: v for k, v in p.items()}


class _Scope:
    def __init__(self, graph: Graph, params: dict[str, np.ndarray], prefix: str):
        self.graph, self.params, self.prefix = graph, params, prefix

    def __call__(self, name: str) -> Tensor:
        key = self.prefix + name
        return self.graph.parameter(key, self.params[key])


def _check_input(spec: ExpertSpec, x: Tensor) -> None:
    want = (spec.lookback, spec.num_variables)
    if x.data.ndim != 3 or x.shape[1:] != want:
        raise ValueError(f"expert input must be (B, {want[0]}, {want[1]}), got {x.shape}")


def encode(graph: Graph, params, spec: ExpertSpec, x, prefix: str = ""):
    """The encoder ``g``.

    For ``dlinear`` the latent is the ``(trend, seasonal)`` pair; for ``mlp``
    it is the tanh hidden activation of shape ``(B, hidden_dim)``.
    """
    x = graph.lift(x)
    _check_input(spec, x)
    if spec.kind == "dlinear":
        A = graph.constant(moving_average_matrix(spec.lookback, spec.decomposition_kernel))
        trend = A @ x
        return trend, x - trend
    P = _Scope(graph, params, prefix)
    flat = x.reshape(x.shape[0], spec.lookback * spec.num_variables)
    return (flat @ P("enc.w") + P("enc.b")).tanh()


dlinear_forward = encode


def mean_head(graph: Graph, latent, params, spec: ExpertSpec, prefix: str = "") -> Tensor:
    P = _Scope(graph, params, prefix)
    if spec.kind == "dlinear":
        trend, seasonal = latent
        return (P("mean.trend.w") @ trend + P("mean.trend.b")
                + P("mean.seasonal.w") @ seasonal + P("mean.seasonal.b"))
    out = latent @ P("mean.w") + P("mean.b")
    return out.reshape(out.shape[0], spec.horizon, spec.num_variables)


def variance_head(graph: Graph, latent, params, spec: ExpertSpec, prefix: str = "") -> Tensor:
    """Softplus variance from the latent: ``(B, h, V)`` or ``(B, 1, V)``.

    The DLinear head reads the raw window ``trend + seasonal``; the MLP head
    reads the encoder activation.  ``head_type='mlp'`` inserts one tanh hidden
    layer as wide as its input.
    """
    return _softplus(graph, variance_preactivation(graph, latent, params, spec, prefix),
                     spec.softplus_base)


def variance_preactivation(graph: Graph, latent, params, spec: ExpertSpec, prefix: str = "") -> Tensor:
    P = _Scope(graph, params, prefix)
    if spec.kind == "dlinear":
        z = latent[0] + latent[1]
        if spec.head_type == "mlp":
            z = (P("var.hidden.w") @ z + P("var.hidden.b")).tanh()
        return P("var.out.w") @ z + P("var.out.b")
    z = latent
    if spec.head_type == "mlp":
        z = (z @ P("var.hidden.w") + P("var.hidden.b")).tanh()
    out = z @ P("var.out.w") + P("var.out.b")
    return out.reshape(out.shape[0], spec.variance_steps, spec.num_variables)


def expert_forward(graph: Graph, params, spec: ExpertSpec, x, prefix: str = "") -> ExpertOutput:
    latent = encode(graph, params, spec, x, prefix)
    mean = mean_head(graph, latent, params, spec, prefix)
    var = variance_head(graph, latent, params, spec, prefix) if spec.with_variance else None
    return ExpertOutput(mean, var)
