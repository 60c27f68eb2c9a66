"""Combining Gaussian experts: gating, training losses and the variance split.

Gating modes
    ``input_based``        a softmax gating network reads the input window and
                           emits one weight vector per window.
    ``uncertainty_based``  each expert's weight is its normalised precision,
                           computed independently for every (step, variable).

Losses
    ``moe``               gate-weighted squared error of the expert means.
    ``mog_weighted_nll``  gate-weighted Gaussian NLL of each expert.
    ``mog_logsumexp``     NLL of the full Gaussian mixture density.

Array convention: the expert axis is axis 1, so per-batch stacks are
``(B, k, h, V)``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from . import experts as ex
from .numgrad import Graph, NonFiniteError, Tensor, backward, uniform_init

GATINGS = ("input_based", "uncertainty_based")
LOSSES = ("moe", "mog_weighted_nll", "mog_logsumexp")
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class DivergenceError(FloatingPointError):
    """Training produced a non-finite value."""


class CheckpointMismatch(ValueError):
    pass


@dataclass(frozen=True)
class MixtureSpec:
    k: int = 3
    gating: str = "uncertainty_based"
    loss: str = "mog_weighted_nll"
    gate_grad: str = "flow"
    eps: float = 1e-6

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("expert count k must be >= 1")
        if self.gating not in GATINGS:
            raise ValueError(f"gating must be one of {GATINGS}, got {self.gating!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if self.gate_grad not in ("flow", "detach"):
            raise ValueError("gate_grad must be 'flow' or 'detach'")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.gating == "uncertainty_based" and self.loss == "moe":
            raise ValueError("uncertainty-based gating needs variance heads; the moe loss has none")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ModelSpec:
    expert: ex.ExpertSpec
    mixture: MixtureSpec

    def __post_init__(self):
        needs_var = self.mixture.loss != "moe"
        if self.expert.with_variance != needs_var:
            object.__setattr__(self, "expert", _replace(self.expert, with_variance=needs_var))

    def to_dict(self) -> dict:
        return {"expert": self.expert.to_dict(), "mixture": self.mixture.to_dict()}


def _replace(spec, **kw):
    d = asdict(spec)
    d.update(kw)
    return type(spec)(**d)


@dataclass
class MixtureOutput:
    """Per-window predictions; every array has a leading window axis."""

    expert_means: np.ndarray      # (n, k, h, V)
    expert_variances: np.ndarray  # (n, k, h, V)
    weights: np.ndarray           # (n, k, h, V)
    combined_mean: np.ndarray     # (n, h, V)
    aleatoric: np.ndarray
    epistemic: np.ndarray
    total_variance: np.ndarray

    def __len__(self) -> int:
        return self.combined_mean.shape[0]

    @classmethod
    def concatenate(cls, parts: list["MixtureOutput"]) -> "MixtureOutput":
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in cls.__dataclass_fields__))


# numpy-side combination ---------------------------------------------------------------

def uncertainty_gating_weights(variances, eps: float = 1e-6, axis: int = 0) -> np.ndarray:
    """Normalised precisions ``w_i = s_i^-1 / sum_j s_j^-1`` along ``axis``.

    Variances are floored at ``eps`` first, so the result is always a proper
    simplex.
    """
    prec = 1.0 / np.maximum(np.asarray(variances, dtype=np.float64), eps)
    return prec / prec.sum(axis=axis, keepdims=True)


def combine_mean(weights, expert_means, axis: int = 0) -> np.ndarray:
    return np.sum(np.asarray(weights) * np.asarray(expert_means), axis=axis)


def variance_decomposition(weights, expert_means, expert_variances, combined=None, axis: int = 0):
    """Return ``(aleatoric, epistemic, total)``.

    aleatoric = sum_i w_i s_i, epistemic = sum_i w_i (yhat - y_i)^2.  With
    precision weights the aleatoric term equals the harmonic mean of the
    expert variances.
    """
    w = np.asarray(weights, dtype=np.float64)
    mu = np.asarray(expert_means, dtype=np.float64)
    if combined is None:
        combined = combine_mean(w, mu, axis=axis)
    aleatoric = np.sum(w * np.asarray(expert_variances, dtype=np.float64), axis=axis)
    spread = (np.expand_dims(combined, axis) - mu) ** 2
    epistemic = np.sum(w * spread, axis=axis)
    return aleatoric, epistemic, aleatoric + epistemic


def gaussian_nll(y, mu, var, eps: float = 1e-6) -> np.ndarray:
    """Element-wise ``0.5 * (ln max(var, eps) + (mu - y)^2 / max(var, eps))``."""
    v = np.maximum(np.asarray(var, dtype=np.float64), eps)
    return 0.5 * (np.log(v) + (np.asarray(mu) - np.asarray(y)) ** 2 / v)


# graph-side pieces --------------------------------------------------------------------

def gaussian_nll_graph(graph: Graph, y, mu: Tensor, var: Tensor, eps: float) -> Tensor:
    v = graph.clamp_min(var, eps)
    return 0.5 * (graph.log(v) + graph.square(mu - y) / v)


def _uncertainty_weights_graph(graph: Graph, variances: Tensor, eps: float) -> Tensor:
    prec = graph.reciprocal(graph.clamp_min(variances, eps))
    return prec / prec.sum(axis=1, keepdims=True)


def init_gate_params(spec: ModelSpec, rng: np.random.Generator) -> dict[str, np.ndarray]:
    d = spec.expert.lookback * spec.expert.num_variables
    k = spec.mixture.k
    return {
        "gate.hidden.w": uniform_init(rng, d, (d, d)),
        "gate.hidden.b": uniform_init(rng, d, (d,)),
        "gate.out.w": uniform_init(rng, d, (d, k)),
        "gate.out.b": uniform_init(rng, d, (k,)),
    }


def input_gating_logits(graph: Graph, params, spec: ModelSpec, x) -> Tensor:
    x = graph.lift(x)
    P = ex._Scope(graph, params, "")
    flat = x.reshape(x.shape[0], spec.expert.lookback * spec.expert.num_variables)
    hidden = (flat @ P("gate.hidden.w") + P("gate.hidden.b")).tanh()
    return hidden @ P("gate.out.w") + P("gate.out.b")


def input_gating_weights(graph: Graph, params, spec: ModelSpec, x) -> Tensor:
    """Softmax gate, ``(B, k)``: one weight vector per window."""
    return input_gating_logits(graph, params, spec, x).softmax(axis=-1)


class Forward(NamedTuple):
    means: Tensor            # (B, k, h, V)
    variances: Tensor | None  # (B, k, h, V)
    weights: Tensor          # (B, k, h, V) or (B, k, 1, 1)


class MixtureModel:
    """k experts of one architecture plus the configured gating."""

    def __init__(self, spec: ModelSpec, params: dict[str, np.ndarray] | None = None, seed: int = 0):
        self.spec = spec
        if params is None:
            params = self.init_params(np.random.default_rng(seed))
        else:
            self.check_params(params)
        self.params = params

    def init_params(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        p = {}
        for i in range(self.spec.mixture.k):
            p.update(ex.init_params(self.spec.expert, rng, prefix=f"expert{i}."))
        if self.spec.mixture.gating == "input_based":
            p.update(init_gate_params(self.spec, rng))
        return p

    def check_params(self, params) -> None:
        want = {k: v.shape for k, v in self.init_params(np.random.default_rng(0)).items()}
        got = {k: np.shape(v) for k, v in params.items()}
        if want != got:
            missing = sorted(set(want) - set(got))
            extra = sorted(set(got) - set(want))
            bad = sorted(k for k in set(want) & set(got) if want[k] != got[k])
            raise CheckpointMismatch(
                f"checkpoint does not match model spec (missing={missing[:3]}, "
                f"unexpected={extra[:3]}, wrong_shape={bad[:3]})")

    # --------------------------------------------------------------------------
    def forward(self, graph: Graph, x) -> Forward:
        spec = self.spec
        x = graph.lift(x)
        h, V = spec.expert.horizon, spec.expert.num_variables
        means, variances = [], []
        for i in range(spec.mixture.k):
            try:
                out = ex.expert_forward(graph, self.params, spec.expert, x, prefix=f"expert{i}.")
            except NonFiniteError as err:
                raise DivergenceError(f"expert {i}: {err}") from err
            means.append(out.mean)
            if out.variance is not None:
                var = out.variance
                if var.shape[1] != h:
                    var = var.broadcast_to((var.shape[0], h, V))
                variances.append(var)
        M = graph.stack(means, axis=1)
        S = graph.stack(variances, axis=1) if variances else None
        if spec.mixture.gating == "uncertainty_based":
            W = _uncertainty_weights_graph(graph, S, spec.mixture.eps)
        else:
            g = input_gating_weights(graph, self.params, spec, x)
            W = g.reshape(g.shape[0], spec.mixture.k, 1, 1)
        return Forward(M, S, W)

    def loss(self, graph: Graph, x, y) -> Tensor:
        """Scalar training loss: mean over batch, horizon and variables."""
        fw = self.forward(graph, x)
        return mixture_loss(graph, fw, y, self.spec.mixture)

    def loss_and_grad(self, x, y) -> tuple[float, dict[str, np.ndarray]]:
        graph = Graph()
        loss = self.loss(graph, x, y)
        return float(loss.data), backward(graph, loss)

    def predict(self, x, batch_size: int = 256) -> MixtureOutput:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        parts = [self._predict_batch(x[i:i + batch_size]) for i in range(0, len(x), batch_size)]
        return MixtureOutput.concatenate(parts)

    def _predict_batch(self, x: np.ndarray) -> MixtureOutput:
        fw = self.forward(Graph(), x)
        means = fw.means.data
        variances = fw.variances.data if fw.variances is not None else np.zeros_like(means)
        weights = np.broadcast_to(fw.weights.data, means.shape).copy()
        if self.spec.mixture.gating == "uncertainty_based":
            # recompute on the numpy side; identical to the graph values
            weights = uncertainty_gating_weights(variances, self.spec.mixture.eps, axis=1)
        yhat = combine_mean(weights, means, axis=1)
        alea, epi, total = variance_decomposition(weights, means, variances, yhat, axis=1)
        return MixtureOutput(means, variances, weights, yhat, alea, epi, total)


def mixture_loss(graph: Graph, fw: Forward, y, spec: MixtureSpec) -> Tensor:
    try:
        return _mixture_loss(graph, fw, y, spec)
    except NonFiniteError as err:
        k = fw.means.shape[1]
        parts = [fw.means.data] + ([fw.variances.data] if fw.variances is not None else [])
        bad = [i for i in range(k) if not all(np.isfinite(a[:, i]).all() for a in parts)]
        raise DivergenceError(f"non-finite loss (experts {bad or 'all'}): {err}") from err


def _mixture_loss(graph: Graph, fw: Forward, y, spec: MixtureSpec) -> Tensor:
    y = graph.lift(y)
    if y.data.ndim != 3:
        raise ValueError(f"target must be (B, h, V), got {y.shape}")
    yk = y.reshape(y.shape[0], 1, y.shape[1], y.shape[2])
    W = fw.weights
    if spec.gate_grad == "detach":
        W = W.detach()
    if spec.loss == "moe":
        per = graph.square(fw.means - yk)
        return (W * per).sum(axis=1).mean()
    per = gaussian_nll_graph(graph, yk, fw.means, fw.variances, spec.eps)
    if spec.loss == "mog_weighted_nll":
        return (W * per).sum(axis=1).mean()
    Wf = W.broadcast_to(per.shape) if W.shape != per.shape else W
    log_w = graph.log(graph.clamp_min(Wf, 1e-300))
    return -(log_w - per - HALF_LOG_2PI).logsumexp(axis=1).mean()
