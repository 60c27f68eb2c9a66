"""Minimal float64 autodiff: graph, Adam, finite differences, checkpoints."""
from .graph import Graph, GraphError, NonFiniteError, ShapeError, Tensor, backward, evaluate
from .gradcheck import finite_diff_grad, relative_error
from .optim import Adam, AdamState, MissingGradientError, adam_step
from . import checkpoint


def uniform_init(rng, fan_in: int, shape):
    """Uniform in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``."""
    bound = 1.0 / fan_in ** 0.5
    return rng.uniform(-bound, bound, size=shape)


__all__ = [
    "Adam", "AdamState", "Graph", "GraphError", "MissingGradientError", "NonFiniteError",
    "ShapeError", "Tensor", "adam_step", "backward", "checkpoint", "evaluate",
    "finite_diff_grad", "relative_error", "uniform_init",
]
