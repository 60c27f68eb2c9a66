"""Random gradient checks for every graph primitive, shared by unit and acceptance tests."""
import numpy as np

from mogu.numgrad import Graph, backward, finite_diff_grad, relative_error


def _positive(rng, shape):
    return rng.uniform(0.2, 2.0, size=shape)


def _signed_away_from_zero(rng, shape):
    return rng.uniform(0.2, 2.0, size=shape) * rng.choice([-1.0, 1.0], size=shape)


def _uniform(rng, shape):
    return rng.uniform(-2.0, 2.0, size=shape)


# name -> (input generators, op builder)
PRIMITIVES = {
    "add": ((_uniform, _uniform), lambda g, a, b: a + b),
    "add_broadcast": ((_uniform, lambda r, s: _uniform(r, s[-1:])), lambda g, a, b: a + b),
    "sub": ((_uniform, _uniform), lambda g, a, b: a - b),
    "mul": ((_uniform, _uniform), lambda g, a, b: a * b),
    "matmul": ((lambda r, s: _uniform(r, (2, 3, 4)), lambda r, s: _uniform(r, (4, 5))),
               lambda g, a, b: a @ b),
    "sum": ((_uniform,), lambda g, a: a.sum(axis=0)),
    "mean": ((_uniform,), lambda g, a: a.mean(axis=1, keepdims=True)),
    "square": ((_uniform,), lambda g, a: a.square()),
    "exp": ((_uniform,), lambda g, a: a.exp()),
    "log": ((_positive,), lambda g, a: a.log()),
    "tanh": ((_uniform,), lambda g, a: a.tanh()),
    "softplus2": ((_uniform,), lambda g, a: a.softplus2()),
    "softmax": ((_uniform,), lambda g, a: a.softmax(axis=-1)),
    "logsumexp": ((_uniform,), lambda g, a: a.logsumexp(axis=0)),
    "reciprocal": ((_signed_away_from_zero,), lambda g, a: a.reciprocal()),
    "clamp_min": ((_uniform,), lambda g, a: a.clamp_min(0.3)),
    "slice": ((_uniform,), lambda g, a: a[1:, ::2]),
    "reshape": ((_uniform,), lambda g, a: a.reshape(-1)),
    "broadcast": ((lambda r, s: _uniform(r, (1, s[1])),), lambda g, a: a.broadcast_to((3, 4))),
    "stack": ((_uniform, _uniform), lambda g, a, b: g.stack([a, b], axis=1)),
}

SHAPE = (3, 4)


def check_primitive(name: str, seed: int, h: float = 1e-5) -> float:
    """Relative error between backward and central differences for one op."""
    gens, build = PRIMITIVES[name]
    rng = np.random.default_rng(seed)
    params = {f"in{i}": gen(rng, SHAPE) for i, gen in enumerate(gens)}
    if name == "clamp_min":
        # keep every entry at least 2h away from the kink
        x = params["in0"]
        params["in0"] = np.where(np.abs(x - 0.3) < 1e-3, x + 1e-2, x)
    g0 = Graph()
    out_shape = build(g0, *(g0.parameter(k, v) for k, v in params.items())).shape
    weights = rng.normal(size=out_shape)

    def graph_loss(p):
        g = Graph()
        out = build(g, *(g.parameter(k, v) for k, v in p.items()))
        return g, (out * weights).sum()

    g, loss = graph_loss(params)
    auto = backward(g, loss)
    fd = finite_diff_grad(lambda p: float(graph_loss(p)[1].data), params, h)
    return relative_error(auto, fd)
