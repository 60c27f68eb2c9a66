"""
Reverse-mode gradients on a tiny tape
=====================================

Build a small graph, pull gradients back with ``backward`` and compare them
with central finite differences.
"""
import numpy as np

from mogu.numgrad import Graph, backward, finite_diff_grad, relative_error

rng = np.random.default_rng(0)
params = {"w": rng.normal(size=(3, 4)), "b": np.zeros(4)}
x = rng.normal(size=(5, 3))


def build(p):
    g = Graph()
    h = g.constant(x) @ g.parameter("w", p["w"]) + g.parameter("b", p["b"])
    # softplus in base 2 keeps the output positive, like a variance head
    return g, g.softplus2(h).mean()


g, loss = build(params)
grads = backward(g, loss)
fd = finite_diff_grad(lambda p: float(build(p)[1].data), params)

print("loss", float(loss.data))
print("d loss / d b  (autodiff)", grads["b"])
print("d loss / d b  (finite diff)", fd["b"])
print("relative error", relative_error(grads, fd))
