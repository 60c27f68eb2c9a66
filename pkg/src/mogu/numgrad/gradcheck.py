"""Central finite differences, the independent oracle for ``backward``."""
from __future__ import annotations

import math
from typing import Callable

import numpy as np


def finite_diff_grad(fn: Callable[[dict[str, np.ndarray]], float],
                     params: dict[str, np.ndarray], h: float = 1e-5) -> dict[str, np.ndarray]:
    """Estimate ``d fn / d params`` coordinate by coordinate.

    ``fn`` receives a dict of arrays and must return a Python float.  The
    caller's arrays are never modified.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    work = {k: np.array(v, dtype=np.float64, copy=True) for k, v in params.items()}
    grads = {}
    for name, arr in work.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(fn(work))
            flat[i] = orig - h
            fm = float(fn(work))
            flat[i] = orig
            if not (math.isfinite(fp) and math.isfinite(fm)):
                raise FloatingPointError(f"non-finite value perturbing {name}[{i}]")
            gflat[i] = (fp - fm) / (2.0 * h)
        grads[name] = g
    return grads


def relative_error(a: dict[str, np.ndarray], b: dict[str, np.ndarray], floor: float = 1e-6) -> float:
    """``||a - b|| / max(||a||, ||b||, floor)`` over all entries of both dicts."""
    keys = sorted(a)
    va = np.concatenate([np.ravel(a[k]) for k in keys])
    vb = np.concatenate([np.ravel(b[k]) for k in keys])
    denom = max(np.linalg.norm(va), np.linalg.norm(vb), floor)
    return float(np.linalg.norm(va - vb) / denom)
