"""Point-forecast metrics and uncertainty-vs-error correlation."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

from .mixture import MixtureOutput

CHANNELS = ("aleatoric", "epistemic", "total")


class UndefinedCorrelation(ValueError):
    """A correlation input has zero variance."""


def mae_mse(pred, truth) -> tuple[float, float]:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"prediction shape {pred.shape} != truth shape {truth.shape}")
    err = pred - truth
    return float(np.mean(np.abs(err))), float(np.mean(err * err))


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError("pearson: inputs differ in length")
    if a.size < 2:
        raise UndefinedCorrelation("pearson: need at least 2 points")
    da = a - a.mean()
    db = b - b.mean()
    saa, sbb = np.dot(da, da), np.dot(db, db)
    if saa == 0 or sbb == 0:
        raise UndefinedCorrelation("pearson: constant input")
    # one sqrt of the product keeps r exactly +-1 for identical or mirrored inputs
    return float(np.clip(np.dot(da, db) / np.sqrt(saa * sbb), -1.0, 1.0))


def spearman(a, b) -> float:
    """Pearson correlation of average ranks (ties share their mean rank)."""
    return pearson(rankdata(np.ravel(a)), rankdata(np.ravel(b)))


def permutation_pvalue(a, b, n_perm: int = 1000, seed: int = 0) -> float:
    """Two-sided permutation p-value of the Pearson coefficient.

    Uses the ``(1 + hits) / (1 + n_perm)`` estimator, so ``p >= 1/(n_perm+1)``.
    """
    if n_perm < 100:
        raise ValueError("n_perm must be >= 100")
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    observed = abs(pearson(a, b))
    rng = np.random.default_rng(seed)
    za = (a - a.mean()) / np.linalg.norm(a - a.mean())
    zb = (b - b.mean()) / np.linalg.norm(b - b.mean())
    hits = 0
    for _ in range(n_perm):
        r = abs(float(np.dot(za, zb[rng.permutation(zb.size)])))
        # tolerance absorbs rounding in re-ordered sums
        hits += r >= observed - 1e-12
    return (1 + hits) / (1 + n_perm)


@dataclass
class EvalReport:
    mae: float
    mse: float
    n_windows: int
    horizon: int
    variables: list[str]
    per_variable: dict = field(default_factory=dict)   # channel -> {"pearson": [...], "spearman": [...]}
    average: dict = field(default_factory=dict)        # channel -> {"pearson": x, "spearman": y}
    per_horizon: dict = field(default_factory=dict)    # channel -> list of pooled pearson per step
    pvalues: dict = field(default_factory=dict)        # channel -> list per variable
    excluded: dict = field(default_factory=dict)       # channel -> count of degenerate variables
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _channel(out: MixtureOutput, name: str) -> np.ndarray:
    return {"aleatoric": out.aleatoric, "epistemic": out.epistemic,
            "total": out.total_variance}[name]


def _safe(fn, a, b):
    try:
        return fn(a, b)
    except UndefinedCorrelation:
        return None


def uncertainty_error_correlation(out: MixtureOutput, truth, variables=None,
                                  n_perm: int = 0, seed: int = 0) -> EvalReport:
    """Correlate each uncertainty channel with absolute error, per variable.

    For variable ``v`` all (window, step) points are pooled.  Variables whose
    channel or error is constant are dropped from the averages and counted in
    ``excluded``.  ``n_perm > 0`` adds permutation p-values.
    """
    truth = np.asarray(truth, dtype=np.float64)
    pred = out.combined_mean
    mae, mse = mae_mse(pred, truth)
    n, h, V = truth.shape
    if n * h < 2:
        raise ValueError("need at least 2 points per variable")
    abs_err = np.abs(pred - truth)
    variables = list(variables) if variables is not None else [f"v{j}" for j in range(V)]
    report = EvalReport(mae, mse, n, h, variables)
    for c in CHANNELS:
        u = _channel(out, c)
        pr = [_safe(pearson, u[:, :, j], abs_err[:, :, j]) for j in range(V)]
        sr = [_safe(spearman, u[:, :, j], abs_err[:, :, j]) for j in range(V)]
        report.per_variable[c] = {"pearson": pr, "spearman": sr}
        ok_p = [r for r in pr if r is not None]
        ok_s = [r for r in sr if r is not None]
        report.average[c] = {
            "pearson": float(np.mean(ok_p)) if ok_p else None,
            "spearman": float(np.mean(ok_s)) if ok_s else None,
        }
        report.excluded[c] = V - len(ok_p)
        report.per_horizon[c] = [_safe(pearson, u[:, s, :], abs_err[:, s, :]) if n > 1 else None
                                 for s in range(h)]
        if n_perm:
            report.pvalues[c] = [
                permutation_pvalue(u[:, :, j], abs_err[:, :, j], n_perm, seed + j)
                if pr[j] is not None else None
                for j in range(V)
            ]
    return report
