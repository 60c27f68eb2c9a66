"""CSV ingestion, chronological splits, standardisation and windowing.

Also hosts a synthetic heteroscedastic generator whose noise scale is known,
which is what the aleatoric-recovery checks are scored against.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np


class DataError(ValueError):
    pass


@dataclass
class RawSeries:
    timestamps: list[str]
    values: np.ndarray  # (N, V)
    variable_names: list[str]

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def num_variables(self) -> int:
        return self.values.shape[1]


def load_csv(path: str | os.PathLike) -> RawSeries:
    """Read a header + timestamp-first CSV.  Missing or non-numeric cells are errors."""
    if not os.path.exists(path):
        raise DataError(f"dataset not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    if len(header) < 2:
        raise DataError(f"{path}: need a timestamp column and at least one variable")
    if not body:
        raise DataError(f"{path}: no data rows")
    values = np.empty((len(body), len(header) - 1))
    stamps = []
    for r, row in enumerate(body, start=2):  # 1-based file line numbers
        if len(row) != len(header):
            raise DataError(f"{path}: row {r} has {len(row)} fields, header has {len(header)}")
        stamps.append(row[0])
        for c, cell in enumerate(row[1:], start=1):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}: row {r}, column {c} ({header[c]}): "
                                f"cannot parse {cell!r}") from None
            if not math.isfinite(v):
                raise DataError(f"{path}: row {r}, column {c} ({header[c]}): missing value")
            values[r - 2, c - 1] = v
    return RawSeries(stamps, values, [h.strip() for h in header[1:]])


def write_csv(path, series: RawSeries, header0: str = "date") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([header0, *series.variable_names])
        for ts, row in zip(series.timestamps, series.values):
            w.writerow([ts, *(format(float(v), ".17g") for v in row)])


# splits ----------------------------------------------------------------------------------

ETTH_ROWS = (8640, 2880, 2880)
ETTM_ROWS = (34560, 11520, 11520)


@dataclass(frozen=True)
class SplitSpec:
    mode: str = "ratio"
    train: float = 0.7
    val: float = 0.1
    test: float = 0.2

    def __post_init__(self):
        if self.mode not in ("ratio", "rows"):
            raise ValueError("split mode must be 'ratio' or 'rows'")


def chronological_split(n: int, spec: SplitSpec, min_length: int = 1) -> tuple[range, range, range]:
    """Contiguous ``train, val, test`` index ranges in time order."""
    if spec.mode == "ratio":
        if min(spec.train, spec.val, spec.test) < 0 or spec.train + spec.val + spec.test > 1 + 1e-12:
            raise DataError("split fractions must be non-negative and sum to <= 1")
        a = int(round(n * spec.train))
        b = a + int(round(n * spec.val))
        c = b + int(round(n * spec.test))
        c = min(c, n)
    else:
        a = int(spec.train)
        b = a + int(spec.val)
        c = b + int(spec.test)
        if c > n:
            raise DataError(f"row split needs {c} rows, series has {n}")
    parts = (range(0, a), range(a, b), range(b, c))
    for name, r in zip(("train", "val", "test"), parts):
        if len(r) < min_length:
            raise DataError(f"{name} partition has {len(r)} rows, need at least {min_length}")
    return parts


# normalisation -----------------------------------------------------------------------------

@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, values: np.ndarray, names: list[str] | None = None) -> "NormStats":
        mean = values.mean(axis=0)
        std = values.std(axis=0)
        for j, s in enumerate(std):
            if not s > 0:
                label = names[j] if names else str(j)
                raise DataError(f"variable {label!r} is constant on the train partition")
        return cls(mean, std)


def standardize(values: np.ndarray, stats: NormStats) -> np.ndarray:
    return (values - stats.mean) / stats.std


def inverse_standardize(values: np.ndarray, stats: NormStats) -> np.ndarray:
    return values * stats.std + stats.mean


# windows --------------------------------------------------------------------------------------

@dataclass(frozen=True)
class WindowSample:
    input: np.ndarray
    target: np.ndarray
    origin: int


@dataclass
class WindowSet:
    """Stacked windows: inputs ``(n, T, V)``, targets ``(n, h, V)``.

    ``origins[i]`` is the absolute row index of the first target step.
    """

    inputs: np.ndarray
    targets: np.ndarray
    origins: np.ndarray

    def __len__(self) -> int:
        return len(self.origins)

    def __getitem__(self, i) -> WindowSample:
        return WindowSample(self.inputs[i], self.targets[i], int(self.origins[i]))

    def subset(self, idx) -> "WindowSet":
        return WindowSet(self.inputs[idx], self.targets[idx], self.origins[idx])

    def repeat(self, times: int) -> "WindowSet":
        return WindowSet(np.concatenate([self.inputs] * times),
                         np.concatenate([self.targets] * times),
                         np.concatenate([self.origins] * times))


def window_count(length: int, lookback: int, horizon: int, stride: int = 1) -> int:
    return max(0, (length - lookback - horizon) // stride + 1)


def make_windows(values: np.ndarray, lookback: int, horizon: int, stride: int = 1,
                 offset: int = 0) -> WindowSet:
    """All ``(lookback, horizon)`` windows of ``values`` at the given stride.

    ``offset`` is the absolute row of ``values[0]``, used for ``origins``.
    """
    values = np.asarray(values, dtype=np.float64)
    n = window_count(len(values), lookback, horizon, stride)
    if n == 0:
        raise DataError(f"range of {len(values)} rows is too short for lookback {lookback} "
                        f"+ horizon {horizon}")
    starts = np.arange(n) * stride
    view = np.lib.stride_tricks.sliding_window_view(values, lookback + horizon, axis=0)
    # view: (len - L + 1, V, L)
    full = np.ascontiguousarray(view[starts].transpose(0, 2, 1))
    return WindowSet(full[:, :lookback].copy(), full[:, lookback:].copy(), starts + lookback + offset)


@dataclass
class PreparedData:
    train: WindowSet
    val: WindowSet
    test: WindowSet
    stats: NormStats
    ranges: tuple[range, range, range]
    series: RawSeries
    standardized: np.ndarray = field(repr=False)


def prepare(series: RawSeries, split: SplitSpec, lookback: int, horizon: int,
            stride: int = 1) -> PreparedData:
    """Split, fit stats on train rows only, standardise, cut windows.

    Validation and test windows may reach back ``lookback`` rows into the
    preceding partition for their inputs; their targets never leave the
    partition.
    """
    tr, va, te = chronological_split(len(series), split, min_length=lookback + horizon)
    stats = NormStats.fit(series.values[tr.start:tr.stop], series.variable_names)
    z = standardize(series.values, stats)
    wins = []
    for r in (tr, va, te):
        lo = max(0, r.start - lookback)
        wins.append(make_windows(z[lo:r.stop], lookback, horizon, stride, offset=lo))
    return PreparedData(*wins, stats, (tr, va, te), series, z)


# synthetic data -------------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseProfile:
    """Noise scale ``sigma(t) = low + (high - low) * (1 + sin(2 pi t / period + phase)) / 2``.

    ``period`` is per variable; the generated signal always contains a
    sinusoid at that same period so the noise phase is readable from the
    input window.  ``scales`` multiplies sigma per variable (cycled), which
    gives variables distinct noise regimes.
    """

    low: float = 0.05
    high: float = 0.5
    periods: tuple[float, ...] = (24.0, 36.0)
    zero: bool = False
    scales: tuple[float, ...] = (1.0,)


def noise_sigma(n: int, v: int, profile: NoiseProfile, phases: np.ndarray) -> np.ndarray:
    if profile.zero:
        return np.zeros((n, v))
    t = np.arange(n)[:, None]
    periods = np.array([profile.periods[j % len(profile.periods)] for j in range(v)])
    scales = np.array([profile.scales[j % len(profile.scales)] for j in range(v)])
    s = 0.5 * (1.0 + np.sin(2 * np.pi * t / periods + phases))
    return scales * (profile.low + (profile.high - profile.low) * s)


def synth_signal(seed: int, n: int, v: int, profile: NoiseProfile | None = None) -> np.ndarray:
    """The noise-free part of :func:`synth_heteroscedastic` for the same arguments."""
    return _synth_parts(seed, n, v, profile or NoiseProfile())[0]


def _synth_parts(seed, n, v, profile):
    rng = np.random.default_rng(seed)
    t = np.arange(n)[:, None].astype(np.float64)
    periods = np.array([profile.periods[j % len(profile.periods)] for j in range(v)])
    amp = rng.uniform(0.5, 1.5, size=(3, v))
    phase = rng.uniform(0, 2 * np.pi, size=(4, v))
    signal = (amp[0] * np.sin(2 * np.pi * t / periods + phase[0])
              + amp[1] * np.sin(2 * np.pi * t / (periods * 4.0) + phase[1])
              + 0.5 * amp[2] * np.sin(2 * np.pi * t / (periods / 2.0) + phase[2]))
    sigma = noise_sigma(n, v, profile, phase[3])
    return signal, sigma, rng


def synth_heteroscedastic(seed: int, n: int, v: int,
                          profile: NoiseProfile | None = None) -> tuple[RawSeries, np.ndarray]:
    """Sinusoidal series plus Gaussian noise of known, smoothly varying scale.

    Returns the series and the true noise standard deviation ``(n, v)``.
    Fully determined by ``seed``.
    """
    signal, sigma, rng = _synth_parts(seed, n, v, profile or NoiseProfile())
    noise = rng.standard_normal((n, v)) * sigma
    stamps = [f"t{i:06d}" for i in range(n)]
    names = [f"x{j}" for j in range(v)]
    return RawSeries(stamps, signal + noise, names), sigma
