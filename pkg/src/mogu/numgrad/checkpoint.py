"""Plain-text parameter checkpoints.

One record per line::

    <name> <d0>x<d1>... <v0> <v1> ...

Values are written with 17 significant digits, which round-trips float64
exactly.  Names are sorted so files are byte-stable.
"""
from __future__ import annotations

import os

import numpy as np

HEADER = "# numgrad-checkpoint v1"


class CheckpointError(ValueError):
    pass


def dumps(params: dict[str, np.ndarray]) -> str:
    lines = [HEADER]
    for name in sorted(params):
        arr = np.asarray(params[name], dtype=np.float64)
        if any(c.isspace() for c in name):
            raise CheckpointError(f"parameter name {name!r} contains whitespace")
        shape = "x".join(str(n) for n in arr.shape) or "scalar"
        values = " ".join(format(float(x), ".17g") for x in arr.ravel())
        lines.append(f"{name} {shape} {values}".rstrip())
    return "\n".join(lines) + "\n"


def loads(text: str) -> dict[str, np.ndarray]:
    rows = text.splitlines()
    if not rows or rows[0].strip() != HEADER:
        raise CheckpointError("missing checkpoint header")
    params = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row.strip():
            continue
        parts = row.split()
        if len(parts) < 2:
            raise CheckpointError(f"line {lineno}: truncated record")
        name, shape_s = parts[0], parts[1]
        shape = () if shape_s == "scalar" else tuple(int(n) for n in shape_s.split("x"))
        values = np.array([float(x) for x in parts[2:]], dtype=np.float64)
        if values.size != int(np.prod(shape, dtype=int)):
            raise CheckpointError(f"line {lineno}: {name} expects {shape}, got {values.size} values")
        params[name] = values.reshape(shape)
    return params


def save(path: str | os.PathLike, params: dict[str, np.ndarray]) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(dumps(params))


def load(path: str | os.PathLike) -> dict[str, np.ndarray]:
    with open(path, encoding="ascii") as fh:
        return loads(fh.read())
