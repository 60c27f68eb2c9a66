"""Mini-batch Adam training with early stopping on a validation criterion."""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import WindowSet
from .mixture import DivergenceError, MixtureModel
from .numgrad import AdamState, Graph, NonFiniteError, adam_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 10
    patience: int = 3
    batch_size: int = 8
    learning_rate: float = 1e-4
    seed: int = 0
    shuffle: bool = True
    clip_norm: float = 0.0  # 0 disables global-norm clipping
    early_stopping_metric: str = "loss"  # or "mae"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.early_stopping_metric not in ("loss", "mae"):
            raise ValueError("early_stopping_metric must be 'loss' or 'mae'")


@dataclass
class TrainRecord:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1  # 0-based
    seconds: float = 0.0

    @property
    def epochs_run(self) -> int:
        return len(self.val_loss)

    def to_dict(self) -> dict:
        return asdict(self)


class EarlyStopping:
    """Tracks the best criterion value; ``update`` returns True when patience runs out."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = float("inf")
        self.best_epoch = -1
        self.bad_epochs = 0
        self._epoch = -1

    def update(self, value: float) -> bool:
        self._epoch += 1
        if value < self.best:
            self.best = value
            self.best_epoch = self._epoch
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        return self.bad_epochs >= self.patience


def validate(model: MixtureModel, windows: WindowSet, batch_size: int = 256) -> float:
    """Mean training loss over ``windows``.  No gradients, no parameter changes."""
    if len(windows) == 0:
        raise ValueError("empty validation set")
    total = 0.0
    for i in range(0, len(windows), batch_size):
        x = windows.inputs[i:i + batch_size]
        y = windows.targets[i:i + batch_size]
        total += float(model.loss(Graph(), x, y).data) * len(x)
    return total / len(windows)


def validate_mae(model: MixtureModel, windows: WindowSet) -> float:
    out = model.predict(windows.inputs)
    return float(np.mean(np.abs(out.combined_mean - windows.targets)))


def _clip(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}


def train(model: MixtureModel, train_windows: WindowSet, val_windows: WindowSet,
          config: TrainConfig, validate_fn=None) -> tuple[dict[str, np.ndarray], TrainRecord]:
    """Fit ``model`` in place and return ``(best_params, record)``.

    After the loop the model holds the parameters of the epoch with the best
    validation criterion.  ``validate_fn(model) -> float`` overrides the
    criterion (used by tests).
    """
    if len(train_windows) == 0:
        raise ValueError("empty training partition")
    if validate_fn is None:
        if config.early_stopping_metric == "mae":
            validate_fn = lambda m: validate_mae(m, val_windows)  # noqa: E731
        else:
            validate_fn = lambda m: validate(m, val_windows)  # noqa: E731
    rng = np.random.default_rng(config.seed)
    state = AdamState(lr=config.learning_rate)
    stopper = EarlyStopping(config.patience)
    record = TrainRecord()
    best = {k: v.copy() for k, v in model.params.items()}
    t0 = time.perf_counter()
    n = len(train_windows)
    for epoch in range(config.max_epochs):
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        running, seen = 0.0, 0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            x, y = train_windows.inputs[idx], train_windows.targets[idx]
            try:
                loss, grads = model.loss_and_grad(x, y)
            except (DivergenceError, NonFiniteError) as err:
                raise DivergenceError(f"epoch {epoch + 1}, batch {b + 1}: {err}") from err
            if config.clip_norm > 0:
                grads = _clip(grads, config.clip_norm)
            model.params = adam_step(state, model.params, grads)
            running += loss * len(idx)
            seen += len(idx)
        record.train_loss.append(running / seen)
        val = float(validate_fn(model))
        record.val_loss.append(val)
        stop = stopper.update(val)
        if stopper.best_epoch == epoch:
            best = {k: v.copy() for k, v in model.params.items()}
        log.info("epoch %d train %.6f val %.6f", epoch + 1, record.train_loss[-1], val)
        if stop:
            break
    record.best_epoch = stopper.best_epoch
    record.seconds = time.perf_counter() - t0
    model.params = best
    return best, record
