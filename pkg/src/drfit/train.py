"""Training drivers for the doubly regularised objective.

Three solvers share one minibatch loop:

  * analytic: gradient steps on the reduced loss h(theta); the weights
    are the closed-form per-class softmax computed on each minibatch
    (with n_k = rho_k |C_k intersect S|) and never stored between steps.
  * numeric: the alternating scheme — a theta step at the current
    weights, then (after burn-in, at the configured frequency) a weight
    step omega_i <- omega_i - beta [loss_i + alpha log omega_i], clipped
    at zero and renormalised so each class present in the batch has mean
    weight rho_c.
  * plain: omega fixed at rho_c for every example; the unweighted
    baseline the comparisons are made against.

Batches are stratified so every class is represented in every batch.
All randomness flows from TrainConfig.seed; traces are bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import ClassPartition, ConfigError, DrFitConfig, ObservationWeights, analytic_weights
from .data import LabeledDataset
from .nn import MlpParams, NumericError, mlp_forward, per_example_loss, weighted_backward

_LOG_CLAMP = 1e-8

SOLVERS = ("analytic", "numeric", "plain")


class TrainingError(RuntimeError):
    """Training diverged or hit an invalid state; carries the epoch."""

    def __init__(self, msg: str, epoch: int):
        super().__init__(f"{msg} (epoch {epoch})")
        self.epoch = epoch


class RenormError(TrainingError):
    """Every weight of some class in a batch was clipped to zero."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    theta_lr: float
    omega_lr: float = 0.1
    burn_in: int = 3
    update_frequency: int = 1
    seed: int = 0
    solver: str = "analytic"

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be nonnegative")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.update_frequency < 1:
            raise ConfigError("update_frequency must be at least 1")
        if not self.theta_lr > 0:
            raise ConfigError("theta_lr must be positive")
        if self.omega_lr < 0:
            raise ConfigError("omega_lr must be nonnegative")
        if self.burn_in < 0:
            raise ConfigError("burn_in must be nonnegative")
        if self.solver not in SOLVERS:
            raise ConfigError(f"solver must be one of {SOLVERS}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_acc: float | None = None
    test_acc: float | None = None
    snapshot: str | None = None


@dataclass
class TrainTrace:
    records: list[EpochRecord] = field(default_factory=list)

    def append(self, rec: EpochRecord) -> None:
        self.records.append(rec)

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.records]


def evaluate(params: MlpParams, ds: LabeledDataset) -> float:
    """Fraction of examples whose highest-scoring class is the label."""
    if ds.n == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    scores = mlp_forward(params, ds.features).scores
    return float(np.mean(scores.argmax(axis=1) == ds.labels))


def mean_loss(params: MlpParams, ds: LabeledDataset) -> float:
    cache = mlp_forward(params, ds.features)
    return float(per_example_loss(cache, ds.labels).mean())


def _stratified_batches(part: ClassPartition, batch_size: int, rng) -> list[np.ndarray]:
    """Deal each class's shuffled members round-robin over the batches so
    class proportions are as even as possible in every batch."""
    n = part.n
    n_batches = max(1, math.ceil(n / batch_size))
    buckets: list[list[int]] = [[] for _ in range(n_batches)]
    for members in part.classes:
        perm = rng.permutation(members)
        offset = int(rng.integers(n_batches)) if n_batches > 1 else 0
        for j, g in enumerate(perm):
            buckets[(j + offset) % n_batches].append(int(g))
    batches = [np.array(sorted(b), dtype=np.int64) for b in buckets if b]
    order = rng.permutation(len(batches))
    return [batches[i] for i in order]


def _batch_analytic_weights(
    losses_s: np.ndarray, labels_s: np.ndarray, rho: np.ndarray, alpha: float
) -> np.ndarray:
    """Closed-form weights restricted to one batch: per-class softmax of
    -loss/alpha scaled to rho_k times the class's batch count."""
    omega = np.empty_like(losses_s)
    for c in np.unique(labels_s):
        sel = labels_s == c
        t = -losses_s[sel] / alpha
        t -= t.max()
        w = np.exp(t)
        omega[sel] = (rho[c] * sel.sum() / w.sum()) * w
    return omega


def _renormalise(omega_s: np.ndarray, labels_s: np.ndarray, rho: np.ndarray, epoch: int) -> None:
    """Scale each class present in the batch to mean weight rho_c, in place."""
    for c in np.unique(labels_s):
        sel = labels_s == c
        total = omega_s[sel].sum()
        if total <= 0.0:
            raise RenormError(f"all weights of class {c} in a batch are zero", epoch)
        omega_s[sel] *= rho[c] * sel.sum() / total


def _run(
    data: LabeledDataset,
    part: ClassPartition | None,
    dr: DrFitConfig,
    tr: TrainConfig,
    init: MlpParams,
    solver: str,
    val: LabeledDataset | None,
    test: LabeledDataset | None,
    sink=None,
    snapshot_hook=None,
):
    if data.n == 0:
        raise ValueError("training data is empty")
    if part is None:
        part = ClassPartition.from_labels(data.labels)
    k = part.n_classes
    rho = dr.rho_for(k)
    labels = data.labels
    rng = np.random.default_rng(tr.seed)
    params = init.copy()
    omega = rho[labels].astype(np.float64)
    trace = TrainTrace()

    for epoch in range(1, tr.epochs + 1):
        try:
            for subset in _stratified_batches(part, tr.batch_size, rng):
                x_s, y_s = data.features[subset], labels[subset]
                cache = mlp_forward(params, x_s)
                losses_s = per_example_loss(cache, y_s)
                if solver == "analytic":
                    omega_s = _batch_analytic_weights(losses_s, y_s, rho, dr.alpha)
                else:
                    omega_s = omega[subset]
                grad = weighted_backward(params, cache, y_s, omega_s, dr.lam)
                params = params.unflatten(params.flatten() - tr.theta_lr * grad)

                update_now = (
                    solver == "numeric"
                    and epoch > tr.burn_in
                    and epoch % tr.update_frequency == 0
                )
                if update_now:
                    fresh = per_example_loss(mlp_forward(params, x_s), y_s)
                    w = omega[subset] - tr.omega_lr * (
                        fresh + dr.alpha * np.log(np.maximum(omega[subset], _LOG_CLAMP))
                    )
                    np.maximum(w, 0.0, out=w)
                    _renormalise(w, y_s, rho, epoch)
                    omega[subset] = w
        except NumericError as exc:
            raise TrainingError(f"training diverged: {exc}", epoch) from exc

        loss = mean_loss(params, data)
        if not math.isfinite(loss):
            raise TrainingError("non-finite training loss", epoch)
        rec = EpochRecord(
            epoch=epoch,
            train_loss=loss,
            train_acc=evaluate(params, data),
            val_acc=evaluate(params, val) if val is not None else None,
            test_acc=evaluate(params, test) if test is not None else None,
            snapshot=snapshot_hook(epoch, omega.copy()) if snapshot_hook else None,
        )
        trace.append(rec)
        if sink is not None:
            sink(rec)

    if solver == "analytic":
        full_losses = per_example_loss(mlp_forward(params, data.features), labels)
        final = analytic_weights(full_losses, part, dr)
    else:
        final = ObservationWeights(omega)
    return params, final, trace


def train_analytic(data, part, dr, tr, init, val=None, test=None, sink=None):
    """Minibatch descent on the reduced loss; weights implied, not stored."""
    return _run(data, part, dr, tr, init, "analytic", val, test, sink)


def train_numeric(data, part, dr, tr, init, val=None, test=None, sink=None, snapshot_hook=None):
    """The alternating scheme with burn-in, clipping, and renormalisation."""
    return _run(data, part, dr, tr, init, "numeric", val, test, sink, snapshot_hook)


def train_plain(data, part, dr, tr, init, val=None, test=None, sink=None):
    """Fixed omega = rho_c baseline (unweighted when rho is 1)."""
    return _run(data, part, dr, tr, init, "plain", val, test, sink)


def train(data, part, dr, tr, init, val=None, test=None, sink=None):
    """Dispatch on tr.solver."""
    fn = {"analytic": train_analytic, "numeric": train_numeric, "plain": train_plain}[tr.solver]
    return fn(data, part, dr, tr, init, val=val, test=test, sink=sink)
