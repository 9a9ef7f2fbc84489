"""Supervised full-sequence training for sequence models.

Gradients come from exact reverse accumulation through the whole unroll
(no truncation; windows are short enough that the bias of truncated
backprop is not worth trading for speed), are clipped by global norm, and
feed a standard Adam update.  Each call spot-checks its analytic gradients
against central finite differences on one minibatch before the loop starts,
so a broken backward rule fails fast instead of training quietly wrong.
"""

from __future__ import annotations

import dataclasses
import enum
import time

import numpy as np

from .errors import DivergenceError, NumericalError, SpecError
from .gradients import LossKind, batch_param_gradients
from .linalg import Rng
from .models import SequenceModel
from .tasks import LabeledSequence

__all__ = [
    "AdamState",
    "Metric",
    "OptConfig",
    "TrainLog",
    "adam_step",
    "clip_by_global_norm",
    "evaluate",
    "train",
]


class Metric(enum.Enum):
    ACCURACY = "accuracy"
    MSE = "mse"


@dataclasses.dataclass(frozen=True)
class OptConfig:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float = 0.5
    batch_size: int = 32
    steps: int = 2000
    seed: int = 0
    val_fraction: float = 0.1

    def __post_init__(self):
        if not self.lr > 0:
            raise SpecError(f"learning rate must be > 0, got {self.lr}")
        if not self.grad_clip > 0:
            raise SpecError(f"grad clip must be > 0, got {self.grad_clip}")


@dataclasses.dataclass
class AdamState:
    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    @staticmethod
    def init(params: dict[str, np.ndarray]) -> "AdamState":
        return AdamState(
            step=0,
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads: dict[str, np.ndarray], clip: float) -> dict[str, np.ndarray]:
    """Rescale all gradients so their joint norm does not exceed ``clip``."""
    norm = global_norm(grads)
    if norm <= clip:
        return grads
    scale = clip / norm
    return {k: g * scale for k, g in grads.items()}


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, cfg: OptConfig) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update; inputs are left untouched.

    Raises:
        NumericalError: if any gradient is non-finite (the step is rejected).
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {name!r}")
    t = state.step + 1
    new_params = {}
    new_m = {}
    new_v = {}
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        m = cfg.beta1 * state.m[name] + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * state.v[name] + (1.0 - cfg.beta2) * g * g
        new_m[name] = m
        new_v[name] = v
        new_params[name] = p - cfg.lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
    return new_params, AdamState(step=t, m=new_m, v=new_v)


@dataclasses.dataclass
class TrainLog:
    losses: list[float]
    final_train_metric: float
    final_val_metric: float
    metric: Metric
    wall_time_s: float

    def to_csv(self) -> str:
        lines = ["step,loss"]
        lines.extend(f"{i},{repr(v)}" for i, v in enumerate(self.losses))
        return "\n".join(lines) + "\n"


def _stack(data: list[LabeledSequence]):
    X = np.stack([s.x for s in data])
    targets = np.stack([s.targets for s in data])
    masks = np.stack([s.mask for s in data])
    return X, targets, masks


def _batch_loss_and_grads(model: SequenceModel, X, targets, masks, loss: LossKind):
    """Mean-per-masked-step loss and its exact parameter gradients."""
    ys, _, _ = model.forward_batch(X)
    n_masked = int(masks.sum())
    if n_masked == 0:
        raise SpecError("no masked steps in batch")
    scale = 1.0 / n_masked
    B, T, c = ys.shape
    step_grads = np.zeros_like(ys)
    total = 0.0
    if loss is LossKind.CROSS_ENTROPY:
        shifted = ys - ys.max(axis=-1, keepdims=True)
        logz = np.log(np.sum(np.exp(shifted), axis=-1))
        picked = np.take_along_axis(shifted, targets[..., None], axis=-1)[..., 0]
        total = float(np.sum((logz - picked) * masks))
        probs = np.exp(shifted - logz[..., None])
        onehot = np.zeros_like(ys)
        np.put_along_axis(onehot, targets[..., None], 1.0, axis=-1)
        step_grads = (probs - onehot) * masks[..., None] * scale
    else:
        diff = ys - targets
        total = 0.5 * float(np.sum(diff * diff * masks[..., None]))
        step_grads = diff * masks[..., None] * scale
    grads = batch_param_gradients(model, X, step_grads)
    return total * scale, grads


def _fd_spot_check(model: SequenceModel, X, targets, masks, loss: LossKind,
                   rng: Rng, n_coords: int = 20, h: float = 1e-5,
                   tol: float = 1e-4) -> None:
    """Compare a few gradient coordinates against central differences."""
    value, grads = _batch_loss_and_grads(model, X, targets, masks, loss)

    def loss_only(m):
        ys, _, _ = m.forward_batch(X)
        n_masked = int(masks.sum())
        if loss is LossKind.CROSS_ENTROPY:
            shifted = ys - ys.max(axis=-1, keepdims=True)
            logz = np.log(np.sum(np.exp(shifted), axis=-1))
            picked = np.take_along_axis(shifted, targets[..., None], axis=-1)[..., 0]
            return float(np.sum((logz - picked) * masks)) / n_masked
        diff = ys - targets
        return 0.5 * float(np.sum(diff * diff * masks[..., None])) / n_masked

    names = sorted(model.params)
    for _ in range(n_coords):
        name = names[int(rng.integers(0, len(names)))]
        flat_index = int(rng.integers(0, model.params[name].size))
        probe = model.copy()
        arr = probe.params[name].ravel()
        orig = arr[flat_index]
        arr[flat_index] = orig + h
        f_plus = loss_only(probe)
        arr[flat_index] = orig - h
        f_minus = loss_only(probe)
        arr[flat_index] = orig
        fd = (f_plus - f_minus) / (2.0 * h)
        an = float(grads[name].ravel()[flat_index])
        rel = abs(fd - an) / max(1.0, abs(fd), abs(an))
        if rel > tol:
            raise NumericalError(
                f"analytic gradient disagrees with finite differences for "
                f"{name}[{flat_index}]: analytic={an!r}, fd={fd!r}, rel={rel:.3e}")


def train(model: SequenceModel, data: list[LabeledSequence], cfg: OptConfig,
          loss: LossKind = LossKind.CROSS_ENTROPY,
          metric: Metric = Metric.ACCURACY) -> tuple[SequenceModel, TrainLog]:
    """Train a copy of ``model`` on ``data``; the input model is unchanged.

    The data is shuffled once into train/validation splits and minibatch
    order is drawn from the config seed, so the same (seed, data, config)
    always produces the same parameters.  Divergence (loss above 10x the
    initial value for 100 consecutive steps) aborts with an error rather
    than returning a broken model.
    """
    if not data:
        raise SpecError("training data must not be empty")
    t0 = time.perf_counter()
    rng = Rng(cfg.seed)
    X, targets, masks = _stack(data)
    n = X.shape[0]
    n_val = min(int(round(n * cfg.val_fraction)), n - 1) if n > 1 else 0
    order = np.asarray(rng.permutation(n))
    val_idx, train_idx = order[:n_val], order[n_val:]
    Xt, Tt, Mt = X[train_idx], targets[train_idx], masks[train_idx]
    model = model.copy()
    state = AdamState.init(model.params)

    check_n = min(4, Xt.shape[0])
    _fd_spot_check(model, Xt[:check_n], Tt[:check_n], Mt[:check_n], loss, rng)

    losses: list[float] = []
    initial_loss = None
    bad_streak = 0
    perm = np.asarray(rng.permutation(Xt.shape[0]))
    cursor = 0
    for step in range(cfg.steps):
        if cursor + cfg.batch_size > perm.size:
            perm = np.asarray(rng.permutation(Xt.shape[0]))
            cursor = 0
        take = min(cfg.batch_size, perm.size)
        idx = perm[cursor:cursor + take]
        cursor += take
        value, grads = _batch_loss_and_grads(model, Xt[idx], Tt[idx], Mt[idx], loss)
        if not np.isfinite(value):
            raise DivergenceError(f"non-finite loss at step {step}")
        grads = clip_by_global_norm(grads, cfg.grad_clip)
        model.params, state = adam_step(model.params, grads, state, cfg)
        losses.append(value)
        if initial_loss is None:
            initial_loss = value
        bad_streak = bad_streak + 1 if value > 10.0 * initial_loss else 0
        if bad_streak >= 100:
            raise DivergenceError(
                f"loss exceeded 10x the initial value for 100 consecutive "
                f"steps (step {step})")
    train_metric = evaluate(model, [data[i] for i in train_idx], metric)
    if val_idx.size:
        val_metric = evaluate(model, [data[i] for i in val_idx], metric)
    else:
        val_metric = train_metric
    log = TrainLog(losses=losses, final_train_metric=train_metric,
                   final_val_metric=val_metric, metric=metric,
                   wall_time_s=time.perf_counter() - t0)
    return model, log


def evaluate(model: SequenceModel, data: list[LabeledSequence],
             metric: Metric = Metric.ACCURACY) -> float:
    """Masked mean of the metric over all valid steps in ``data``."""
    if not data:
        raise SpecError("evaluation data must not be empty")
    X, targets, masks = _stack(data)
    if not masks.any():
        raise SpecError("no masked steps to evaluate")
    ys, _, _ = model.forward_batch(X)
    if metric is Metric.ACCURACY:
        pred = ys.argmax(axis=-1)
        return float(np.sum((pred == targets) & masks) / masks.sum())
    if metric is Metric.MSE:
        diff = ys - targets
        per_step = np.mean(diff * diff, axis=-1)
        return float(np.sum(per_step * masks) / masks.sum())
    raise SpecError(f"unknown metric: {metric!r}")
