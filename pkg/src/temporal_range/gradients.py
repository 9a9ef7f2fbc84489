"""Exact first-order machinery for sequence models.

Three complementary tools:

* ``input_jacobians``: the blocks ``J[s, t] = d y_s / d x_t`` computed by
  forward propagation of per-origin sensitivity matrices through the
  unrolled cell, composed with the encoder and decoder Jacobians.
* ``fd_jacobian``: a central finite-difference oracle for any single block,
  independent of the analytic path.
* ``param_gradients``: reverse accumulation through the unroll (BPTT) for
  the gradient of a summed per-step loss with respect to every parameter.

Step indices ``s`` and ``t`` are 1-based throughout, matching the usual
"position in the window" convention ``t in {1, .., T}``.
"""

from __future__ import annotations

import dataclasses
import enum

import numpy as np

from .cells import cell_impl
from .errors import NumericalError, ShapeMismatch, SpecError
from .models import SequenceModel

__all__ = [
    "JacobianBlocks",
    "JacobianMode",
    "LossKind",
    "fd_jacobian",
    "input_jacobians",
    "param_gradients",
    "per_step_jacobians",
    "sequence_loss",
]

FD_STEP = 1e-5


class JacobianMode(enum.Enum):
    """Which output/input pairs an analysis considers.

    MULTI_OUTPUT collects every strictly-past block ``t < s <= T``.
    FINAL_OUTPUT collects the last step's row ``J[T, t]`` for ``t = 1..T``,
    which includes the same-step block at lag zero.
    """

    MULTI_OUTPUT = "multi_output"
    FINAL_OUTPUT = "final_output"


class LossKind(enum.Enum):
    MSE = "mse"
    CROSS_ENTROPY = "cross_entropy"


@dataclasses.dataclass
class JacobianBlocks:
    """Jacobian blocks of one rollout, keyed by 1-based ``(s, t)`` pairs."""

    T: int
    c: int
    d: int
    mode: JacobianMode
    blocks: dict[tuple[int, int], np.ndarray]

    def block(self, s: int, t: int) -> np.ndarray:
        return self.blocks[(s, t)]


def _decoder_rows(model: SequenceModel) -> np.ndarray:
    """Decoder Jacobian with respect to the full state, shape (c, S)."""
    rows = np.zeros((model.output_dim, model.state_dim))
    rows[:, :model.cell.hidden_dim] = model.params["dec_W"]
    return rows


def _encoder_jacobian(model: SequenceModel, u_t: np.ndarray) -> np.ndarray:
    """Jacobian of the encoder output at one step, shape (m, d)."""
    if model.encoder_dim is None:
        return np.eye(model.cell.input_dim)
    return (1.0 - u_t * u_t)[:, None] * model.params["enc_W"]


def per_step_jacobians(model: SequenceModel, x):
    """Exact per-step Jacobian factors along one rollout.

    Returns ``(j_state, j_input_x, dec_rows)`` where ``j_state[t-1]`` is
    ``d state_t / d state_{t-1}`` (S, S), ``j_input_x[t-1]`` is
    ``d state_t / d x_t`` (S, d) with the encoder folded in, and
    ``dec_rows`` (c, S) maps any state to its output.  Any block
    ``J[s, t]`` is the product dec_rows @ j_state[s-1] @ .. @ j_state[t]
    @ j_input_x[t-1].
    """
    x = np.asarray(x, dtype=np.float64)
    impl = cell_impl(model.cell.kind)
    _, _, caches = model.forward_batch(x[None])
    j_state = []
    j_input_x = []
    for cache in caches:
        js, ji = impl.step_jacobians(model.params, cache)
        j_state.append(js)
        j_input_x.append(ji @ _encoder_jacobian(model, cache["u"][0]))
    return j_state, j_input_x, _decoder_rows(model)


def input_jacobians(model: SequenceModel, x,
                    mode: JacobianMode = JacobianMode.MULTI_OUTPUT) -> JacobianBlocks:
    """Jacobian blocks of per-step outputs with respect to past inputs.

    Sensitivities ``d state_s / d x_t`` are seeded at each origin step and
    pushed forward through the per-step state Jacobians, so one pass over
    the rollout produces every requested block exactly (up to rounding).

    Raises:
        NumericalError: if any propagated sensitivity stops being finite;
            the offending step index is part of the message.
    """
    x = np.asarray(x, dtype=np.float64)
    T = x.shape[0]
    if T < 2:
        raise ShapeMismatch(f"need at least 2 steps for lag analysis, got T={T}")
    j_state, j_input_x, dec_rows = per_step_jacobians(model, x)
    d = model.cell.input_dim
    S = model.state_dim
    blocks: dict[tuple[int, int], np.ndarray] = {}
    # sens[:, i, :] is d state_s / d x_{i+1} for every origin seeded so far.
    sens = np.zeros((S, 0, d))
    for s in range(1, T + 1):
        if sens.shape[1]:
            # Overflow here is caught by the finiteness check below.
            with np.errstate(over="ignore", invalid="ignore"):
                flat = j_state[s - 1] @ sens.reshape(S, -1)
            sens = flat.reshape(S, sens.shape[1], d)
        sens = np.concatenate([sens, j_input_x[s - 1][:, None, :]], axis=1)
        if not np.all(np.isfinite(sens)):
            raise NumericalError(f"non-finite sensitivity at step s={s}")
        if mode is JacobianMode.MULTI_OUTPUT:
            for t in range(1, s):
                blocks[(s, t)] = dec_rows @ sens[:, t - 1, :]
        elif s == T:
            for t in range(1, T + 1):
                blocks[(T, t)] = dec_rows @ sens[:, t - 1, :]
    return JacobianBlocks(T=T, c=model.output_dim, d=d, mode=mode, blocks=blocks)


def fd_jacobian(model: SequenceModel, x, s: int, t: int, h: float = FD_STEP) -> np.ndarray:
    """Central-difference estimate of ``d y_s / d x_t``; zero when ``t > s``.

    Each input coordinate ``x[t, j]`` is perturbed by ``h * max(1, |x[t, j]|)``
    in both directions.  This is the independent oracle the analytic path is
    validated against.
    """
    x = np.asarray(x, dtype=np.float64)
    T = x.shape[0]
    if not (1 <= s <= T and 1 <= t <= T):
        raise SpecError(f"step indices must lie in 1..{T}, got s={s}, t={t}")
    c, d = model.output_dim, model.cell.input_dim
    if t > s:
        return np.zeros((c, d))
    out = np.empty((c, d))
    # Outputs at step s do not depend on later inputs; truncate the unroll.
    xs = x[:s].copy()
    for j in range(d):
        step = h * max(1.0, abs(xs[t - 1, j]))
        orig = xs[t - 1, j]
        xs[t - 1, j] = orig + step
        y_plus = model.forward(xs).outputs[s - 1]
        xs[t - 1, j] = orig - step
        y_minus = model.forward(xs).outputs[s - 1]
        xs[t - 1, j] = orig
        out[:, j] = (y_plus - y_minus) / (2.0 * step)
    return out


def _loss_grad(loss: LossKind, y: np.ndarray, target) -> tuple[float, np.ndarray]:
    """Loss value and d loss / d y for one batch of step outputs (B, c)."""
    if loss is LossKind.MSE:
        diff = y - target
        return 0.5 * float(np.sum(diff * diff)), diff
    if loss is LossKind.CROSS_ENTROPY:
        shifted = y - y.max(axis=-1, keepdims=True)
        logz = np.log(np.sum(np.exp(shifted), axis=-1))
        idx = np.asarray(target, dtype=np.int64)
        rows = np.arange(y.shape[0])
        value = float(np.sum(logz - shifted[rows, idx]))
        grad = np.exp(shifted) / np.exp(logz)[..., None]
        grad[rows, idx] -= 1.0
        return value, grad
    raise SpecError(f"unknown loss kind: {loss!r}")


def _normalize_loss_steps(loss_steps, T: int) -> list[int]:
    steps = sorted(set(int(s) for s in loss_steps))
    if not steps:
        raise SpecError("loss_steps must not be empty")
    if steps[0] < 1 or steps[-1] > T:
        raise SpecError(f"loss_steps must lie in 1..{T}, got {steps}")
    return steps


def sequence_loss(model: SequenceModel, x, target, loss: LossKind, loss_steps) -> float:
    """Summed per-step loss over ``loss_steps`` (1-based) for one rollout."""
    x = np.asarray(x, dtype=np.float64)
    steps = _normalize_loss_steps(loss_steps, x.shape[0])
    ys = model.forward(x).outputs
    total = 0.0
    for s in steps:
        tgt = target[s - 1]
        if loss is LossKind.CROSS_ENTROPY:
            value, _ = _loss_grad(loss, ys[None, s - 1], np.asarray([tgt]))
        else:
            value, _ = _loss_grad(loss, ys[None, s - 1], np.asarray(tgt)[None])
        total += value
    return total


def zero_gradients(model: SequenceModel) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in model.params.items()}


def batch_param_gradients(model: SequenceModel, X, step_grads) -> dict[str, np.ndarray]:
    """Reverse accumulation through the unroll for a batch.

    ``step_grads`` has shape (B, T, c) and holds d loss / d y_s for every
    sequence and step (zero rows for steps outside the loss).  Returns the
    exact gradient of that scalar loss for every parameter.
    """
    X = np.asarray(X, dtype=np.float64)
    impl = cell_impl(model.cell.kind)
    _, states, caches = model.forward_batch(X)
    p = model.cell.hidden_dim
    B, T, _ = X.shape
    grads = zero_gradients(model)
    d_state = np.zeros((B, model.state_dim))
    dec_W = model.params["dec_W"]
    for s in range(T, 0, -1):
        dy = step_grads[:, s - 1]
        if dy.any():
            read = states[:, s, :p]
            grads["dec_W"] += dy.T @ read
            grads["dec_b"] += dy.sum(axis=0)
            d_state[:, :p] += dy @ dec_W
        d_state, du = impl.backward(model.params, caches[s - 1], d_state, grads)
        if model.encoder_dim is not None:
            u = caches[s - 1]["u"]
            da = du * (1.0 - u * u)
            grads["enc_W"] += da.T @ X[:, s - 1]
            grads["enc_b"] += da.sum(axis=0)
        if not np.all(np.isfinite(d_state)):
            raise NumericalError(f"non-finite adjoint at step s={s}")
    return grads


def param_gradients(model: SequenceModel, x, target, loss: LossKind,
                    loss_steps) -> dict[str, np.ndarray]:
    """Exact gradient of the summed per-step loss for one rollout.

    ``target[s-1]`` supplies the step-``s`` target: a class index for
    cross-entropy or a length-``c`` vector for MSE.  Only steps listed in
    ``loss_steps`` contribute.
    """
    x = np.asarray(x, dtype=np.float64)
    T = x.shape[0]
    steps = _normalize_loss_steps(loss_steps, T)
    ys = model.forward(x).outputs
    step_grads = np.zeros((1, T, model.output_dim))
    for s in steps:
        if loss is LossKind.CROSS_ENTROPY:
            _, g = _loss_grad(loss, ys[None, s - 1], np.asarray([target[s - 1]]))
        else:
            _, g = _loss_grad(loss, ys[None, s - 1], np.asarray(target[s - 1])[None])
        step_grads[0, s - 1] = g[0]
    return batch_param_gradients(model, x[None], step_grads)
