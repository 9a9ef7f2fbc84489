"""Behavioral validation via truncated observation windows.

``windowed_forward`` rebuilds the hidden state at every step from only the
last ``m`` observations (cold restart from the zero state), which turns
"how far back does the model look" into a measurable performance question:
sweeping ``m`` produces a curve whose knee marks the smallest window that
preserves full-context behavior, and the deployment check compares the
window suggested by a measured range against half that window.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import SpecError
from .metric import TemporalRangeReport
from .models import OutputSequence, SequenceModel
from .tasks import LabeledSequence
from .training import Metric, evaluate

__all__ = [
    "AblationCurve",
    "DeploymentCheck",
    "ablation_sweep",
    "curve_csv",
    "deployment_check",
    "knee",
    "windowed_forward",
]

DEFAULT_WINDOWS = (1, 2, 4, 8, 16, 32)


def windowed_forward(model: SequenceModel, x, m: int) -> OutputSequence:
    """Outputs when each step sees only the last ``m`` observations.

    The output at step ``s`` comes from running the cell from the zero
    state over ``x[s-m+1 .. s]``; with ``m >= T`` this reproduces the
    ordinary forward pass exactly.  The returned state trajectory holds
    the restarted state that produced each step's output.
    """
    x = np.asarray(x, dtype=np.float64)
    ys, states = _windowed_batch(model, x[None], m)
    return OutputSequence(outputs=ys[0], states=states[0])


def _windowed_batch(model: SequenceModel, X, m: int):
    if m < 1:
        raise SpecError(f"window must be >= 1, got {m}")
    X = np.asarray(X, dtype=np.float64)
    B, T, _ = X.shape
    if m >= T:
        ys, states, _ = model.forward_batch(X)
        return ys, states
    ys = np.empty((B, T, model.output_dim))
    states = np.empty((B, T + 1, model.state_dim))
    states[:, 0] = 0.0
    for s in range(1, T + 1):
        start = max(0, s - m)
        seg_ys, seg_states, _ = model.forward_batch(X[:, start:s])
        ys[:, s - 1] = seg_ys[:, -1]
        states[:, s] = seg_states[:, -1]
    return ys, states


@dataclasses.dataclass
class AblationCurve:
    """Per-window performance against the full-context baseline.

    ``normalized`` is mean performance divided by the baseline for
    higher-is-better metrics; for MSE it is baseline divided by the
    windowed error, so values near 1 always mean "close to full context".
    """

    windows: list[int]
    mean: list[float]
    std: list[float]
    normalized: list[float]
    baseline: float
    metric: Metric


def _evaluate_windowed(model: SequenceModel, data: list[LabeledSequence],
                       m: int, metric: Metric) -> tuple[float, float]:
    """Pooled metric plus its per-sequence standard deviation."""
    X = np.stack([s.x for s in data])
    targets = np.stack([s.targets for s in data])
    masks = np.stack([s.mask for s in data])
    ys, _ = _windowed_batch(model, X, m)
    if metric is Metric.ACCURACY:
        hits = (ys.argmax(axis=-1) == targets) & masks
        pooled = float(hits.sum() / masks.sum())
        per_seq = hits.sum(axis=1) / np.maximum(masks.sum(axis=1), 1)
    elif metric is Metric.MSE:
        err = np.mean((ys - targets) ** 2, axis=-1)
        pooled = float(np.sum(err * masks) / masks.sum())
        per_seq = np.sum(err * masks, axis=1) / np.maximum(masks.sum(axis=1), 1)
    else:
        raise SpecError(f"unknown metric: {metric!r}")
    return pooled, float(np.std(per_seq))


def _normalize(value: float, baseline: float, metric: Metric) -> float:
    if metric is Metric.MSE:
        if value <= 0:
            return 1.0 if baseline <= 0 else math.inf
        return baseline / value
    if baseline == 0:
        raise SpecError("cannot normalize against a zero baseline")
    return value / baseline


def ablation_sweep(model: SequenceModel, data: list[LabeledSequence],
                   windows=DEFAULT_WINDOWS, metric: Metric = Metric.ACCURACY) -> AblationCurve:
    """Evaluate the model under each window and normalize to full context."""
    if not data:
        raise SpecError("ablation requires evaluation data")
    windows = sorted(set(int(m) for m in windows))
    if not windows or windows[0] < 1:
        raise SpecError(f"windows must be distinct integers >= 1, got {windows}")
    baseline = evaluate(model, data, metric)
    means, stds, normalized = [], [], []
    for m in windows:
        pooled, std = _evaluate_windowed(model, data, m, metric)
        means.append(pooled)
        stds.append(std)
        normalized.append(_normalize(pooled, baseline, metric))
    return AblationCurve(windows=windows, mean=means, std=stds,
                         normalized=normalized, baseline=baseline, metric=metric)


def knee(curve: AblationCurve, threshold: float = 0.9) -> int | None:
    """Smallest tested window whose normalized performance reaches the
    threshold fraction of the baseline; None when no window qualifies."""
    if not 0 < threshold <= 1:
        raise SpecError(f"threshold must lie in (0, 1], got {threshold}")
    for m, norm in zip(curve.windows, curve.normalized):
        if norm >= threshold:
            return m
    return None


@dataclasses.dataclass
class DeploymentCheck:
    """Retention when deploying with a range-derived window vs half of it."""

    tr_value: float
    window: int
    half_window: int
    baseline: float
    perf_window: float
    perf_half: float
    retention_window: float
    retention_half: float
    metric: Metric


def deployment_check(model: SequenceModel, data: list[LabeledSequence],
                     report: TemporalRangeReport,
                     metric: Metric = Metric.ACCURACY) -> DeploymentCheck:
    """Evaluate at window ``ceil(rho_hat + 1)`` and at half that window.

    Retention is windowed performance relative to the full-context
    baseline (ratios may exceed 1; they are reported raw).
    """
    if report.degenerate or report.rho_hat is None:
        raise SpecError("deployment check requires a non-degenerate range report")
    window = math.ceil(report.rho_hat + 1.0)
    half = math.ceil((report.rho_hat + 1.0) / 2.0)
    baseline = evaluate(model, data, metric)
    perf_window, _ = _evaluate_windowed(model, data, window, metric)
    perf_half, _ = _evaluate_windowed(model, data, half, metric)
    return DeploymentCheck(
        tr_value=report.rho_hat, window=window, half_window=half,
        baseline=baseline, perf_window=perf_window, perf_half=perf_half,
        retention_window=_normalize(perf_window, baseline, metric),
        retention_half=_normalize(perf_half, baseline, metric),
        metric=metric,
    )


def curve_csv(curve: AblationCurve) -> str:
    lines = ["window,mean,std,normalized"]
    for m, mean, std, norm in zip(curve.windows, curve.mean, curve.std,
                                  curve.normalized):
        lines.append(f"{m},{mean!r},{std!r},{norm!r}")
    return "\n".join(lines) + "\n"
