"""The temporal range metric: influence weights, lag averages, reports.

Position weights summarize how strongly each past step influences later
outputs: under mean aggregation

    w_t = (1 / (T - t)) * sum_{s = t+1..T} ||J[s, t]||

and under max aggregation the sum/count is replaced by the maximum.  In
final-output mode the weights are simply ``w_t = ||J[T, t]||`` for
``t = 1..T`` (lag zero included).  The unnormalized range is
``rho = sum_t w_t * (T - t)`` and the normalized range divides by
``sum_t w_t``, giving a magnitude-weighted average look-back in steps.
A profile whose weights are identically zero has no defined normalized
range; that case is reported as degenerate, never silently as 0 or NaN.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json

import numpy as np

from .errors import ConfigError, SpecError
from .gradients import JacobianBlocks, JacobianMode, input_jacobians
from .linalg import NormKind, mat_norm
from .models import CellKind, SequenceModel

__all__ = [
    "Aggregation",
    "InfluenceProfile",
    "InvarianceReport",
    "RangeValues",
    "TRConfig",
    "TemporalRangeReport",
    "analyze",
    "canonical_json",
    "check_input_scaling",
    "check_output_scaling",
    "config_fingerprint",
    "influence_weights",
    "profile_csv",
    "report_json",
    "temporal_range",
]

REPORT_SCHEMA_VERSION = 1


class Aggregation(enum.Enum):
    MEAN = "mean"
    MAX = "max"


@dataclasses.dataclass(frozen=True)
class TRConfig:
    """Analysis configuration; ``T`` is the window length."""

    norm: NormKind = NormKind.FROBENIUS
    aggregation: Aggregation = Aggregation.MEAN
    mode: JacobianMode = JacobianMode.MULTI_OUTPUT
    T: int = 32

    def __post_init__(self):
        if self.T < 2:
            raise SpecError(f"window length T must be >= 2, got {self.T}")

    def as_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA_VERSION,
            "norm": self.norm.value,
            "aggregation": self.aggregation.value,
            "mode": self.mode.value,
            "T": self.T,
        }

    def fingerprint(self) -> str:
        return config_fingerprint(self.as_dict())


def canonical_json(obj) -> str:
    """Stable serialization: sorted keys, no incidental whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_fingerprint(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:16]


@dataclasses.dataclass
class InfluenceProfile:
    """Per-position weights ``w_1..w_T`` with their lag structure.

    ``weights[i]`` belongs to position ``t = i + 1`` whose lag is
    ``T - t``; in multi-output mode the final position always carries
    weight zero because it has no later outputs to influence.
    """

    weights: np.ndarray
    mode: JacobianMode
    aggregation: Aggregation
    norm: NormKind

    @property
    def T(self) -> int:
        return self.weights.shape[0]

    def lags(self) -> np.ndarray:
        return np.arange(self.T - 1, -1, -1, dtype=np.float64)


class RangeValues(tuple):
    """(rho, rho_hat) pair; ``rho_hat`` is None for a degenerate profile."""

    __slots__ = ()

    def __new__(cls, rho: float, rho_hat: float | None):
        return super().__new__(cls, (rho, rho_hat))

    @property
    def rho(self) -> float:
        return self[0]

    @property
    def rho_hat(self) -> float | None:
        return self[1]

    @property
    def degenerate(self) -> bool:
        return self[1] is None


def influence_weights(blocks: JacobianBlocks, cfg: TRConfig) -> InfluenceProfile:
    """Aggregate Jacobian block norms into one weight per position."""
    if blocks.mode is not cfg.mode:
        raise ConfigError(
            f"blocks were computed in {blocks.mode.value} mode but the "
            f"configuration requests {cfg.mode.value}")
    if blocks.T != cfg.T:
        raise ConfigError(f"blocks have T={blocks.T}, configuration has T={cfg.T}")
    T = blocks.T
    weights = np.zeros(T)
    if cfg.mode is JacobianMode.FINAL_OUTPUT:
        for t in range(1, T + 1):
            weights[t - 1] = mat_norm(blocks.block(T, t), cfg.norm)
    else:
        for t in range(1, T):
            norms = [mat_norm(blocks.block(s, t), cfg.norm) for s in range(t + 1, T + 1)]
            if cfg.aggregation is Aggregation.MEAN:
                weights[t - 1] = sum(norms) / len(norms)
            else:
                weights[t - 1] = max(norms)
    return InfluenceProfile(weights=weights, mode=cfg.mode,
                            aggregation=cfg.aggregation, norm=cfg.norm)


def temporal_range(profile: InfluenceProfile) -> RangeValues:
    """Magnitude-weighted lag sum and average of an influence profile."""
    w = profile.weights
    rho = float(w @ profile.lags())
    total = float(w.sum())
    if total <= 0.0:
        return RangeValues(rho, None)
    return RangeValues(rho, rho / total)


@dataclasses.dataclass
class TemporalRangeReport:
    """Calibration-set summary of the metric for one model.

    ``rho`` and ``rho_hat`` are means of the per-rollout values (the
    headline numbers); ``pooled_rho_hat`` instead averages the weight
    profiles across rollouts first and then takes the lag average.  A
    report is degenerate only when every rollout produced all-zero
    weights, in which case the normalized fields are None.
    """

    config: TRConfig
    n_rollouts: int
    rho: float
    rho_hat: float | None
    per_rollout_rho: list[float]
    per_rollout_rho_hat: list[float | None]
    rho_hat_std: float | None
    pooled_rho_hat: float | None
    weights_mean: np.ndarray
    weights_std: np.ndarray
    degenerate: bool
    n_degenerate: int

    def fingerprint(self) -> str:
        return self.config.fingerprint()


def analyze(model: SequenceModel, rollouts, cfg: TRConfig) -> TemporalRangeReport:
    """Measure the temporal range of ``model`` over a calibration set.

    Every rollout must be a ``(T, d)`` observation array matching the
    configured window length.  Jacobian blocks are computed per rollout in
    list order, so results are independent of any parallel scheduling.
    """
    rollouts = list(rollouts)
    if not rollouts:
        raise SpecError("analyze requires at least one rollout")
    all_weights = []
    per_rho: list[float] = []
    per_rho_hat: list[float | None] = []
    for x in rollouts:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != cfg.T:
            raise SpecError(
                f"rollout length {x.shape[0]} does not match configured T={cfg.T}")
        blocks = input_jacobians(model, x, cfg.mode)
        profile = influence_weights(blocks, cfg)
        values = temporal_range(profile)
        all_weights.append(profile.weights)
        per_rho.append(values.rho)
        per_rho_hat.append(values.rho_hat)
    W = np.stack(all_weights)
    defined = [v for v in per_rho_hat if v is not None]
    pooled_profile = InfluenceProfile(weights=W.mean(axis=0), mode=cfg.mode,
                                      aggregation=cfg.aggregation, norm=cfg.norm)
    pooled = temporal_range(pooled_profile)
    return TemporalRangeReport(
        config=cfg,
        n_rollouts=len(rollouts),
        rho=float(np.mean(per_rho)),
        rho_hat=float(np.mean(defined)) if defined else None,
        per_rollout_rho=per_rho,
        per_rollout_rho_hat=per_rho_hat,
        rho_hat_std=float(np.std(defined)) if defined else None,
        pooled_rho_hat=pooled.rho_hat,
        weights_mean=W.mean(axis=0),
        weights_std=W.std(axis=0),
        degenerate=not defined,
        n_degenerate=len(per_rho_hat) - len(defined),
    )


@dataclasses.dataclass
class InvarianceReport:
    """Residuals of a rescaling check; see the check functions for fields."""

    kind: str
    factor: float
    rho_base: float
    rho_scaled: float
    rho_hat_base: float
    rho_hat_scaled: float
    expected_rho_ratio: float
    rho_ratio: float
    resid_rho_hat: float
    resid_rho_ratio: float


def _single_rollout_range(model: SequenceModel, x, cfg: TRConfig) -> RangeValues:
    blocks = input_jacobians(model, np.asarray(x, dtype=np.float64), cfg.mode)
    return temporal_range(influence_weights(blocks, cfg))


def check_output_scaling(model: SequenceModel, x, alpha: float,
                         cfg: TRConfig) -> InvarianceReport:
    """Verify the effect of scaling all outputs by ``alpha``.

    Scaling the decoder multiplies every Jacobian block by ``alpha``, so the
    normalized range must not move while the unnormalized range picks up a
    factor ``|alpha|``.  Residuals are |delta rho_hat| and the relative
    error of the observed rho ratio against ``|alpha|``.
    """
    if alpha == 0:
        raise SpecError("alpha must be nonzero")
    base = _single_rollout_range(model, x, cfg)
    if base.degenerate:
        raise SpecError("output-scaling check needs a non-degenerate base profile")
    scaled_model = model.copy()
    scaled_model.params["dec_W"] *= alpha
    scaled_model.params["dec_b"] *= alpha
    scaled = _single_rollout_range(scaled_model, x, cfg)
    ratio = scaled.rho / base.rho
    return InvarianceReport(
        kind="output_scaling", factor=alpha,
        rho_base=base.rho, rho_scaled=scaled.rho,
        rho_hat_base=base.rho_hat, rho_hat_scaled=scaled.rho_hat,
        expected_rho_ratio=abs(alpha), rho_ratio=ratio,
        resid_rho_hat=abs(scaled.rho_hat - base.rho_hat),
        resid_rho_ratio=abs(ratio / abs(alpha) - 1.0),
    )


def check_input_scaling(model: SequenceModel, x, beta: float,
                        cfg: TRConfig) -> InvarianceReport:
    """Verify invariance under a change of input units ``x* = beta x``.

    The compensated model divides the first layer that touches the inputs
    (the encoder weight, or the cell input matrices when the encoder is the
    identity) by ``beta``, so it computes the same function of ``x*`` that
    the original computes of ``x``.  Its Jacobians with respect to ``x*``
    shrink by ``1/|beta|``, leaving the normalized range unchanged.
    """
    if beta == 0:
        raise SpecError("beta must be nonzero")
    x = np.asarray(x, dtype=np.float64)
    base = _single_rollout_range(model, x, cfg)
    if base.degenerate:
        raise SpecError("input-scaling check needs a non-degenerate base profile")
    scaled_model = model.copy()
    for name in _input_weight_names(model):
        scaled_model.params[name] /= beta
    scaled = _single_rollout_range(scaled_model, beta * x, cfg)
    ratio = scaled.rho / base.rho
    expected = 1.0 / abs(beta)
    return InvarianceReport(
        kind="input_scaling", factor=beta,
        rho_base=base.rho, rho_scaled=scaled.rho,
        rho_hat_base=base.rho_hat, rho_hat_scaled=scaled.rho_hat,
        expected_rho_ratio=expected, rho_ratio=ratio,
        resid_rho_hat=abs(scaled.rho_hat - base.rho_hat),
        resid_rho_ratio=abs(ratio / expected - 1.0),
    )


def _input_weight_names(model: SequenceModel) -> list[str]:
    if model.encoder_dim is not None:
        return ["enc_W"]
    kind = model.cell.kind
    if kind is CellKind.LINEAR_REC:
        return ["C"]
    if kind is CellKind.GRU:
        return ["Wz", "Wr", "Wn"]
    if kind is CellKind.LSTM:
        return ["Wi", "Wf", "Wo", "Wg"]
    return ["V1", "V2", "Vz", "Vy"]


def report_json(report: TemporalRangeReport) -> str:
    """Serialize a report to deterministic, versioned JSON."""
    doc = {
        "schema": REPORT_SCHEMA_VERSION,
        "config": report.config.as_dict(),
        "config_fingerprint": report.fingerprint(),
        "n_rollouts": report.n_rollouts,
        "degenerate": report.degenerate,
        "n_degenerate_rollouts": report.n_degenerate,
        "rho": report.rho,
        "rho_hat": report.rho_hat,
        "rho_hat_std": report.rho_hat_std,
        "pooled_rho_hat": report.pooled_rho_hat,
        "per_rollout_rho": report.per_rollout_rho,
        "per_rollout_rho_hat": report.per_rollout_rho_hat,
        "weights_mean_by_position": report.weights_mean.tolist(),
        "weights_std_by_position": report.weights_std.tolist(),
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def report_from_json(text: str) -> TemporalRangeReport:
    """Rebuild a report from its JSON serialization.

    Raises:
        SpecError: on schema mismatch or malformed content.
    """
    try:
        doc = json.loads(text)
        if doc["schema"] != REPORT_SCHEMA_VERSION:
            raise SpecError(
                f"unsupported report schema {doc['schema']!r} "
                f"(expected {REPORT_SCHEMA_VERSION})")
        cfg_doc = doc["config"]
        cfg = TRConfig(norm=NormKind(cfg_doc["norm"]),
                       aggregation=Aggregation(cfg_doc["aggregation"]),
                       mode=JacobianMode(cfg_doc["mode"]),
                       T=int(cfg_doc["T"]))
        return TemporalRangeReport(
            config=cfg,
            n_rollouts=int(doc["n_rollouts"]),
            rho=float(doc["rho"]),
            rho_hat=None if doc["rho_hat"] is None else float(doc["rho_hat"]),
            per_rollout_rho=[float(v) for v in doc["per_rollout_rho"]],
            per_rollout_rho_hat=[None if v is None else float(v)
                                 for v in doc["per_rollout_rho_hat"]],
            rho_hat_std=None if doc["rho_hat_std"] is None else float(doc["rho_hat_std"]),
            pooled_rho_hat=(None if doc["pooled_rho_hat"] is None
                            else float(doc["pooled_rho_hat"])),
            weights_mean=np.asarray(doc["weights_mean_by_position"], dtype=np.float64),
            weights_std=np.asarray(doc["weights_std_by_position"], dtype=np.float64),
            degenerate=bool(doc["degenerate"]),
            n_degenerate=int(doc["n_degenerate_rollouts"]),
        )
    except SpecError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecError(f"malformed range report: {exc}") from exc


def profile_csv(report: TemporalRangeReport) -> str:
    """Per-lag weight profile as CSV text, ordered by increasing lag."""
    T = report.config.T
    lines = ["lag,weight,weight_std_across_rollouts"]
    for i in range(T - 1, -1, -1):
        lag = T - 1 - i
        mean = repr(float(report.weights_mean[i]))
        std = repr(float(report.weights_std[i]))
        lines.append(f"{lag},{mean},{std}")
    return "\n".join(lines) + "\n"
