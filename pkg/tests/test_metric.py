import dataclasses

import numpy as np
import pytest

from temporal_range.errors import ConfigError, SpecError
from temporal_range.gradients import JacobianBlocks, JacobianMode
from temporal_range.linalg import NormKind, Rng, mat_norm
from temporal_range.metric import (Aggregation, InfluenceProfile, TRConfig,
                                   analyze, check_input_scaling,
                                   check_output_scaling, influence_weights,
                                   profile_csv, report_from_json, report_json,
                                   temporal_range)
from temporal_range.models import CellKind, CellSpec, build_shift_copy_model, init_model
from temporal_range.oracles import RecurrenceSpec, recurrence_as_model


def _scalar_blocks(entries, T):
    blocks = {}
    for s in range(1, T + 1):
        for t in range(1, s):
            blocks[(s, t)] = np.array([[float(entries.get((s, t), 0.0))]])
    return JacobianBlocks(T=T, c=1, d=1, mode=JacobianMode.MULTI_OUTPUT,
                          blocks=blocks)


def test_mean_weights_hand_example():
    blocks = _scalar_blocks({(2, 1): 1.0, (3, 1): 3.0, (3, 2): 2.0}, T=3)
    cfg = TRConfig(T=3)
    profile = influence_weights(blocks, cfg)
    assert profile.weights == pytest.approx([2.0, 2.0, 0.0], abs=1e-15)


def test_max_weights_hand_example():
    blocks = _scalar_blocks({(2, 1): 1.0, (3, 1): 3.0, (3, 2): 2.0}, T=3)
    cfg = TRConfig(aggregation=Aggregation.MAX, T=3)
    profile = influence_weights(blocks, cfg)
    assert profile.weights == pytest.approx([3.0, 2.0, 0.0], abs=1e-15)


def test_final_position_weight_is_zero_in_multi_mode():
    rng = Rng(0)
    model = init_model(CellSpec(kind=CellKind.GRU, input_dim=2, hidden_dim=3),
                       2, rng)
    from temporal_range.gradients import input_jacobians
    x = np.asarray(Rng(1).gaussian(size=(6, 2)))
    profile = influence_weights(input_jacobians(model, x, JacobianMode.MULTI_OUTPUT),
                                TRConfig(T=6))
    assert profile.weights[-1] == 0.0


def test_temporal_range_hand_example():
    profile = InfluenceProfile(weights=np.array([2.0, 2.0, 0.0]),
                               mode=JacobianMode.MULTI_OUTPUT,
                               aggregation=Aggregation.MEAN,
                               norm=NormKind.FROBENIUS)
    values = temporal_range(profile)
    assert values.rho == pytest.approx(6.0, abs=1e-15)
    assert values.rho_hat == pytest.approx(1.5, abs=1e-15)


def test_single_weight_at_lag_k_normalizes_to_k():
    T = 10
    for k in (0, 3, 9):
        w = np.zeros(T)
        w[T - 1 - k] = 0.37
        profile = InfluenceProfile(weights=w, mode=JacobianMode.FINAL_OUTPUT,
                                   aggregation=Aggregation.MEAN,
                                   norm=NormKind.FROBENIUS)
        assert temporal_range(profile).rho_hat == pytest.approx(float(k), abs=1e-12)


def test_all_zero_weights_are_degenerate_not_an_error():
    profile = InfluenceProfile(weights=np.zeros(5),
                               mode=JacobianMode.MULTI_OUTPUT,
                               aggregation=Aggregation.MEAN,
                               norm=NormKind.FROBENIUS)
    values = temporal_range(profile)
    assert values.rho == 0.0
    assert values.rho_hat is None
    assert values.degenerate


def test_normalized_range_is_bounded_and_scale_invariant():
    rng = Rng(2)
    for _ in range(100):
        T = int(rng.integers(2, 20))
        w = np.abs(np.asarray(rng.gaussian(size=T))) + 1e-12
        profile = InfluenceProfile(weights=w, mode=JacobianMode.FINAL_OUTPUT,
                                   aggregation=Aggregation.MEAN,
                                   norm=NormKind.FROBENIUS)
        rv = temporal_range(profile)
        assert 0.0 <= rv.rho_hat <= T - 1
        lam = float(rng.uniform(low=0.1, high=10.0))
        scaled = dataclasses.replace(profile, weights=lam * w)
        assert temporal_range(scaled).rho_hat == pytest.approx(rv.rho_hat, abs=1e-9)


@pytest.mark.parametrize("norm", [NormKind.FROBENIUS, NormKind.SPECTRAL])
def test_shift_copy_final_weights_are_an_indicator(norm):
    from temporal_range.gradients import input_jacobians
    rng = Rng(3)
    k, d, T = 4, 2, 12
    U = np.asarray(rng.gaussian(size=(3, d)))
    model = build_shift_copy_model(k, d, U)
    x = np.asarray(rng.gaussian(size=(T, d)))
    cfg = TRConfig(norm=norm, mode=JacobianMode.FINAL_OUTPUT, T=T)
    profile = influence_weights(input_jacobians(model, x, cfg.mode), cfg)
    expected = np.zeros(T)
    expected[T - 1 - k] = mat_norm(U, norm)
    assert profile.weights == pytest.approx(expected, abs=1e-10)


def test_mode_mismatch_raises_config_error():
    blocks = _scalar_blocks({(2, 1): 1.0}, T=3)
    with pytest.raises(ConfigError):
        influence_weights(blocks, TRConfig(mode=JacobianMode.FINAL_OUTPUT, T=3))
    with pytest.raises(ConfigError):
        influence_weights(blocks, TRConfig(T=4))


def test_analyze_exact_copy_model_recovers_offset_with_zero_spread():
    rng = Rng(4)
    k, d, T = 5, 2, 16
    model = build_shift_copy_model(k, d)
    rollouts = [np.asarray(rng.gaussian(size=(T, d))) for _ in range(4)]
    report = analyze(model, rollouts,
                     TRConfig(mode=JacobianMode.FINAL_OUTPUT, T=T))
    assert report.rho_hat == pytest.approx(float(k), abs=1e-12)
    assert report.rho_hat_std == pytest.approx(0.0, abs=1e-12)
    assert report.pooled_rho_hat == pytest.approx(float(k), abs=1e-12)


def test_analyze_linear_model_gives_identical_values_across_rollouts():
    rng = Rng(5)
    model = init_model(CellSpec(kind=CellKind.LINEAR_REC, input_dim=2,
                                hidden_dim=3), 2, rng)
    rollouts = [np.asarray(rng.gaussian(size=(8, 2))) for _ in range(5)]
    report = analyze(model, rollouts, TRConfig(T=8))
    first = report.per_rollout_rho_hat[0]
    assert all(v == first for v in report.per_rollout_rho_hat)
    assert report.pooled_rho_hat == pytest.approx(first, abs=1e-12)


def test_analyze_memoryless_model_degenerate_on_every_rollout():
    rng = Rng(6)
    model = build_shift_copy_model(0, 3)
    rollouts = [np.asarray(rng.gaussian(size=(6, 3))) for _ in range(3)]
    report = analyze(model, rollouts, TRConfig(T=6))
    assert report.degenerate
    assert report.rho_hat is None
    assert all(v is None for v in report.per_rollout_rho_hat)
    assert np.max(np.abs(report.weights_mean)) == 0.0


def test_analyze_requires_rollouts_and_matching_length():
    model = build_shift_copy_model(1, 2)
    with pytest.raises(SpecError):
        analyze(model, [], TRConfig(T=4))
    with pytest.raises(SpecError):
        analyze(model, [np.zeros((5, 2))], TRConfig(T=4))


def test_output_scaling_identity_has_zero_residuals():
    model = init_model(CellSpec(kind=CellKind.GRU, input_dim=2, hidden_dim=4),
                       2, Rng(7), encoder_dim=3)
    x = np.asarray(Rng(8).gaussian(size=(6, 2)))
    rep = check_output_scaling(model, x, 1.0, TRConfig(T=6))
    assert rep.resid_rho_hat == 0.0
    assert rep.resid_rho_ratio == 0.0


def test_output_scaling_general_factor():
    model = init_model(CellSpec(kind=CellKind.GRU, input_dim=2, hidden_dim=4),
                       2, Rng(9), encoder_dim=3)
    x = np.asarray(Rng(10).gaussian(size=(6, 2)))
    rep = check_output_scaling(model, x, 3.7, TRConfig(T=6))
    assert rep.resid_rho_hat < 1e-9
    assert rep.resid_rho_ratio < 1e-9


def test_output_scaling_negative_factor_uses_magnitude():
    model = init_model(CellSpec(kind=CellKind.LSTM, input_dim=2, hidden_dim=3),
                       2, Rng(11))
    x = np.asarray(Rng(12).gaussian(size=(5, 2)))
    rep = check_output_scaling(model, x, -2.0, TRConfig(T=5))
    assert rep.expected_rho_ratio == 2.0
    assert rep.rho_ratio == pytest.approx(2.0, rel=1e-9)
    assert rep.resid_rho_hat < 1e-9


def test_input_scaling_identity_and_general_factor():
    model = init_model(CellSpec(kind=CellKind.LINEAR_REC, input_dim=2,
                                hidden_dim=3), 2, Rng(13))
    x = np.asarray(Rng(14).gaussian(size=(6, 2)))
    rep1 = check_input_scaling(model, x, 1.0, TRConfig(T=6))
    assert rep1.resid_rho_hat == 0.0
    rep = check_input_scaling(model, x, 0.25, TRConfig(T=6))
    assert rep.expected_rho_ratio == 4.0
    assert rep.resid_rho_hat < 1e-9
    assert rep.resid_rho_ratio < 1e-9


def test_input_scaling_on_shift_copy_keeps_offset():
    rng = Rng(15)
    model = build_shift_copy_model(3, 2)
    x = np.asarray(rng.gaussian(size=(8, 2)))
    cfg = TRConfig(mode=JacobianMode.FINAL_OUTPUT, T=8)
    rep = check_input_scaling(model, x, 8.0, cfg)
    assert rep.rho_hat_scaled == pytest.approx(3.0, abs=1e-9)
    assert rep.resid_rho_hat < 1e-9


def test_scaling_checks_reject_zero_factors():
    model = build_shift_copy_model(1, 2)
    x = np.zeros((4, 2))
    with pytest.raises(SpecError):
        check_output_scaling(model, x, 0.0, TRConfig(T=4))
    with pytest.raises(SpecError):
        check_input_scaling(model, x, 0.0, TRConfig(T=4))


def test_report_json_round_trip():
    rng = Rng(16)
    model = build_shift_copy_model(2, 2)
    rollouts = [np.asarray(rng.gaussian(size=(6, 2))) for _ in range(3)]
    report = analyze(model, rollouts,
                     TRConfig(mode=JacobianMode.FINAL_OUTPUT, T=6))
    text = report_json(report)
    loaded = report_from_json(text)
    assert loaded.rho_hat == report.rho_hat
    assert loaded.config == report.config
    assert np.array_equal(loaded.weights_mean, report.weights_mean)
    assert report_json(loaded) == text


def test_profile_csv_orders_rows_by_lag():
    rng = Rng(17)
    model = build_shift_copy_model(1, 2)
    report = analyze(model, [np.asarray(rng.gaussian(size=(4, 2)))],
                     TRConfig(mode=JacobianMode.FINAL_OUTPUT, T=4))
    lines = profile_csv(report).strip().splitlines()
    assert lines[0] == "lag,weight,weight_std_across_rollouts"
    lags = [int(line.split(",")[0]) for line in lines[1:]]
    assert lags == [0, 1, 2, 3]


def test_config_fingerprints_distinguish_configs():
    a = TRConfig(aggregation=Aggregation.MEAN)
    b = TRConfig(aggregation=Aggregation.MAX)
    assert a.fingerprint() != b.fingerprint()
    assert a.fingerprint() == TRConfig().fingerprint()


def test_recurrence_model_rollouts_pool_to_the_same_value():
    spec = RecurrenceSpec(A=np.eye(2) * 0.6, C=np.eye(2), Q=np.ones((1, 2)), T=6)
    model = recurrence_as_model(spec)
    rng = Rng(18)
    rollouts = [np.asarray(rng.gaussian(size=(6, 2))) for _ in range(4)]
    report = analyze(model, rollouts, TRConfig(mode=JacobianMode.FINAL_OUTPUT, T=6))
    assert report.rho_hat == pytest.approx(report.pooled_rho_hat, abs=1e-12)
