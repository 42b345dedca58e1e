import numpy as np
import pytest

from avgq.analysis import LipschitzCertificate
from avgq.core import AssumptionError, StationaryPolicy
from avgq.environments import CASE_STUDY_FINE_ACTIONS, case_study, halving, iid_uniform
from avgq.evaluation import (
    SWEEP_COLUMNS,
    EvalConfig,
    constant_policy,
    evaluate_policy,
    linear_trend,
    net_id,
    relative_value_table,
    sweep_quantization,
)
from avgq.quantization import QuantizationScheme, build_finite_model
from avgq.solver import solve


def lifted(model, M, net=None):
    scheme = QuantizationScheme.for_model(model, M, net)
    sol = solve(build_finite_model(model, scheme))
    return StationaryPolicy(sol.policy, scheme.quantizer, scheme.action_net)


def test_zero_cost_is_exactly_zero():
    m = iid_uniform(0.0)
    pol = constant_policy(QuantizationScheme.for_model(m, 3), 0)
    res = evaluate_policy(m, pol, EvalConfig(horizon=500, burn_in=10, num_rollouts=3))
    assert res.mean == 0.0 and res.stderr == 0.0


def test_halving_average_vanishes():
    m = halving()
    pol = constant_policy(QuantizationScheme.for_model(m, 2), 0)
    res = evaluate_policy(m, pol, EvalConfig(horizon=1000, burn_in=10, num_rollouts=1,
                                             initial_states=(1.0,)))
    assert abs(res.mean) <= 1e-3


def test_config_validation():
    with pytest.raises(ValueError):
        EvalConfig(horizon=10, burn_in=10)
    with pytest.raises(ValueError):
        EvalConfig(num_rollouts=0)


def test_seed_determinism_and_rollout_starts(cs_model):
    pol = lifted(cs_model, 4)
    cfg = EvalConfig(horizon=3000, burn_in=100, num_rollouts=4, initial_states=(0.3, 0.8), seed=5)
    a, b = evaluate_policy(cs_model, pol, cfg), evaluate_policy(cs_model, pol, cfg)
    np.testing.assert_array_equal(a.values, b.values)
    assert len(a.values) == 4
    assert set(a.to_dict()) == {"mean_cost", "stderr", "per_rollout"}


def test_initial_state_independence(cs_model):
    pol = lifted(cs_model, 5)
    runs = [evaluate_policy(cs_model, pol, EvalConfig(horizon=40_000, burn_in=1000, num_rollouts=8,
                                                      initial_states=(x0,), seed=i))
            for i, x0 in enumerate((0.3, 0.5, 0.8))]
    for a in runs:
        for b in runs:
            assert abs(a.mean - b.mean) <= 3 * np.hypot(a.stderr, b.stderr)


def test_finer_policy_is_cheaper(cs_model):
    cfg = EvalConfig(horizon=40_000, burn_in=1000, num_rollouts=8)
    fine = evaluate_policy(cs_model, lifted(cs_model, 20, CASE_STUDY_FINE_ACTIONS), cfg)
    coarse = evaluate_policy(cs_model, lifted(cs_model, 3, CASE_STUDY_FINE_ACTIONS), cfg)
    assert fine.mean < coarse.mean


def test_relative_value_table_min_is_zero(cs_finite):
    _, _, sol = cs_finite[5]
    h = relative_value_table(sol)
    assert h.min() == 0.0 and h.shape == (5,)


def test_sweep_rows_and_trend(cs_model):
    cfg = EvalConfig(horizon=5000, burn_in=100, num_rollouts=2)
    rows = sweep_quantization(cs_model, [2, 4], [(-1, 0, 1)], cfg, LipschitzCertificate(0.7, 0.9))
    assert [r.M for r in rows] == [2, 4]
    assert rows[0].net_id == "{-1,0,1}" and rows[1].L_X == 0.125
    assert rows[1].bound_theorem7 == pytest.approx(2 * 0.7 / (0.1 * 0.1) * 0.125)
    assert tuple(rows[0].as_dict()) == SWEEP_COLUMNS
    fit = linear_trend(rows)
    assert fit.r_squared == pytest.approx(1.0)


def test_net_id_format():
    assert net_id([-1, -0.5, 0, 0.5, 1]) == "{-1,-0.5,0,0.5,1}"


def test_sweep_propagates_solver_refusal():
    m = halving()
    cfg = EvalConfig(horizon=200, burn_in=10, num_rollouts=2, initial_states=(1.0,))
    with pytest.raises(AssumptionError):
        sweep_quantization(m, [2], [(0.0,)], cfg, LipschitzCertificate(1.0, 0.5))
