import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import QuadraticBandit, gate_mdp, gibbs
from renewal_rl.baselines import exact_policy_value, value_iteration
from renewal_rl.envs import EventTriggerModel, InventoryModel, TabularMDP
from renewal_rl.mdp_core import (BaseStock, PolicyParams, Threshold, UnsupportedFamilyError,
                                 policy_table)
from renewal_rl.renewal import TruncationError
from renewal_rl.rmc import (OptimizerState, RmcConfig, adam_update, approx_bound, rmc_run_lr,
                            rmc_run_sp, sgd_update)


def test_adam_zero_gradient_step():
    st0 = OptimizerState.zeros(3, alpha=0.05)
    new, step = adam_update(st0, np.zeros(3))
    assert np.array_equal(step, np.zeros(3)) and new.step == 1


def test_adam_constant_gradient_step_tends_to_alpha():
    state = OptimizerState.zeros(2, alpha=0.25)
    for _ in range(5000):
        state, step = adam_update(state, np.array([3.0, -0.01]))
    assert np.allclose(step, [0.25, -0.25], rtol=1e-4)


def test_adam_first_step_is_alpha_sign():
    state = OptimizerState.zeros(2, alpha=0.01)
    _, step = adam_update(state, np.array([7.0, -2.0]))
    assert np.allclose(step, [0.01, -0.01], rtol=1e-6)
    with pytest.raises(ValueError):
        adam_update(state, np.zeros(3))


def test_plain_sgd_schedule():
    state = OptimizerState.zeros(1, alpha=1.0)
    steps = []
    for _ in range(3):
        state, s = sgd_update(state, np.array([2.0]))
        steps.append(s[0])
    assert steps == [2.0, 1.0, 2.0 / 3.0]


def test_config_validation():
    with pytest.raises(ValueError):
        RmcConfig(n_cycles=0)
    with pytest.raises(ValueError):
        RmcConfig(optimizer="rmsprop")
    with pytest.raises(ValueError):
        RmcConfig(rho=-1)


def test_zero_learning_rate_keeps_theta(small_garnet):
    pol = gibbs(small_garnet, np.linspace(-1, 1, 8))
    res = rmc_run_lr(small_garnet, pol, RmcConfig(alpha=0.0, max_iterations=30))
    for rec in res.records:
        assert np.array_equal(rec.theta, pol.theta)
    assert np.array_equal(res.final_theta, pol.theta)


def test_gate_mdp_learns_best_action():
    mdp = gate_mdp()
    best = value_iteration(mdp, 0.9).greedy_policy
    assert best[0] == 1
    res = rmc_run_lr(mdp, gibbs(mdp), RmcConfig(n_cycles=5, alpha=0.1, budget=40_000))
    pol = gibbs(mdp, res.final_theta)
    assert policy_table(pol)[0, best[0]] > 0.99


@pytest.mark.parametrize("seed", range(5))
def test_quadratic_spsa_converges_to_optimum(seed):
    # decreasing alpha / (1 + m) steps; a constant Adam step keeps jittering around 5
    pol = PolicyParams([1.0], BaseStock(), 0.0, 10.0)
    cfg = RmcConfig(n_cycles=20, c=0.5, alpha=0.5, budget=200_000, optimizer="plain_sgd")
    res = rmc_run_sp(QuadraticBandit(), pol, cfg, seed=seed)
    assert abs(res.final_theta[0] - 5.0) <= 0.1


def test_records_feasible_and_consistent(small_garnet):
    pol = gibbs(small_garnet, lo=-2.0, hi=2.0)
    res = rmc_run_lr(small_garnet, pol, RmcConfig(alpha=0.5, budget=20_000, biased=True))
    samples = [r.samples for r in res.records]
    assert samples == sorted(samples) and res.samples >= 20_000
    for rec in res.records:
        assert np.all(np.abs(rec.theta) <= 2.0)
        assert rec.J_hat == pytest.approx(rec.R_hat / ((1 - 0.9) * rec.T_hat))


def test_run_is_deterministic(small_garnet):
    cfg = RmcConfig(budget=5_000, shared_run=False)
    a = rmc_run_lr(small_garnet, gibbs(small_garnet), cfg, seed=9)
    b = rmc_run_lr(small_garnet, gibbs(small_garnet), cfg, seed=9)
    assert len(a.records) == len(b.records)
    for x, y in zip(a.records, b.records):
        assert x.samples == y.samples and x.J_hat == y.J_hat
        assert np.array_equal(x.theta, y.theta)
    c = rmc_run_lr(small_garnet, gibbs(small_garnet), cfg, seed=10)
    assert c.records[-1].J_hat != a.records[-1].J_hat


def test_record_every_and_evaluator(small_garnet):
    calls = []
    ev = lambda th: calls.append(1) or 1.0
    cfg = RmcConfig(max_iterations=25, record_every=10, eval_every=10, budget=10 ** 9)
    res = rmc_run_lr(small_garnet, gibbs(small_garnet), cfg, evaluator=ev)
    assert [r.iteration for r in res.records] == [0, 10, 20, 24]
    assert len(calls) == 4 and res.iterations == 25


def test_budget_zero_has_no_records(small_garnet):
    res = rmc_run_lr(small_garnet, gibbs(small_garnet), RmcConfig(budget=0))
    assert res.records == [] and res.samples == 0


def test_lr_rejects_deterministic_policy():
    with pytest.raises(UnsupportedFamilyError):
        rmc_run_lr(EventTriggerModel(), PolicyParams([1.0], Threshold()), RmcConfig())
    with pytest.raises(ValueError):
        rmc_run_sp(EventTriggerModel(), PolicyParams([1.0], Threshold()), RmcConfig())


def test_truncation_retries_once_then_fails():
    P = np.array([[[0.0, 1.0], [0.0, 1.0]]])
    mdp = TabularMDP(P, np.zeros((2, 1)))
    with pytest.raises(TruncationError) as info:
        rmc_run_lr(mdp, gibbs(mdp), RmcConfig(max_steps=20, budget=100))
    assert "retry" in str(info.value)
    assert info.value.partial.samples == 0


def test_average_mode_runs(small_garnet):
    res = rmc_run_lr(small_garnet, gibbs(small_garnet),
                     RmcConfig(mode="average", budget=5_000, shared_run=True))
    rec = res.records[-1]
    assert rec.J_hat == pytest.approx(rec.R_hat / rec.T_hat)


def test_learning_trend_improves(garnet20):
    pol = gibbs(garnet20)
    res = rmc_run_lr(garnet20, pol, RmcConfig(budget=300_000, shared_run=True, biased=True))
    J = np.array([r.J_hat for r in res.records])
    k = max(1, J.size // 10)
    assert np.median(J[-k:]) > np.median(J[:k])


def test_approx_bound_examples():
    assert approx_bound(3.0, 0.0, 0.9) == 0.0
    m = InventoryModel()
    assert m.lipschitz == pytest.approx(7 / 6)
    assert approx_bound(m.lipschitz, 0.5, 0.9) == pytest.approx(5.25)
    with pytest.raises(ValueError):
        approx_bound(1.0, 0.5, 1.0)
    with pytest.raises(ValueError):
        approx_bound(1.0, 0.5, 0.9, T_bar=0.95, T_rho=2.0)
    with pytest.raises(ValueError):
        approx_bound(1.0, 0.5, 0.9, T_bar=0.5)


@given(st.floats(0, 10), st.floats(0, 5), st.floats(0.01, 0.99), st.floats(0, 1),
       st.floats(1, 100))
def test_tight_bound_below_loose(L, rho, gamma, frac, T_rho):
    T_bar = frac * gamma
    tight = approx_bound(L, rho, gamma, T_bar, T_rho)
    assert tight <= approx_bound(L, rho, gamma) * (1 + 1e-12) + 1e-300
