import math

import numpy as np
import pytest
from conftest import rand_spd

from greedyqn import (
    AgqnConfig,
    CountingObjective,
    DegenerateStepsizeError,
    HessianEstimate,
    LogisticObjective,
    QuadraticObjective,
    REASON_MAX_ITERS,
    REASON_TOLERANCE,
    SmoothnessConstants,
    SpdFactor,
    StepsizePolicy,
    adaptive_step,
    agqn_run,
    alpha_tau,
    beta,
    c_tau_eps,
    computed_constants,
    lambda_metric,
    resolve_g0,
    sigma_metric,
    synthesize,
    warm_start_G0,
)


def quadratic_problem(seed, n=8, lo=1.0, hi=10.0):
    rng = np.random.default_rng(seed)
    a = rand_spd(rng, n, lo, hi)
    b = rng.standard_normal(n)
    return QuadraticObjective(a, b), np.linalg.solve(a, b)


def tame_logistic(seed=70, n=30, m=500, gamma=1000.0):
    # heavy regularization gives kappa near 1, so the budget-preserving
    # step constant is large enough for the literal rule to move.
    ds = synthesize(n, m, seed=seed)
    constants = computed_constants(ds.samples, gamma)
    return LogisticObjective(ds.samples, ds.labels, gamma, constants)


# ------------------------------------------------------------ step constant


def test_c_zero_budget_gives_zero():
    assert c_tau_eps(3, 0.0, 10, 5.0) == 0.0


def test_c_solves_its_quadratic():
    tau, eps, n, kappa = 2, 0.01, 10, 5.0
    c = c_tau_eps(tau, eps, n, kappa)
    rho = 1.0 - 1.0 / (n * kappa)
    sigma_tau = rho**tau * eps + n
    residual = (
        rho * (sigma_tau + n) * c**2
        + 2.0 * rho * sigma_tau * c
        - (1.0 - rho ** (tau + 1)) * eps
    )
    assert abs(residual) <= 1e-12
    assert c > 0.0


def test_c_solves_its_quadratic_distributed():
    tau, eps, n, kappa, p = 4, 0.3, 22, 8.0, 4
    c = c_tau_eps(tau, eps, n, kappa, p)
    rho = 1.0 - 1.0 / (n * kappa)
    ns = n * math.sqrt(p)
    sigma_tau = rho**tau * eps + ns
    residual = (
        rho * (sigma_tau + ns) * c**2
        + 2.0 * rho * sigma_tau * c
        - (1.0 - rho ** (tau + 1)) * eps
    )
    assert abs(residual) <= 1e-12


def test_c_monotone_in_refinement_depth():
    values = [c_tau_eps(tau, 0.1, 12, 20.0) for tau in range(21)]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_c_shrinks_with_more_workers():
    single = c_tau_eps(2, 0.1, 10, 5.0, p=1)
    assert c_tau_eps(2, 0.1, 10, 5.0, p=4) < single
    # and p=1 is exactly the plain form
    assert c_tau_eps(2, 0.1, 10, 5.0, p=1) == c_tau_eps(2, 0.1, 10, 5.0)


def test_c_validation():
    with pytest.raises(ValueError):
        c_tau_eps(-1, 0.1, 10, 5.0)
    with pytest.raises(ValueError):
        c_tau_eps(0.5, 0.1, 10, 5.0)
    with pytest.raises(ValueError):
        c_tau_eps(2, -0.1, 10, 5.0)
    with pytest.raises(ValueError):
        c_tau_eps(2, 0.1, 0, 5.0)
    with pytest.raises(ValueError):
        c_tau_eps(2, 0.1, 10, 0.5)
    with pytest.raises(ValueError):
        c_tau_eps(2, 0.1, 10, 5.0, p=0)
    with pytest.raises(ValueError):
        c_tau_eps(2, 0.1, 1, 1.0)


# -------------------------------------------------------- damping and caps


def test_beta_examples():
    c = SmoothnessConstants(1.0, 2.0, 2.0, 0.0)
    assert beta(0.0, c) == 0.0
    assert beta(4.0, c) == pytest.approx(4.0)
    assert beta(4.0, c, p=2) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        beta(1.0, c, p=0)


def test_policy_build_defaults_and_fields():
    constants = SmoothnessConstants(1.0, 5.0, 2.0, 0.5)
    policy = StepsizePolicy.build(constants, 10, 2)
    assert policy.eps0 == pytest.approx(1.0 / 9.0)
    assert policy.eps == policy.eps0
    assert policy.rho == pytest.approx(1.0 - 1.0 / 50.0)
    assert policy.sigma_tau == pytest.approx(policy.rho**2 * policy.eps + 10.0)
    assert policy.c == pytest.approx(c_tau_eps(2, policy.eps, 10, 5.0))
    override = StepsizePolicy.build(constants, 10, 2, eps=0.02, p=4)
    assert override.eps == 0.02
    assert override.c == pytest.approx(c_tau_eps(2, 0.02, 10, 5.0, 4))


def test_policy_build_validation():
    constants = SmoothnessConstants(1.0, 5.0, 2.0, 0.5)
    with pytest.raises(ValueError):
        StepsizePolicy.build(constants, 0, 2)
    with pytest.raises(ValueError):
        StepsizePolicy.build(constants, 10, -1)
    with pytest.raises(ValueError):
        StepsizePolicy.build(constants, 10, 2, p=0)
    with pytest.raises(ValueError):
        StepsizePolicy.build(constants, 10, 2, eps=-0.5)
    flat = SmoothnessConstants(1.0, 1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        StepsizePolicy.build(flat, 1, 2)


def test_select_alpha_cases():
    constants = SmoothnessConstants(1.0, 5.0, 2.0, 0.5)
    policy = StepsizePolicy.build(constants, 10, 2)
    # mild damping leaves the unit step
    assert policy.select_alpha(1.0, 0.2) == 1.0
    assert policy.select_alpha(1.0, 0.0) == 1.0
    # strong damping takes over
    assert policy.select_alpha(1.0, 10.0) == pytest.approx(1.0 / 40.0)
    # the literal rule adds the budget cap
    expect = min(policy.c / (0.5 * 1.0), 1.0)
    assert policy.select_alpha(1.0, 0.0, theory=True) == pytest.approx(expect)


def test_alpha_cap_sentinels():
    no_curvature_drift = SmoothnessConstants(1.0, 5.0, 2.0, 0.0)
    policy = StepsizePolicy.build(no_curvature_drift, 10, 2)
    assert policy.alpha_from_dual(3.0) == math.inf
    concordant = StepsizePolicy.build(SmoothnessConstants(1.0, 5.0, 2.0, 0.5), 10, 2)
    assert concordant.alpha_from_dual(0.0) == math.inf
    assert concordant.alpha_from_dual(2.0) == pytest.approx(concordant.c / 1.0)


def test_zero_budget_step_degenerates():
    constants = SmoothnessConstants(1.0, 5.0, 2.0, 0.5)
    policy = StepsizePolicy.build(constants, 10, 2, eps=0.0)
    assert policy.c == 0.0
    with pytest.raises(DegenerateStepsizeError):
        policy.select_alpha(1.0, 0.0, theory=True)


def test_alpha_tau_uses_dual_norm():
    constants = SmoothnessConstants(1.0, 5.0, 2.0, 0.5)
    policy = StepsizePolicy.build(constants, 2, 2)
    grad = np.array([3.0, 4.0])
    factor = SpdFactor(np.eye(2))
    assert alpha_tau(policy, grad, factor) == pytest.approx(policy.c / (0.5 * 5.0))


def test_adaptive_step_is_the_literal_minimum():
    constants = SmoothnessConstants(1.0, 5.0, 4.0, 0.5)
    policy = StepsizePolicy.build(constants, 3, 1)
    grad = np.array([1.0, -2.0, 0.5])
    g = rand_spd(np.random.default_rng(71), 3, 1.0, 5.0)
    factor = SpdFactor(g)
    dual = math.sqrt(float(np.linalg.solve(g, grad) @ grad))
    gnorm = float(np.linalg.norm(grad))
    expect = min(policy.c / (0.5 * dual), 1.0 / (4.0 * beta(gnorm, constants)), 1.0)
    assert adaptive_step(policy, grad, factor) == pytest.approx(expect, rel=1e-12)


def test_local_phase_thresholds():
    constants = SmoothnessConstants(4.0, 8.0, 16.0, 0.5)
    policy = StepsizePolicy.build(constants, 10, 2, p=4)
    assert policy.local_phase_grad_cap() == pytest.approx(
        min(4.0 * 16.0 / 32.0, math.sqrt(16.0) * policy.c / 0.5)
    )
    assert policy.linear_lambda_cap() == pytest.approx(0.25 / (2.0 * 0.5))
    assert policy.superlinear_lambda_cap() == pytest.approx(
        math.log(2.0) / (8.0 * 61.0 * 2.0 * 0.5)
    )
    assert policy.phi_bar0() == pytest.approx(
        1.0 / 3.0 + 10.0 * math.log(2.0) / 122.0
    )
    assert policy.superlinear_base() == pytest.approx(
        max(policy.rho**3, 0.75 * policy.rho)
    )
    free = StepsizePolicy.build(SmoothnessConstants(1.0, 5.0, 0.0, 0.0), 10, 2)
    assert free.local_phase_grad_cap() == math.inf
    assert free.linear_lambda_cap() == math.inf
    assert free.superlinear_lambda_cap() == math.inf


# ---------------------------------------------------------------- lambda


def test_lambda_metric_examples():
    obj, x_star = quadratic_problem(72)
    assert lambda_metric(obj, x_star) == pytest.approx(0.0, abs=1e-9)
    identity = QuadraticObjective(np.eye(4), np.zeros(4))
    x = np.array([1.0, 2.0, -2.0, 0.0])
    assert lambda_metric(identity, x) == pytest.approx(3.0, rel=1e-12)


def test_lambda_metric_matches_explicit_inverse():
    obj = tame_logistic(73, n=6, m=60, gamma=2.0)
    rng = np.random.default_rng(74)
    x = rng.standard_normal(6)
    grad = obj.grad(x)
    expect = math.sqrt(grad @ np.linalg.solve(obj.explicit_hessian(x), grad))
    assert lambda_metric(obj, x) == pytest.approx(expect, rel=1e-10)


def test_lambda_metric_gates_large_problems():
    class Huge:
        n = 2001

    with pytest.raises(ValueError, match="gated"):
        lambda_metric(Huge(), np.zeros(2001))


# -------------------------------------------------------------- warm start


def test_warm_start_returns_upper_bound_immediately_when_loose():
    rng = np.random.default_rng(75)
    a = rand_spd(rng, 4, 1.0, 1.05)
    obj = CountingObjective(QuadraticObjective(a, np.zeros(4)))
    est = warm_start_G0(obj, np.zeros(4), eps=0.5)
    assert np.array_equal(est.matrix, 1.05 * np.eye(4))
    assert obj.hvp_calls == 0


def test_warm_start_uses_the_published_budget():
    rng = np.random.default_rng(76)
    a = rand_spd(rng, 10, 1.0, 5.0)
    obj = CountingObjective(QuadraticObjective(a, np.zeros(10)))
    est = warm_start_G0(obj, np.zeros(10), eps=1.0 / 9.0)
    # ceil(ln(n(kappa-1) / eps) / ln(1/rho)) with rho = 1 - 1/(n kappa)
    assert obj.hvp_calls == 292
    assert sigma_metric(est, SpdFactor(a)) <= 1.0 / 9.0 + 1e-8


def test_warm_start_hits_budget_on_logistic():
    obj = tame_logistic(77, n=10, m=100, gamma=50.0)
    x0 = np.zeros(10)
    eps = 0.25
    est = warm_start_G0(obj, x0, eps)
    hess = SpdFactor(obj.explicit_hessian(x0))
    assert sigma_metric(est, hess) <= eps + 1e-8


def test_warm_start_validation():
    obj, _ = quadratic_problem(78)
    with pytest.raises(ValueError):
        warm_start_G0(obj, np.zeros(8), eps=0.0)


def test_resolve_g0_policies():
    obj, _ = quadratic_problem(79, n=5)
    policy = StepsizePolicy.build(obj.constants, 5, 2)
    given = HessianEstimate(np.eye(5) * obj.constants.omega)
    assert resolve_g0(obj, AgqnConfig(x0=np.zeros(5), g0=given), policy) is given
    omega_est = resolve_g0(obj, AgqnConfig(x0=np.zeros(5)), policy)
    assert np.array_equal(omega_est.matrix, obj.constants.omega * np.eye(5))
    warm = resolve_g0(obj, AgqnConfig(x0=np.zeros(5), g0="warm"), policy)
    assert sigma_metric(warm, SpdFactor(obj.a)) <= policy.eps + 1e-8
    with pytest.raises(ValueError):
        resolve_g0(obj, AgqnConfig(x0=np.zeros(5), g0="identity"), policy)


# ------------------------------------------------------------------ driver


def test_run_converges_in_one_step_with_exact_estimate():
    obj, x_star = quadratic_problem(80)
    config = AgqnConfig(x0=np.ones(8), g0=HessianEstimate(obj.a), tau=0)
    result = agqn_run(obj, config)
    assert result.converged
    assert result.iterations == 1
    assert result.x == pytest.approx(x_star, abs=1e-9)
    assert result.trace[0].alpha == 1.0


def test_run_stops_immediately_at_the_minimizer():
    obj, x_star = quadratic_problem(81)
    result = agqn_run(obj, AgqnConfig(x0=x_star, tol=1e-6))
    assert result.iterations == 0
    assert result.reason == REASON_TOLERANCE
    assert len(result.trace) == 1
    assert result.trace[0].alpha is None
    assert result.trace[0].r_plus is None
    assert result.hvp_calls == 0


def test_run_respects_iteration_cap():
    obj, _ = quadratic_problem(82)
    result = agqn_run(obj, AgqnConfig(x0=np.ones(8), max_iters=0))
    assert result.reason == REASON_MAX_ITERS
    assert result.iterations == 0
    assert len(result.trace) == 1


def test_run_trace_shape_and_counters():
    obj = CountingObjective(tame_logistic(83, n=10, m=80, gamma=20.0))
    config = AgqnConfig(x0=np.ones(10), tau=3, tol=1e-9, keep_iterates=True)
    result = agqn_run(obj, config)
    assert result.converged
    assert len(result.trace) == result.iterations + 1
    assert result.hvp_calls == 5 * result.iterations
    assert obj.hvp_calls == result.hvp_calls
    assert obj.grad_calls == result.iterations + 1
    assert len(result.iterates) == result.iterations + 1
    assert np.array_equal(result.iterates[0], np.ones(10))
    assert np.array_equal(result.iterates[-1], result.x)
    for rec in result.trace[:-1]:
        assert 0.0 < rec.alpha <= 1.0
        assert rec.alpha_tau > 0.0
        assert rec.r_plus >= 0.0
    assert float(np.linalg.norm(obj.grad(result.x))) <= 1e-9
    # cumulative HVPs advance by tau + 2 per row
    counts = [rec.hvp_calls for rec in result.trace]
    assert counts == [5 * (k + 1) for k in range(result.iterations)] + [counts[-1]]


def test_run_rejects_mismatched_start():
    obj, _ = quadratic_problem(84)
    with pytest.raises(ValueError):
        agqn_run(obj, AgqnConfig(x0=np.zeros(3)))


def test_config_validation():
    with pytest.raises(ValueError):
        AgqnConfig(x0=np.zeros(2), tol=0.0)
    with pytest.raises(ValueError):
        AgqnConfig(x0=np.zeros(2), max_iters=-1)


def test_run_zero_budget_raises_under_literal_rule():
    obj = tame_logistic(85, n=6, m=40, gamma=5.0)
    config = AgqnConfig(x0=np.ones(6), eps=0.0, theory_stepsize=True)
    with pytest.raises(DegenerateStepsizeError):
        agqn_run(obj, config)


def minimize(objective, n, tol=1e-12):
    result = agqn_run(objective, AgqnConfig(x0=np.zeros(n), tol=tol, max_iters=200))
    assert result.converged
    return result.x


def test_literal_rule_preserves_budget_and_damping_descent():
    # kappa near 1 makes the budget constant usable, so the literal rule
    # can be exercised end to end: the sigma budget must survive every
    # step, and the damping measure must fall by the two-case rule.
    obj = tame_logistic(86)
    n = obj.n
    x_star = minimize(obj, n)
    rng = np.random.default_rng(87)
    delta = rng.standard_normal(n)
    x0 = x_star + 0.01 * delta / float(np.linalg.norm(delta))
    config = AgqnConfig(
        x0=x0, tau=2, g0="warm", theory_stepsize=True, diagnostics=True, tol=1e-9
    )
    result = agqn_run(obj, config)
    assert result.converged
    eps0 = 1.0 / (2.0 * obj.constants.kappa - 1.0)
    assert result.trace[0].sigma_diag <= eps0 + 1e-8
    capped_steps = 0
    for rec, nxt in zip(result.trace[:-1], result.trace[1:]):
        assert rec.alpha <= rec.alpha_tau
        # budget preservation under the literal rule
        assert nxt.sigma_diag <= eps0 + 1e-8
        if rec.alpha < 1.0:
            capped_steps += 1
        # two-case damping descent, and its quadratic-form companion
        b, b_next, a = rec.beta_value, nxt.beta_value, rec.alpha
        assert b_next <= max(b - 1.0 / 16.0, (1.0 - a / 4.0) * b) + 1e-8
        assert b_next <= (1.0 - a / 2.0) * b + a**2 * b**2 + 1e-8
    # the budget cap actually bound some steps on this instance
    assert capped_steps >= 1
    # the decrement shrinks overall
    lambdas = [rec.lambda_diag for rec in result.trace]
    assert lambdas[-1] < lambdas[0]


def test_practical_rule_matches_budget_behavior_when_uncapped():
    # same instance, default stepsize: every recorded alpha is
    # min{1/(4 beta), 1} and the method still converges.
    obj = tame_logistic(88, n=12, m=150, gamma=100.0)
    result = agqn_run(obj, AgqnConfig(x0=np.ones(12), tau=4, tol=1e-9))
    assert result.converged
    for rec in result.trace[:-1]:
        expect = min(1.0, 1.0 / (4.0 * rec.beta_value)) if rec.beta_value else 1.0
        assert rec.alpha == pytest.approx(expect, rel=1e-12)


def test_deeper_refinement_does_not_slow_convergence():
    obj = tame_logistic(89, n=10, m=120, gamma=30.0)
    iters = {}
    for tau in (0, 2, 6):
        result = agqn_run(obj, AgqnConfig(x0=np.ones(10), tau=tau, tol=1e-9))
        assert result.converged
        iters[tau] = result.iterations
    assert iters[6] <= iters[0]


def test_quadratic_run_reaches_superlinear_tail():
    obj, _ = quadratic_problem(90, n=8, lo=1.0, hi=20.0)
    result = agqn_run(obj, AgqnConfig(x0=np.ones(8), tau=0, tol=1e-10, diagnostics=True))
    assert result.converged
    grads = [rec.grad_norm for rec in result.trace]
    assert grads[-1] <= 1e-10
    # the estimate improves monotonically in the sigma metric
    sigmas = [rec.sigma_diag for rec in result.trace]
    assert all(b <= a + 1e-10 for a, b in zip(sigmas, sigmas[1:]))
