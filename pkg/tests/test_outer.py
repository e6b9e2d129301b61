"""Tests for the outer proximal multiplier driver."""

import numpy as np
import pytest

from bpalm.exceptions import DomainError, EmptyStateError, InvalidRegimeError
from bpalm.legendre import BregmanGeometry, box_barrier, energy, spence, von_neumann
from bpalm.outer import (
    BisectionConfig,
    IterateState,
    RhoSchedule,
    SolveStatus,
    SolverConfig,
    default_start,
    ergodic_iterates,
    outer_iteration,
    run,
    select_sigma,
)
from bpalm.penalty import penalty_for
from bpalm.problem import AffineMap, NonsmoothTerm, ProblemSpec, SmoothObjective


def eq_qp():
    return ProblemSpec(
        f=SmoothObjective.quadratic([[1.0]], [0.0]),
        g=NonsmoothTerm.zero_indicator(),
        map=AffineMap.from_dense([[1.0]], [1.0]),
    )


def ineq_qp():
    """min (x - 2)^2 / 2 s.t. x <= 1; saddle (1, 1)."""
    return ProblemSpec(
        f=SmoothObjective.quadratic([[1.0]], [-2.0]),
        g=NonsmoothTerm.nonneg_orthant_indicator(),
        map=AffineMap.from_dense([[1.0]], [1.0]),
    )


def eq_cfg(**kw):
    defaults = dict(geometry=BregmanGeometry(energy(1), energy(1)), regime="qsc")
    defaults.update(kw)
    return SolverConfig(**defaults)


def vn_cfg(problem, **kw):
    defaults = dict(
        geometry=BregmanGeometry(energy(problem.n), von_neumann(problem.m)),
        regime="qsc",
    )
    defaults.update(kw)
    return SolverConfig(**defaults)


class TestRhoSchedule:
    def test_constant(self):
        sched = RhoSchedule.constant(0.3)
        assert sched.value(0) == sched.value(7) == 0.3

    def test_geometric_with_floor(self):
        sched = RhoSchedule.geometric(0.5, 0.5, floor=1e-3)
        assert sched.value(1) == 0.25
        assert sched.value(40) == 1e-3

    def test_validation(self):
        with pytest.raises(DomainError):
            RhoSchedule.constant(1.0)
        with pytest.raises(DomainError):
            RhoSchedule.geometric(0.5, 1.5)


class TestSelectSigma:
    def test_synthetic_backtrack(self):
        # M_f = 0, exponential penalty, residual 0 at the anchor keeps
        # g_k = ||grad f + A' exp(0)|| = 1 for every trial sigma, so the bound
        # is 1/sqrt(2): the target 1 shrinks exactly once to 0.5
        ps = ProblemSpec(
            f=SmoothObjective.quadratic([[1.0]], [0.0]),
            g=NonsmoothTerm.nonneg_orthant_indicator(),
            map=AffineMap.from_dense([[1.0]], [0.0]),
        )
        cfg = vn_cfg(ps)
        pen = penalty_for(ps.g, cfg.geometry.dual)
        sigma, clipped = select_sigma(cfg, ps, pen, np.array([0.0]), np.array([1.0]), 1.0)
        assert sigma == pytest.approx(0.5)
        assert clipped

    def test_unbounded_when_modulus_zero(self):
        # half-square penalty with a quadratic objective has no curvature
        # bound: the target is always admissible
        ps = eq_qp()
        cfg = eq_cfg()
        pen = penalty_for(ps.g, cfg.geometry.dual)
        sigma, clipped = select_sigma(cfg, ps, pen, np.array([0.0]), np.array([0.0]), 64.0)
        assert sigma == 64.0
        assert not clipped

    def test_sc_accepts_target_at_stationary_start(self):
        lo, hi = np.zeros(1), np.ones(1)
        ps = ProblemSpec(
            f=SmoothObjective.quadratic(np.eye(1), [-0.5], box=(lo, hi)),
            g=NonsmoothTerm.zero_indicator(),
            map=AffineMap.from_dense([[1.0]], [0.5]),
        )
        cfg = SolverConfig(geometry=BregmanGeometry(box_barrier(lo, hi), energy(1)), regime="sc")
        pen = penalty_for(ps.g, cfg.geometry.dual)
        # x = 0.5 is the saddle with y = 0: grad J vanishes, any sigma passes
        sigma, clipped = select_sigma(cfg, ps, pen, np.array([0.5]), np.array([0.0]), 8.0)
        assert sigma == 8.0
        assert not clipped


class TestOuterIteration:
    def test_worked_example(self):
        ps = eq_qp()
        cfg = eq_cfg(sigma0=1.0, rho_schedule=RhoSchedule.constant(0.0))
        pen = penalty_for(ps.g, cfg.geometry.dual)
        state = IterateState.initial(np.array([0.0]), np.array([0.0]))
        new_state, rec = outer_iteration(cfg, ps, pen, state)
        assert rec.s == pytest.approx([1 / 3], abs=1e-12)
        assert new_state.x == pytest.approx([1 / 3], abs=1e-12)
        assert new_state.y == pytest.approx([-2 / 3], abs=1e-12)
        assert rec.sigma == 1.0

    def test_fixed_point_at_saddle(self):
        ps = eq_qp()
        cfg = eq_cfg(rho_schedule=RhoSchedule.constant(0.5))
        pen = penalty_for(ps.g, cfg.geometry.dual)
        state = IterateState.initial(np.array([1.0]), np.array([-1.0]))
        new_state, rec = outer_iteration(cfg, ps, pen, state)
        assert new_state.x == pytest.approx([1.0], abs=1e-10)
        assert new_state.y == pytest.approx([-1.0], abs=1e-10)
        assert rec.newton.iterations_used == 0

    def test_warm_start_contract(self):
        # the inner solve starts at the current anchor: its first recorded
        # gradient norm equals the subproblem gradient at x_k
        ps = ineq_qp()
        cfg = vn_cfg(ps)
        pen = penalty_for(ps.g, cfg.geometry.dual)
        state = IterateState.initial(np.array([0.0]), np.array([1.0]))
        _, rec = outer_iteration(cfg, ps, pen, state)
        np.testing.assert_allclose(rec.x_anchor, [0.0])
        assert rec.newton.steps[0].step_norm == 0.0


class TestRun:
    def test_equality_qp(self):
        rep = run(eq_cfg(tol_b=1e-10, tol_kkt=1e-8), eq_qp())
        assert rep.status == SolveStatus.OPTIMAL
        assert rep.x == pytest.approx([1.0], abs=1e-7)
        assert rep.y == pytest.approx([-1.0], abs=1e-7)

    def test_inequality_exponential(self):
        rep = run(vn_cfg(ineq_qp()), ineq_qp())
        assert rep.status == SolveStatus.OPTIMAL
        assert rep.x == pytest.approx([1.0], abs=1e-6)
        assert rep.y == pytest.approx([1.0], abs=1e-6)

    def test_max_outer_zero(self):
        rep = run(eq_cfg(max_outer=0), eq_qp())
        assert rep.status == SolveStatus.MAX_ITER
        assert rep.outer_iterations == 0
        assert rep.residuals.primal_res == pytest.approx(1.0)

    def test_default_starts(self):
        x0, y0 = default_start(BregmanGeometry(energy(2), von_neumann(3)))
        np.testing.assert_allclose(x0, np.zeros(2))
        np.testing.assert_allclose(y0, np.ones(3))
        x0, y0 = default_start(BregmanGeometry(box_barrier([0.0], [2.0]), energy(1)))
        np.testing.assert_allclose(x0, [1.0])

    def test_exponential_multiplier_identity(self):
        ps = ineq_qp()
        rep = run(vn_cfg(ps), ps)
        for rec in rep.trace.records:
            expected = rec.y_anchor * np.exp(rec.sigma * ps.map.residual(rec.s))
            np.testing.assert_allclose(rec.y_next, expected, atol=1e-12)

    def test_dual_interiority(self):
        ps = ineq_qp()
        for dual in (von_neumann(1), spence(1)):
            cfg = SolverConfig(geometry=BregmanGeometry(energy(1), dual), regime="qsc")
            rep = run(cfg, ps)
            assert all(np.all(r.y_next > 0.0) for r in rep.trace.records)

    def test_sigma_growth_unclipped_on_quadratics(self):
        rep = run(eq_cfg(sigma0=1.0, sigma_growth=2.0, max_outer=6,
                         tol_b=1e-300, tol_kkt=1e-300), eq_qp())
        sigmas = [r.sigma for r in rep.trace.records]
        np.testing.assert_allclose(sigmas, [1.0, 2.0, 4.0, 8.0, 16.0, 32.0])

    def test_nearly_degenerate_duals_terminate_optimal(self):
        # two almost-parallel active rows force multipliers ~ 6.8e3; at that
        # scale the gradient's rounding floor sits above what the relative
        # test demands near the end, and the run must still close on the
        # outer tolerances instead of reporting an inner failure
        W = np.array(
            [[2.381136967116376, -0.9982353872375591],
             [-0.9982353872375591, 2.132728045857923]]
        )
        c = np.array([0.6234089008737357, -0.5461756104934902])
        A = np.array(
            [[-0.01180120700960992, -0.15140200420753405],
             [0.30178745626029124, 2.2589007355834987],
             [1.3020585640804112, -0.01660459246591676],
             [1.4580892393025482, -0.04657791282548052],
             [0.29507115047078647, 1.184712928256431],
             [1.960438907894606, 0.5977062128644799]]
        )
        b = np.array(
            [-0.18916186412220268, 0.12248818193108196, -0.6696815063870636,
             -0.49813617560190754, -0.5076239690232189, -0.9016739491582767]
        )
        ps = ProblemSpec(
            f=SmoothObjective.quadratic(W, c),
            g=NonsmoothTerm.nonneg_orthant_indicator(),
            map=AffineMap.from_dense(A, b),
        )
        cfg = SolverConfig(
            geometry=BregmanGeometry(energy(2), von_neumann(6)),
            regime="qsc",
            tol_b=1e-9,
            tol_kkt=1e-9,
            max_outer=500,
        )
        rep = run(cfg, ps)
        assert rep.status == SolveStatus.OPTIMAL
        assert rep.residuals.max_residual() <= 1e-9

    def test_diverged_on_infeasible(self):
        # x = 0 and x = 1 cannot both hold; multipliers blow up
        ps = ProblemSpec(
            f=SmoothObjective.quadratic(np.eye(1), [0.0]),
            g=NonsmoothTerm.zero_indicator(),
            map=AffineMap.from_dense([[1.0], [1.0]], [0.0, 1.0]),
        )
        cfg = SolverConfig(
            geometry=BregmanGeometry(energy(1), energy(2)),
            regime="qsc",
            max_outer=500,
        )
        rep = run(cfg, ps)
        assert rep.status == SolveStatus.DIVERGED

    def test_invalid_start_raises(self):
        with pytest.raises(DomainError):
            run(vn_cfg(ineq_qp()), ineq_qp(), y0=[0.0])

    def test_geometry_dimension_mismatch(self):
        cfg = SolverConfig(geometry=BregmanGeometry(energy(2), energy(1)), regime="qsc")
        with pytest.raises(Exception):
            run(cfg, eq_qp())

    def test_sc_regime_validation(self):
        cfg = SolverConfig(geometry=BregmanGeometry(energy(1), energy(1)), regime="sc")
        with pytest.raises(InvalidRegimeError):
            run(cfg, eq_qp())

    def test_box_mismatch_rejected(self):
        lo, hi = np.zeros(1), np.ones(1)
        ps = ProblemSpec(
            f=SmoothObjective.quadratic(np.eye(1), [0.0], box=(lo, hi)),
            g=NonsmoothTerm.zero_indicator(),
            map=AffineMap.from_dense([[1.0]], [0.5]),
        )
        cfg = SolverConfig(
            geometry=BregmanGeometry(box_barrier([0.0], [2.0]), energy(1)), regime="sc"
        )
        with pytest.raises(DomainError):
            run(cfg, ps)

    def test_report_fields(self):
        rep = run(eq_cfg(), eq_qp())
        assert rep.total_newton_steps == sum(
            r.newton.iterations_used for r in rep.trace.records
        )
        assert rep.sigma_final == rep.trace.records[-1].sigma
        assert rep.wall_seconds > 0.0


class TestErgodic:
    def test_weighted_mean(self):
        state = IterateState.initial(np.array([0.0]), np.array([0.0]))
        state.ergodic_x = np.array([1.0 * 0.0 + 3.0 * 1.0])
        state.ergodic_y = np.array([0.0])
        state.weight_sum = 4.0
        xb, yb = ergodic_iterates(state)
        assert xb == pytest.approx([0.75])

    def test_single_iteration_equals_iterate(self):
        ps = eq_qp()
        cfg = eq_cfg(rho_schedule=RhoSchedule.constant(0.0))
        pen = penalty_for(ps.g, cfg.geometry.dual)
        state = IterateState.initial(np.array([0.0]), np.array([0.0]))
        state, rec = outer_iteration(cfg, ps, pen, state)
        xb, yb = ergodic_iterates(state)
        np.testing.assert_allclose(xb, rec.s)
        np.testing.assert_allclose(yb, rec.y_next)

    def test_constant_iterates_average_to_constant(self):
        ps = eq_qp()
        cfg = eq_cfg(rho_schedule=RhoSchedule.constant(0.5))
        pen = penalty_for(ps.g, cfg.geometry.dual)
        state = IterateState.initial(np.array([1.0]), np.array([-1.0]))
        for _ in range(3):
            state, _ = outer_iteration(cfg, ps, pen, state)
        xb, yb = ergodic_iterates(state)
        np.testing.assert_allclose(xb, [1.0], atol=1e-9)
        np.testing.assert_allclose(yb, [-1.0], atol=1e-9)

    def test_empty_state(self):
        with pytest.raises(EmptyStateError):
            ergodic_iterates(IterateState.initial(np.zeros(1), np.zeros(1)))


def test_bisection_config_defaults():
    cfg = BisectionConfig()
    assert cfg.max_iters == 40
    assert cfg.shrink == 0.5


def test_config_validation():
    with pytest.raises(DomainError):
        SolverConfig(geometry=BregmanGeometry(energy(1), energy(1)), sigma0=0.0)
    with pytest.raises(InvalidRegimeError):
        SolverConfig(geometry=BregmanGeometry(energy(1), energy(1)), regime="bfgs")
