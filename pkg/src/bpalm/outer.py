"""Outer proximal multiplier loop: step-size selection, dispatch, updates.

Each outer iteration selects the largest admissible step size by backtracking
against the regime's self-referential bound, solves the smooth subproblem with
the Newton oracle from the warm start, then applies the mirror-corrected
primal update and the exact multiplier update.  Termination couples the
progress proxy B with natural-map KKT residuals: B alone can be small far from
optimality when the relative tolerance is large.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .auglag import make_context
from .exceptions import (
    BisectionFailedError,
    DimensionError,
    DomainError,
    EmptyStateError,
    InvalidRegimeError,
)
from .legendre import BregmanGeometry
from .newton import (
    NewtonTrace,
    predicted_for_context,
    regime_modulus,
    solve_subproblem,
)
from .penalty import DualPenalty, penalty_for
from .problem import KKTResiduals, ProblemSpec, kkt_residuals

__all__ = [
    "SolveStatus",
    "RhoSchedule",
    "BisectionConfig",
    "SolverConfig",
    "IterateState",
    "OuterRecord",
    "SolveTrace",
    "SolveReport",
    "select_sigma",
    "outer_iteration",
    "run",
    "ergodic_iterates",
    "default_start",
]

# multiplicative multiplier updates can underflow to exact zero; the floor
# keeps dual iterates strictly inside the positive geometries' domains (just
# above the boundary margin) and is far below every reporting tolerance
_TINY_POSITIVE = 1e-148


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    MAX_ITER = "max_iter"
    INNER_FAILURE = "inner_failure"
    DIVERGED = "diverged"


@dataclass(frozen=True)
class RhoSchedule:
    """Relative-error tolerance per outer iteration, constant or geometric.

    A positive floor keeps a decaying schedule above what double precision can
    certify: the inner test compares quantities of size sigma^2 ||grad||^2
    against rho * B, and rho below ~1e-12 demands gradient norms the Newton
    oracle cannot reach in floating point.
    """

    rho0: float
    factor: float = 1.0
    floor: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.rho0 < 1.0:
            raise DomainError(f"rho must lie in [0, 1), got {self.rho0}")
        if not 0.0 < self.factor <= 1.0:
            raise DomainError(f"rho decay factor must lie in (0, 1], got {self.factor}")
        if not 0.0 <= self.floor <= self.rho0:
            raise DomainError(f"rho floor must lie in [0, rho0], got {self.floor}")

    @classmethod
    def constant(cls, rho: float) -> "RhoSchedule":
        return cls(rho0=rho, factor=1.0)

    @classmethod
    def geometric(cls, rho0: float, factor: float, floor: float = 0.0) -> "RhoSchedule":
        return cls(rho0=rho0, factor=factor, floor=floor)

    def value(self, k: int) -> float:
        return max(self.rho0 * self.factor**k, self.floor)


@dataclass(frozen=True)
class BisectionConfig:
    max_iters: int = 40
    shrink: float = 0.5


@dataclass
class SolverConfig:
    geometry: BregmanGeometry
    regime: str = "qsc"
    sigma0: float = 1.0
    sigma_growth: float = 2.0
    rho_schedule: RhoSchedule = field(default_factory=lambda: RhoSchedule.constant(0.5))
    tol_b: float = 1e-10
    tol_kkt: float = 1e-8
    max_outer: int = 200
    newton_cap: int = 50
    bisection: BisectionConfig = field(default_factory=BisectionConfig)
    sigma_min: float = 1e-12
    divergence_norm: float = 1e12
    stagnation_limit: int = 50

    def __post_init__(self):
        if self.sigma0 <= 0.0:
            raise DomainError(f"sigma0 must be positive, got {self.sigma0}")
        if self.sigma_growth < 1.0:
            raise DomainError(f"sigma growth must be >= 1, got {self.sigma_growth}")
        if self.regime not in ("qsc", "qsc_lipschitz", "sc"):
            raise InvalidRegimeError(f"unknown regime {self.regime!r}")


@dataclass
class IterateState:
    x: np.ndarray
    y: np.ndarray
    ergodic_x: np.ndarray
    ergodic_y: np.ndarray
    weight_sum: float
    k: int
    sigma_prev: float | None = None

    @classmethod
    def initial(cls, x0: np.ndarray, y0: np.ndarray) -> "IterateState":
        return cls(
            x=np.asarray(x0, dtype=float).copy(),
            y=np.asarray(y0, dtype=float).copy(),
            ergodic_x=np.zeros(np.size(x0)),
            ergodic_y=np.zeros(np.size(y0)),
            weight_sum=0.0,
            k=0,
        )


@dataclass(frozen=True)
class OuterRecord:
    """Everything one outer iteration produced, for traces and diagnostics."""

    k: int
    sigma: float
    rho: float
    sigma_clipped: bool
    x_anchor: np.ndarray
    y_anchor: np.ndarray
    s: np.ndarray
    x_next: np.ndarray
    y_next: np.ndarray
    b_value: float
    grad_norm: float
    decrement: float
    newton: NewtonTrace
    predicted_newton: int | None
    residuals: KKTResiduals
    dual_perturbation: np.ndarray  # v in the x-block of the KKT operator at (s, y_next)
    accepted: bool


@dataclass
class SolveTrace:
    x0: np.ndarray
    y0: np.ndarray
    records: list[OuterRecord] = field(default_factory=list)


@dataclass
class SolveReport:
    status: SolveStatus
    x: np.ndarray
    y: np.ndarray
    residuals: KKTResiduals
    outer_iterations: int
    total_newton_steps: int
    sigma_final: float
    wall_seconds: float
    trace: SolveTrace


def default_start(geometry: BregmanGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Interior default starts: zeros/midpoint primal, zeros/all-ones dual."""
    psi, phi = geometry.primal, geometry.dual
    if psi.kind == "box_barrier":
        x0 = 0.5 * (psi.lower + psi.upper)
    else:
        x0 = np.zeros(psi.dim)
    if phi.kind in ("von_neumann", "spence", "burg"):
        y0 = np.ones(phi.dim)
    else:
        y0 = np.zeros(phi.dim)
    return x0, y0


def _validate(cfg: SolverConfig, problem: ProblemSpec, penalty: DualPenalty) -> None:
    psi, phi = cfg.geometry.primal, cfg.geometry.dual
    if psi.dim != problem.n:
        raise DimensionError(
            f"primal geometry dimension {psi.dim} != problem dimension {problem.n}"
        )
    if phi.dim != problem.m:
        raise DimensionError(
            f"dual geometry dimension {phi.dim} != constraint dimension {problem.m}"
        )
    if psi.kind == "box_barrier":
        if problem.f.box is None:
            raise DomainError("box-barrier geometry requires a box-constrained objective")
        lo, hi = problem.f.box
        if not (np.allclose(lo, psi.lower) and np.allclose(hi, psi.upper)):
            raise DomainError("objective box and barrier box must coincide")
    elif problem.f.box is not None:
        raise DomainError(
            "box-constrained objectives need the box-barrier primal geometry"
        )
    if cfg.regime == "sc":
        if problem.g.variant != "zero" or phi.kind != "energy":
            raise InvalidRegimeError(
                "sc regime covers equality constraints with the Euclidean dual"
            )
        if not psi.sc_modulus:
            raise InvalidRegimeError(
                "sc regime needs a self-concordant primal geometry (box barrier)"
            )
        if problem.f.sc_modulus is None:
            raise InvalidRegimeError("sc regime needs an objective SC modulus")


def _admissibility_test(
    cfg: SolverConfig,
    problem: ProblemSpec,
    penalty: DualPenalty,
    x: np.ndarray,
    y: np.ndarray,
):
    """Build the per-anchor step-size test; anchor quantities are hoisted so
    backtracking only pays for the sigma-dependent parts."""
    A = problem.map.A
    residual = problem.map.residual(x)
    grad_f = problem.f.grad(x)

    if cfg.regime in ("qsc", "qsc_lipschitz"):
        grad_phi_y = cfg.geometry.dual.grad(y)
        m_f = problem.f.qsc_modulus
        alpha = penalty.qsc_modulus
        norm_a = problem.map.op_norm_bound

        def admissible(sigma: float) -> bool:
            u = grad_phi_y + sigma * residual
            g_k = float(np.linalg.norm(grad_f + A.T @ penalty.grad(u)))
            bound = math.inf
            if g_k * m_f > 0.0:
                bound = 1.0 / (2.0 * g_k * m_f)
            pull = 2.0 * g_k * alpha * norm_a
            if pull > 0.0:
                bound = min(bound, 1.0 / math.sqrt(pull))
            return sigma <= bound

        return admissible

    # sc: keep the warm start inside the quadratic convergence region of the
    # local norm, sigma * 16 M^2 <gJ, hess_psi^{-1} gJ> < 1
    m_psi = cfg.geometry.primal.sc_modulus
    m_f_sc = problem.f.sc_modulus
    inv_hess = 1.0 / cfg.geometry.primal.hess_diag(x)
    base = grad_f + A.T @ y
    pull = A.T @ residual

    def admissible(sigma: float) -> bool:
        m_k = max(m_f_sc, math.sqrt(sigma) * m_psi)
        g_j = base + sigma * pull
        quad = float(g_j @ (inv_hess * g_j))
        return 16.0 * m_k * m_k * quad * sigma < 1.0

    return admissible


def select_sigma(
    cfg: SolverConfig,
    problem: ProblemSpec,
    penalty: DualPenalty,
    x: np.ndarray,
    y: np.ndarray,
    target: float,
) -> tuple[float, bool]:
    """Largest step size in {target * shrink^j} passing the regime bound.

    Returns the step size and whether backtracking had to shrink the target.
    """
    admissible = _admissibility_test(cfg, problem, penalty, x, y)
    for j in range(cfg.bisection.max_iters):
        sigma = target * cfg.bisection.shrink**j
        if sigma < cfg.sigma_min:
            break
        if admissible(sigma):
            return sigma, j > 0
    raise BisectionFailedError(
        f"no admissible sigma >= {cfg.sigma_min} below target {target}"
    )


def outer_iteration(
    cfg: SolverConfig,
    problem: ProblemSpec,
    penalty: DualPenalty,
    state: IterateState,
) -> tuple[IterateState, OuterRecord]:
    """One outer step; on inner failure the state is returned unchanged."""
    target = cfg.sigma0 if state.sigma_prev is None else state.sigma_prev * cfg.sigma_growth
    sigma, clipped = select_sigma(cfg, problem, penalty, state.x, state.y, target)
    rho = cfg.rho_schedule.value(state.k)
    ctx = make_context(problem, penalty, cfg.geometry, state.x, state.y, sigma, rho)

    inner = solve_subproblem(
        ctx, start=state.x, cap=cfg.newton_cap, modulus=regime_modulus(ctx, cfg.regime)
    )
    s = inner.s
    psi = cfg.geometry.primal

    y_next = ctx.multiplier_candidate(s)
    if cfg.geometry.dual.kind in ("von_neumann", "spence", "burg"):
        y_next = np.maximum(y_next, _TINY_POSITIVE)
    x_next = inner.x_plus if inner.x_plus is not None else s

    try:
        predicted = predicted_for_context(ctx, cfg.regime, inner.b_value)
    except InvalidRegimeError:
        predicted = None
    inner.trace.predicted = predicted

    v_k = inner.grad - (psi.grad(s) - psi.grad(state.x)) / sigma
    residuals = kkt_residuals(problem, s, y_next)

    record = OuterRecord(
        k=state.k,
        sigma=sigma,
        rho=rho,
        sigma_clipped=clipped,
        x_anchor=state.x.copy(),
        y_anchor=state.y.copy(),
        s=s.copy(),
        x_next=np.asarray(x_next, dtype=float).copy(),
        y_next=y_next.copy(),
        b_value=inner.b_value,
        grad_norm=float(np.linalg.norm(inner.grad)),
        decrement=inner.trace.steps[-1].decrement,
        newton=inner.trace,
        predicted_newton=predicted,
        residuals=residuals,
        dual_perturbation=v_k,
        accepted=inner.accepted,
    )
    if not inner.accepted:
        return state, record

    new_state = IterateState(
        x=np.asarray(x_next, dtype=float).copy(),
        y=y_next.copy(),
        ergodic_x=state.ergodic_x + sigma * s,
        ergodic_y=state.ergodic_y + sigma * y_next,
        weight_sum=state.weight_sum + sigma,
        k=state.k + 1,
        sigma_prev=sigma,
    )
    return new_state, record


def ergodic_iterates(state: IterateState) -> tuple[np.ndarray, np.ndarray]:
    """Step-size-weighted running averages of the primal/dual candidates."""
    if state.weight_sum <= 0.0:
        raise EmptyStateError("no iterations recorded yet")
    return state.ergodic_x / state.weight_sum, state.ergodic_y / state.weight_sum


def run(
    cfg: SolverConfig,
    problem: ProblemSpec,
    x0=None,
    y0=None,
) -> SolveReport:
    """Drive outer iterations until the progress proxy and the KKT residuals
    both fall below their tolerances."""
    penalty = penalty_for(problem.g, cfg.geometry.dual)
    _validate(cfg, problem, penalty)
    if x0 is None or y0 is None:
        dx, dy = default_start(cfg.geometry)
        x0 = dx if x0 is None else np.asarray(x0, dtype=float)
        y0 = dy if y0 is None else np.asarray(y0, dtype=float)
    x0 = np.asarray(x0, dtype=float).copy()
    y0 = np.asarray(y0, dtype=float).copy()
    if not cfg.geometry.primal.in_interior(x0):
        raise DomainError("x0 must be interior to the primal geometry")
    if not cfg.geometry.dual.in_interior(y0):
        raise DomainError("y0 must be interior to the dual geometry")

    started = time.perf_counter()
    trace = SolveTrace(x0=x0.copy(), y0=y0.copy())
    state = IterateState.initial(x0, y0)
    status = SolveStatus.MAX_ITER
    best_primal = math.inf
    stall = 0

    for _ in range(cfg.max_outer):
        try:
            state, record = outer_iteration(cfg, problem, penalty, state)
        except BisectionFailedError:
            status = SolveStatus.INNER_FAILURE
            break
        trace.records.append(record)
        resid = record.residuals
        converged = record.b_value <= cfg.tol_b and resid.max_residual() <= cfg.tol_kkt
        if not record.accepted:
            # the relative test can sink below what floating point can certify
            # (required ||grad|| ~ sqrt(B)/sigma under the gradient's rounding
            # floor); the iterate still counts as a solution if it meets the
            # outer tolerances, which is what the report promises
            status = SolveStatus.OPTIMAL if converged else SolveStatus.INNER_FAILURE
            break
        if converged:
            status = SolveStatus.OPTIMAL
            break
        if float(np.linalg.norm(state.y)) > cfg.divergence_norm:
            status = SolveStatus.DIVERGED
            break
        if (
            record.sigma_clipped
            and resid.primal_res > cfg.tol_kkt
            and resid.primal_res > 0.999 * best_primal
        ):
            stall += 1
            if stall >= cfg.stagnation_limit:
                status = SolveStatus.DIVERGED
                break
        else:
            stall = 0
        best_primal = min(best_primal, resid.primal_res)

    if trace.records:
        last = trace.records[-1]
        final_x, final_y = last.s, last.y_next
        residuals = last.residuals
        sigma_final = last.sigma
    else:
        final_x, final_y = x0, y0
        residuals = kkt_residuals(problem, x0, y0)
        sigma_final = cfg.sigma0

    return SolveReport(
        status=status,
        x=final_x.copy(),
        y=final_y.copy(),
        residuals=residuals,
        outer_iterations=len(trace.records),
        total_newton_steps=sum(r.newton.iterations_used for r in trace.records),
        sigma_final=sigma_final,
        wall_seconds=time.perf_counter() - started,
        trace=trace,
    )
