"""Inner second-order oracle: pure Newton steps, decrement, predicted counts.

No line search: the outer step-size rule places the warm start inside the
quadratic-convergence region, so full steps suffice.  A fraction-to-boundary
clamp (factor 0.99) protects floating point when the primal geometry has a
bounded domain.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .auglag import SubproblemContext
from .exceptions import FactorizationError, InvalidRegimeError

__all__ = [
    "NewtonStepRecord",
    "NewtonTrace",
    "InnerSolve",
    "newton_step",
    "newton_decrement",
    "solve_subproblem",
    "predicted_newton_steps",
    "predicted_for_context",
    "regime_modulus",
]

logger = logging.getLogger(__name__)

# ||grad|| at which an iterate counts as an exact subproblem solution even if
# the relative test is unattainable (rho = 0 on a non-quadratic objective)
GRAD_FLOOR = 1e-12

_BOUNDARY_FRACTION = 0.99
_TINY_B = 1e-300  # stands in for a measured B of exactly zero inside logs


@dataclass(frozen=True)
class NewtonStepRecord:
    grad_norm: float
    decrement: float
    step_norm: float
    accepted: bool


@dataclass
class NewtonTrace:
    """Records for every visited iterate, the warm start included."""

    steps: list[NewtonStepRecord] = field(default_factory=list)
    iterations_used: int = 0
    predicted: int | None = None


@dataclass(frozen=True)
class InnerSolve:
    s: np.ndarray
    trace: NewtonTrace
    accepted: bool
    grad: np.ndarray
    x_plus: np.ndarray | None
    b_value: float


def _solve_spd(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    """H^{-1} g through a Cholesky factorization, with a one-shot diagonal
    lift on failure; the objective is strongly convex, so failures indicate
    conditioning rather than modeling."""
    try:
        return cho_solve(cho_factor(H), g)
    except LinAlgError:
        lift = 1e-12 * (1.0 + float(np.trace(H)) / H.shape[0])
        logger.warning("SPD factorization failed; retrying with lift %.3e", lift)
        try:
            return cho_solve(cho_factor(H + lift * np.eye(H.shape[0])), g)
        except LinAlgError as exc:
            raise FactorizationError("subproblem Hessian is not numerically SPD") from exc


def _clamped_step(ctx: SubproblemContext, s: np.ndarray, direction: np.ndarray) -> np.ndarray:
    psi = ctx.geometry.primal
    lower = getattr(psi, "lower", None)
    if lower is None:
        return s + direction
    upper = psi.upper
    t_max = math.inf
    for di, si, lo, hi in zip(direction, s, lower, upper):
        if di > 0.0:
            t_max = min(t_max, (hi - si) / di)
        elif di < 0.0:
            t_max = min(t_max, (lo - si) / di)
    t = min(1.0, _BOUNDARY_FRACTION * t_max)
    return s + t * direction


def newton_step(ctx: SubproblemContext, s) -> np.ndarray:
    """One pure Newton step on the subproblem objective from s."""
    s = np.asarray(s, dtype=float)
    direction = -_solve_spd(ctx.hess(s), ctx.grad(s))
    return _clamped_step(ctx, s, direction)


def newton_decrement(ctx: SubproblemContext, s, modulus: float) -> float:
    """modulus * sqrt(<grad, hess^{-1} grad>) at s."""
    if modulus <= 0.0:
        raise InvalidRegimeError("decrement modulus must be positive")
    s = np.asarray(s, dtype=float)
    g = ctx.grad(s)
    return modulus * math.sqrt(max(float(g @ _solve_spd(ctx.hess(s), g)), 0.0))


def solve_subproblem(
    ctx: SubproblemContext,
    start,
    cap: int,
    modulus: float | None = None,
) -> InnerSolve:
    """Iterate Newton steps until the relative acceptance test passes.

    The test also runs at the warm start, so a near-optimal anchor needs no
    step at all.  Hitting the cap is reported, not raised.
    """
    scale = modulus if modulus and modulus > 0.0 else 1.0
    s = np.asarray(start, dtype=float)
    trace = NewtonTrace()

    g = ctx.grad(s)
    d = -_solve_spd(ctx.hess(s), g)
    lam = scale * math.sqrt(max(float(-g @ d), 0.0))
    check = ctx.acceptance_check(s, g)
    accepted = check.accepted or float(np.linalg.norm(g)) <= GRAD_FLOOR
    trace.steps.append(
        NewtonStepRecord(float(np.linalg.norm(g)), lam, 0.0, accepted)
    )
    if accepted:
        return InnerSolve(s, trace, True, g, check.x_plus, check.b_value)

    for t in range(1, cap + 1):
        s_next = _clamped_step(ctx, s, d)
        step_norm = float(np.linalg.norm(s_next - s))
        s = s_next
        g = ctx.grad(s)
        d = -_solve_spd(ctx.hess(s), g)
        lam = scale * math.sqrt(max(float(-g @ d), 0.0))
        check = ctx.acceptance_check(s, g)
        accepted = check.accepted or float(np.linalg.norm(g)) <= GRAD_FLOOR
        trace.steps.append(
            NewtonStepRecord(float(np.linalg.norm(g)), lam, step_norm, accepted)
        )
        trace.iterations_used = t
        if accepted:
            return InnerSolve(s, trace, True, g, check.x_plus, check.b_value)

    return InnerSolve(s, trace, False, g, check.x_plus, check.b_value)


def _ceil_log2(x: float) -> int:
    if x <= 0.0:
        return 0
    return max(0, math.ceil(math.log2(x)))


def predicted_newton_steps(
    regime: str,
    *,
    rho: float,
    m_k: float | None = None,
    b_value: float | None = None,
    l_k: float | None = None,
    sigma: float | None = None,
    m_psi: float | None = None,
    c_sigma: float | None = None,
) -> int:
    """Sufficient pure-Newton step counts from the complexity propositions.

    All three formulas are double logarithms; a nonpositive inner logarithm
    means the test is satisfiable immediately and the count clamps to 0.
    """
    if rho is None or rho <= 0.0:
        raise InvalidRegimeError("predicted counts require rho > 0")

    if regime == "qsc":
        if m_k is None or b_value is None:
            raise InvalidRegimeError("qsc prediction needs m_k and b_value")
        if m_k == 0.0:
            return 1  # the subproblem is an exact quadratic: one step solves it
        b = max(b_value, _TINY_B)
        # the contraction chain gives theta^(2^T) <= c_k sqrt(2 rho B) / sigma
        # with c_k = 2 m_k exp(-1) sigma; the count is zero exactly when the
        # warm start already passes the relative test
        inner = math.log(
            1.0 / (2.0 * m_k * math.exp(-1.0) * math.sqrt(2.0 * rho) * math.sqrt(b))
        )
        return _ceil_log2(inner)

    if regime == "qsc_lipschitz":
        if l_k is None or sigma is None:
            raise InvalidRegimeError("qsc_lipschitz prediction needs l_k and sigma")
        inner = (
            math.log(math.sqrt(2.0) * l_k * sigma + math.sqrt(rho))
            - math.log(math.sqrt(rho))
            + 1.0
        )
        return _ceil_log2(inner)

    if regime == "sc":
        if None in (m_k, b_value, sigma, m_psi, c_sigma) or m_k <= 0.0 or m_psi <= 0.0:
            raise InvalidRegimeError(
                "sc prediction needs positive m_k, m_psi plus b_value, sigma, c_sigma"
            )
        b = max(b_value, _TINY_B)
        inner = (
            math.log(sigma / m_k * math.sqrt(c_sigma + 1.0 / sigma))
            + max(0.5 * math.log(1.0 / (2.0 * rho * b)), math.log(3.0 * m_psi))
        ) / math.log(2.0)
        return _ceil_log2(inner)

    raise InvalidRegimeError(f"unknown regime {regime!r}")


def regime_modulus(ctx: SubproblemContext, regime: str) -> float | None:
    """Generalized self-concordance modulus of the subproblem objective."""
    if regime in ("qsc", "qsc_lipschitz"):
        m = max(
            ctx.sigma * ctx.penalty.qsc_modulus * ctx.problem.map.op_norm_bound,
            ctx.problem.f.qsc_modulus,
        )
        return m if m > 0.0 else None
    if regime == "sc":
        m_psi = ctx.geometry.primal.sc_modulus
        m_f = ctx.problem.f.sc_modulus
        if m_psi is None or m_f is None:
            return None
        m = max(m_f, math.sqrt(ctx.sigma) * m_psi)
        return m if m > 0.0 else None
    raise InvalidRegimeError(f"unknown regime {regime!r}")


def predicted_for_context(ctx: SubproblemContext, regime: str, b_value: float) -> int:
    """Assemble the regime's inputs from a context and evaluate the bound."""
    norm_a = ctx.problem.map.op_norm_bound
    if regime == "qsc":
        if not ctx.penalty.smooth:
            raise InvalidRegimeError(
                f"{ctx.penalty.closed_form} carries no C^3 certificate"
            )
        m_k = max(ctx.sigma * ctx.penalty.qsc_modulus * norm_a, ctx.problem.f.qsc_modulus)
        return predicted_newton_steps("qsc", rho=ctx.rho, m_k=m_k, b_value=b_value)
    if regime == "qsc_lipschitz":
        beta = ctx.penalty.lipschitz_modulus
        l_f = ctx.problem.f.lipschitz_modulus
        if beta is None:
            raise InvalidRegimeError(
                f"{ctx.penalty.closed_form} is not Lipschitz smooth"
            )
        if l_f is None:
            raise InvalidRegimeError("objective carries no Lipschitz modulus")
        l_k = l_f + beta * ctx.sigma * norm_a**2 + 1.0 / ctx.sigma
        return predicted_newton_steps(
            "qsc_lipschitz", rho=ctx.rho, l_k=l_k, sigma=ctx.sigma
        )
    if regime == "sc":
        m_k = regime_modulus(ctx, "sc")
        m_psi = ctx.geometry.primal.sc_modulus
        if m_k is None or not m_psi:
            raise InvalidRegimeError("sc prediction needs a self-concordant geometry")
        if ctx.problem.f.variant != "quadratic":
            raise InvalidRegimeError("sc curvature bound is available for quadratics")
        c_sigma = ctx.sigma * norm_a**2 + ctx.problem.f.lipschitz_modulus
        return predicted_newton_steps(
            "sc",
            rho=ctx.rho,
            m_k=m_k,
            b_value=b_value,
            sigma=ctx.sigma,
            m_psi=m_psi,
            c_sigma=c_sigma,
        )
    raise InvalidRegimeError(f"unknown regime {regime!r}")
