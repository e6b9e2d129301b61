"""Legendre distance-generating functions and the Bregman-distance calculus.

Every geometry in the catalog is separable, so gradients and Hessians are
computed coordinate-wise and Hessians are diagonal.  Values are extended-real:
``+inf`` outside the domain, never a large finite sentinel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError, DomainError

__all__ = [
    "LegendreFunction",
    "BregmanGeometry",
    "energy",
    "von_neumann",
    "burg",
    "spence",
    "box_barrier",
    "product",
    "bregman_distance",
    "dual_bregman_distance",
    "dilog",
]

PI2_6 = math.pi**2 / 6.0

# Componentwise values closer to the boundary than this are treated as
# boundary points (gradient undefined).  The guard only has to keep 1/t and
# 1/t**2 finite; a larger margin would reject the tiny-but-positive dual
# iterates produced by multiplicative multiplier updates.
BOUNDARY_MARGIN = 1e-150


def dilog(x: float) -> float:
    """Real dilogarithm Li2(x) = sum_k x**k / k**2 for x <= 1.

    The series is evaluated directly on [-0.5, 0.5]; the reflection,
    Landen and inversion identities map the remaining arguments there.
    """
    if x > 1.0:
        raise DomainError(f"dilog defined for x <= 1, got {x}")
    if x == 1.0:
        return PI2_6
    if x == 0.0:
        return 0.0
    if x > 0.5:
        return PI2_6 - math.log(x) * math.log1p(-x) - dilog(1.0 - x)
    if x < -1.0:
        return -PI2_6 - 0.5 * math.log(-x) ** 2 - dilog(1.0 / x)
    if x < -0.5:
        return -dilog(x / (x - 1.0)) - 0.5 * math.log1p(-x) ** 2
    total = x
    term = x
    k = 1
    while True:
        k += 1
        term *= x
        inc = term / (k * k)
        total += inc
        if abs(inc) < 1e-18 * max(1.0, abs(total)) or k > 200:
            return total


def _dilog_sum(values: np.ndarray) -> float:
    return float(sum(dilog(float(v)) for v in values))


def _excess_log(t: np.ndarray) -> np.ndarray:
    """t - log1p(t), series-evaluated near 0 to avoid cancellation."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    small = np.abs(t) < 1e-4
    ts = t[small]
    out[small] = ts * ts * (0.5 + ts * (-1.0 / 3.0 + ts * 0.25))
    tb = t[~small]
    out[~small] = tb - np.log1p(tb)
    return out


def _kl_terms(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """a ln(a/b) - a + b componentwise, stable for a close to b; a >= 0, b > 0."""
    out = np.empty_like(b)
    zero = a <= 0.0
    out[zero] = b[zero]
    az, bz = a[~zero], b[~zero]
    r = (az - bz) / bz
    small = np.abs(r) < 1e-4
    rs = r[small]
    # b h(r) with h(r) = (1+r) log1p(r) - r = r^2/2 - r^3/6 + r^4/12 - ...
    h = np.empty_like(r)
    h[small] = rs * rs * (0.5 + rs * (-1.0 / 6.0 + rs / 12.0))
    # far from the cancellation zone the raw form is exact; log differences
    # keep it finite for denormal ratios
    ab, bb = az[~small], bz[~small]
    h[~small] = (ab * (np.log(ab) - np.log(bb)) - ab + bb) / bb
    out[~zero] = bz * h
    return out


def _softplus(t: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, t)


def _as_vector(z, dim: int) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.ndim != 1 or z.size != dim:
        raise DimensionError(f"expected vector of length {dim}, got shape {z.shape}")
    return z


class LegendreFunction:
    """Base class for the catalog; subclasses fill in the scalar calculus.

    The public surface is ``value``, ``grad``, ``conj_grad``, ``conj_value``,
    ``hess_diag``/``hess`` and the domain predicates.  ``grad`` and
    ``conj_grad`` are mutually inverse bijections between the domain
    interiors; ``hess_diag`` of conjugate pairs are reciprocal.
    """

    kind: str = "abstract"

    def __init__(self, dim: int):
        if dim < 1:
            raise DimensionError(f"dimension must be positive, got {dim}")
        self.dim = int(dim)

    # -- domain -------------------------------------------------------------
    def in_domain(self, z) -> bool:
        raise NotImplementedError

    def in_interior(self, z) -> bool:
        raise NotImplementedError

    def conj_in_interior(self, t) -> bool:
        """Membership of t in int dom of the convex conjugate."""
        raise NotImplementedError

    # -- calculus -----------------------------------------------------------
    def value(self, z) -> float:
        raise NotImplementedError

    def grad(self, z) -> np.ndarray:
        raise NotImplementedError

    def conj_grad(self, t) -> np.ndarray:
        raise NotImplementedError

    def conj_value(self, t) -> float:
        """Conjugate value via the Fenchel identity at the maximizer."""
        t = _as_vector(t, self.dim)
        z = self.conj_grad(t)
        return float(t @ z) - self.value(z)

    def hess_diag(self, z) -> np.ndarray:
        raise NotImplementedError

    def hess(self, z) -> np.ndarray:
        return np.diag(self.hess_diag(z))

    def conj_hess_diag(self, t) -> np.ndarray:
        """Hessian diagonal of the conjugate; the default composes through
        the inverse gradient map (conjugate pairs have reciprocal Hessians)."""
        return 1.0 / self.hess_diag(self.conj_grad(t))

    # SC constant on the domain interior; None when no global constant exists.
    sc_modulus: float | None = None

    def distance(self, z1: np.ndarray, z2: np.ndarray) -> float:
        """Raw Bregman distance for interior arguments; subclasses override
        with cancellation-free forms (the generic value difference loses all
        accuracy once z1 and z2 agree to ~8 digits)."""
        return self.value(z1) - self.value(z2) - float(self.grad(z2) @ (z1 - z2))

    def _require_interior(self, z) -> np.ndarray:
        z = _as_vector(z, self.dim)
        if not self.in_interior(z):
            raise DomainError(f"{self.kind}: point not in the domain interior")
        return z

    def _require_conj_interior(self, t) -> np.ndarray:
        t = _as_vector(t, self.dim)
        if not self.conj_in_interior(t):
            raise DomainError(f"{self.kind}: point not in int dom of conjugate")
        return t

    def __repr__(self) -> str:
        return f"{type(self).__name__}(dim={self.dim})"


class Energy(LegendreFunction):
    """phi(z) = ||z||^2 / 2; the Euclidean geometry."""

    kind = "energy"
    sc_modulus = 0.0

    def in_domain(self, z) -> bool:
        return True

    in_interior = in_domain

    def conj_in_interior(self, t) -> bool:
        return True

    def value(self, z) -> float:
        z = _as_vector(z, self.dim)
        return 0.5 * float(z @ z)

    def grad(self, z) -> np.ndarray:
        return _as_vector(z, self.dim).copy()

    def conj_grad(self, t) -> np.ndarray:
        return _as_vector(t, self.dim).copy()

    def conj_value(self, t) -> float:
        t = _as_vector(t, self.dim)
        return 0.5 * float(t @ t)

    def hess_diag(self, z) -> np.ndarray:
        _as_vector(z, self.dim)
        return np.ones(self.dim)

    def conj_hess_diag(self, t) -> np.ndarray:
        _as_vector(t, self.dim)
        return np.ones(self.dim)

    def distance(self, z1, z2) -> float:
        d = _as_vector(z1, self.dim) - _as_vector(z2, self.dim)
        return 0.5 * float(d @ d)


class VonNeumann(LegendreFunction):
    """phi(t) = t ln t - t on [0, inf); D_phi is the Kullback-Leibler divergence."""

    kind = "von_neumann"

    def in_domain(self, z) -> bool:
        return bool(np.all(_as_vector(z, self.dim) >= 0.0))

    def in_interior(self, z) -> bool:
        return bool(np.all(_as_vector(z, self.dim) > BOUNDARY_MARGIN))

    def conj_in_interior(self, t) -> bool:
        _as_vector(t, self.dim)
        return True

    def value(self, z) -> float:
        z = _as_vector(z, self.dim)
        if not self.in_domain(z):
            return math.inf
        pos = z > 0.0
        out = -float(z.sum())
        out += float(np.sum(z[pos] * np.log(z[pos])))  # 0 ln 0 := 0
        return out

    def grad(self, z) -> np.ndarray:
        return np.log(self._require_interior(z))

    def conj_grad(self, t) -> np.ndarray:
        return np.exp(_as_vector(t, self.dim))

    def conj_value(self, t) -> float:
        return float(np.sum(np.exp(_as_vector(t, self.dim))))

    def hess_diag(self, z) -> np.ndarray:
        return 1.0 / self._require_interior(z)

    def conj_hess_diag(self, t) -> np.ndarray:
        return np.exp(_as_vector(t, self.dim))

    def distance(self, z1, z2) -> float:
        z1 = _as_vector(z1, self.dim)
        z2 = _as_vector(z2, self.dim)
        return float(np.sum(_kl_terms(z1, z2)))


class Burg(LegendreFunction):
    """phi(t) = -ln t on (0, inf); D_phi is the Itakura-Saito divergence."""

    kind = "burg"
    sc_modulus = 1.0

    def in_domain(self, z) -> bool:
        return bool(np.all(_as_vector(z, self.dim) > 0.0))

    def in_interior(self, z) -> bool:
        return bool(np.all(_as_vector(z, self.dim) > BOUNDARY_MARGIN))

    def conj_in_interior(self, t) -> bool:
        return bool(np.all(_as_vector(t, self.dim) < -BOUNDARY_MARGIN))

    def value(self, z) -> float:
        z = _as_vector(z, self.dim)
        if not self.in_domain(z):
            return math.inf
        return -float(np.sum(np.log(z)))

    def grad(self, z) -> np.ndarray:
        return -1.0 / self._require_interior(z)

    def conj_grad(self, t) -> np.ndarray:
        return -1.0 / self._require_conj_interior(t)

    def conj_value(self, t) -> float:
        t = self._require_conj_interior(t)
        return float(np.sum(-1.0 - np.log(-t)))

    def hess_diag(self, z) -> np.ndarray:
        z = self._require_interior(z)
        return 1.0 / (z * z)

    def conj_hess_diag(self, t) -> np.ndarray:
        t = self._require_conj_interior(t)
        return 1.0 / (t * t)

    def distance(self, z1, z2) -> float:
        z1 = _as_vector(z1, self.dim)
        z2 = _as_vector(z2, self.dim)
        return float(np.sum(_excess_log((z1 - z2) / z2)))


class Spence(LegendreFunction):
    """phi(t) = integral of ln(exp(tau) - 1) on [0, t], with dom phi = [0, inf).

    The derivative pair is phi'(t) = ln(exp(t) - 1) and its inverse the
    softplus map t* -> ln(1 + exp(t*)).  Values go through the dilogarithm:
    phi(t) = t^2/2 + Li2(exp(-t)) - pi^2/6 and phi*(t*) = -Li2(-exp(t*)).
    """

    kind = "spence"

    def in_domain(self, z) -> bool:
        return bool(np.all(_as_vector(z, self.dim) >= 0.0))

    def in_interior(self, z) -> bool:
        return bool(np.all(_as_vector(z, self.dim) > BOUNDARY_MARGIN))

    def conj_in_interior(self, t) -> bool:
        _as_vector(t, self.dim)
        return True

    def value(self, z) -> float:
        z = _as_vector(z, self.dim)
        if not self.in_domain(z):
            return math.inf
        return 0.5 * float(z @ z) + _dilog_sum(np.exp(-z)) - self.dim * PI2_6

    def grad(self, z) -> np.ndarray:
        z = self._require_interior(z)
        small = z < 30.0
        out = np.empty_like(z)
        out[small] = np.log(np.expm1(z[small]))
        out[~small] = z[~small] + np.log1p(-np.exp(-z[~small]))
        return out

    def conj_grad(self, t) -> np.ndarray:
        return _softplus(_as_vector(t, self.dim))

    def conj_value(self, t) -> float:
        t = _as_vector(t, self.dim)
        # -Li2(-exp(t)); fold the inversion identity in for positive t so the
        # series argument stays in (-1, 0].
        total = 0.0
        for ti in t:
            ti = float(ti)
            if ti <= 0.0:
                total += -dilog(-math.exp(ti))
            else:
                total += PI2_6 + 0.5 * ti * ti + dilog(-math.exp(-ti))
        return total

    def hess_diag(self, z) -> np.ndarray:
        z = self._require_interior(z)
        return 1.0 / (-np.expm1(-z))

    def conj_hess_diag(self, t) -> np.ndarray:
        t = _as_vector(t, self.dim)
        return 0.5 * (1.0 + np.tanh(0.5 * t))  # sigmoid

    def distance(self, z1, z2) -> float:
        z1 = _as_vector(z1, self.dim)
        z2 = _as_vector(z2, self.dim)
        total = 0.0
        for a, b in zip(z1, z2):
            delta = a - b
            if abs(delta) <= 1e-5 * min(a, b):
                # two-term Taylor around b; the exact value difference would
                # cancel to noise at this separation
                h2 = 1.0 / (-math.expm1(-b))
                h3 = -math.exp(-b) * h2 * h2
                total += 0.5 * h2 * delta * delta + h3 * delta**3 / 6.0
            else:
                total += (
                    0.5 * (a * a - b * b)
                    + dilog(math.exp(-a))
                    - dilog(math.exp(-b))
                    - self._grad_scalar(b) * delta
                )
        return total

    @staticmethod
    def _grad_scalar(t: float) -> float:
        if t < 30.0:
            return math.log(math.expm1(t))
        return t + math.log1p(-math.exp(-t))


class BoxBarrier(LegendreFunction):
    """phi(z) = ||z||^2/2 - sum ln(u - z) - sum ln(z - l) on the open box (l, u).

    Legendre and self-concordant with constant 1; the conjugate gradient has
    no closed form and is computed by a safeguarded per-coordinate Newton
    bisection on the strictly increasing map phi'.
    """

    kind = "box_barrier"
    sc_modulus = 1.0

    def __init__(self, lower, upper):
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise DimensionError("box bounds must be 1-D vectors of equal length")
        if not np.all(np.isfinite(lower)) or not np.all(np.isfinite(upper)):
            raise DomainError("box barrier requires finite bounds")
        if not np.all(lower < upper):
            raise DomainError("box barrier requires l < u componentwise")
        super().__init__(lower.size)
        self.lower = lower
        self.upper = upper
        self.lower.flags.writeable = False
        self.upper.flags.writeable = False

    def in_domain(self, z) -> bool:
        z = _as_vector(z, self.dim)
        return bool(np.all(z > self.lower) and np.all(z < self.upper))

    def in_interior(self, z) -> bool:
        z = _as_vector(z, self.dim)
        return bool(
            np.all(z - self.lower > BOUNDARY_MARGIN)
            and np.all(self.upper - z > BOUNDARY_MARGIN)
        )

    def conj_in_interior(self, t) -> bool:
        _as_vector(t, self.dim)
        return True

    def value(self, z) -> float:
        z = _as_vector(z, self.dim)
        if not self.in_domain(z):
            return math.inf
        return 0.5 * float(z @ z) - float(
            np.sum(np.log(self.upper - z)) + np.sum(np.log(z - self.lower))
        )

    def grad(self, z) -> np.ndarray:
        z = self._require_interior(z)
        return z + 1.0 / (self.upper - z) - 1.0 / (z - self.lower)

    def hess_diag(self, z) -> np.ndarray:
        z = self._require_interior(z)
        return 1.0 + 1.0 / (self.upper - z) ** 2 + 1.0 / (z - self.lower) ** 2

    def conj_grad(self, t) -> np.ndarray:
        t = _as_vector(t, self.dim)
        out = np.empty(self.dim)
        for i in range(self.dim):
            out[i] = self._invert_scalar(float(t[i]), self.lower[i], self.upper[i])
        return out

    def distance(self, z1, z2) -> float:
        z1 = _as_vector(z1, self.dim)
        z2 = _as_vector(z2, self.dim)
        delta = z1 - z2
        upper_part = _excess_log(-delta / (self.upper - z2))
        lower_part = _excess_log(delta / (z2 - self.lower))
        return 0.5 * float(delta @ delta) + float(np.sum(upper_part + lower_part))

    @staticmethod
    def _invert_scalar(target: float, lo: float, hi: float) -> float:
        """Solve x + 1/(hi-x) - 1/(x-lo) = target for x in (lo, hi).

        Safeguarded Newton with a shrinking bracket; the residual tolerance is
        relative to the target since the map's scale is unbounded near the
        bounds.
        """

        def phi_prime(x):
            return x + 1.0 / (hi - x) - 1.0 / (x - lo)

        a, b = lo, hi
        width = hi - lo
        # asymptotic inverse near the bounds: x ~ hi - 1/t resp. lo + 1/(-t);
        # a near-root start keeps the Newton phase short for extreme targets
        x = 0.5 * (lo + hi)
        up = target - hi + 1.0 / width
        dn = lo + 1.0 / width - target
        if up > 4.0 / width:
            x = hi - 1.0 / up
        elif dn > 4.0 / width:
            x = lo + 1.0 / dn
        tol = 1e-12 * (1.0 + abs(target))
        for _ in range(120):
            fx = phi_prime(x) - target
            if abs(fx) <= tol:
                return x
            if fx > 0.0:
                b = x
            else:
                a = x
            h = 1.0 + 1.0 / (hi - x) ** 2 + 1.0 / (x - lo) ** 2
            step = x - fx / h
            x_new = step if a < step < b else 0.5 * (a + b)
            if abs(x_new - x) <= 1e-16 * max(1.0, abs(x)) or b - a <= 1e-17 * max(
                1.0, abs(x)
            ):
                return x_new
            x = x_new
        return x


class Product(LegendreFunction):
    """Coordinate-block product of catalog functions; evaluations decompose."""

    kind = "product"

    def __init__(self, blocks):
        blocks = list(blocks)
        if not blocks:
            raise DimensionError("product requires at least one block")
        super().__init__(sum(fn.dim for fn in blocks))
        self.blocks = tuple(blocks)
        offsets = np.cumsum([0] + [fn.dim for fn in blocks])
        self._slices = [slice(offsets[i], offsets[i + 1]) for i in range(len(blocks))]
        mods = [fn.sc_modulus for fn in blocks]
        self.sc_modulus = None if any(m is None for m in mods) else max(mods)

    def _split(self, z):
        z = _as_vector(z, self.dim)
        return [(fn, z[s]) for fn, s in zip(self.blocks, self._slices)]

    def in_domain(self, z) -> bool:
        return all(fn.in_domain(part) for fn, part in self._split(z))

    def in_interior(self, z) -> bool:
        return all(fn.in_interior(part) for fn, part in self._split(z))

    def conj_in_interior(self, t) -> bool:
        return all(fn.conj_in_interior(part) for fn, part in self._split(t))

    def value(self, z) -> float:
        return float(sum(fn.value(part) for fn, part in self._split(z)))

    def grad(self, z) -> np.ndarray:
        return np.concatenate([fn.grad(part) for fn, part in self._split(z)])

    def conj_grad(self, t) -> np.ndarray:
        return np.concatenate([fn.conj_grad(part) for fn, part in self._split(t)])

    def conj_value(self, t) -> float:
        return float(sum(fn.conj_value(part) for fn, part in self._split(t)))

    def hess_diag(self, z) -> np.ndarray:
        return np.concatenate([fn.hess_diag(part) for fn, part in self._split(z)])

    def conj_hess_diag(self, t) -> np.ndarray:
        return np.concatenate([fn.conj_hess_diag(part) for fn, part in self._split(t)])

    def distance(self, z1, z2) -> float:
        parts1 = self._split(z1)
        parts2 = self._split(z2)
        return float(
            sum(fn.distance(p1, p2) for (fn, p1), (_, p2) in zip(parts1, parts2))
        )


def energy(dim: int) -> Energy:
    return Energy(dim)


def von_neumann(dim: int) -> VonNeumann:
    return VonNeumann(dim)


def burg(dim: int) -> Burg:
    return Burg(dim)


def spence(dim: int) -> Spence:
    return Spence(dim)


def box_barrier(lower, upper) -> BoxBarrier:
    return BoxBarrier(lower, upper)


def product(blocks) -> Product:
    return Product(blocks)


def bregman_distance(fn: LegendreFunction, z1, z2) -> float:
    """D(z1, z2) = phi(z1) - phi(z2) - <grad phi(z2), z1 - z2>.

    Extended-real: +inf unless z1 is in the domain and z2 in its interior;
    always nonnegative, zero exactly when z1 == z2.
    """
    z1 = _as_vector(z1, fn.dim)
    z2 = _as_vector(z2, fn.dim)
    if not fn.in_domain(z1) or not fn.in_interior(z2):
        return math.inf
    if np.array_equal(z1, z2):
        return 0.0
    return max(fn.distance(z1, z2), 0.0)


def dual_bregman_distance(fn: LegendreFunction, t1, t2) -> float:
    """Bregman distance generated by the conjugate of ``fn``."""
    t1 = _as_vector(t1, fn.dim)
    t2 = _as_vector(t2, fn.dim)
    if not fn.conj_in_interior(t1) or not fn.conj_in_interior(t2):
        return math.inf
    if np.array_equal(t1, t2):
        return 0.0
    d = fn.conj_value(t1) - fn.conj_value(t2) - float(fn.conj_grad(t2) @ (t1 - t2))
    return max(d, 0.0)


@dataclass(frozen=True)
class BregmanGeometry:
    """Primal/dual pair of Legendre functions over the decision and multiplier spaces."""

    primal: LegendreFunction
    dual: LegendreFunction

    def joint(self) -> Product:
        """The separable function on the product space, for primal-dual distances."""
        return Product([self.primal, self.dual])

    def joint_distance(self, z1_x, z1_y, z2_x, z2_y) -> float:
        return bregman_distance(self.primal, z1_x, z2_x) + bregman_distance(
            self.dual, z1_y, z2_y
        )
