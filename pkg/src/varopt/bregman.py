"""Mirror maps, Bregman divergences and convex duality.

Every optimizer in this library measures distance through a Bregman
divergence D_h(y, x) = h(y) - h(x) - <grad h(x), y - x> induced by a
strictly convex reference function h.  Two reference maps ship built in:

* quadratic: h(x) = 1/2 x' M x for a symmetric positive-definite M
  (default M = I), which reduces every mirror update to plain SGD-style
  arithmetic;
* negative entropy: h(x) = sum_i x_i log x_i on the open positive
  orthant, which exercises genuinely nonlinear mirror updates.

User-supplied maps may omit the dual gradient, in which case it is
recovered by damped Newton inversion of grad h.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "MirrorMap",
    "DomainError",
    "NumericalError",
    "quadratic_map",
    "entropy_map",
    "custom_map",
    "divergence",
    "grad_dual",
    "dual_divergence_check",
]


class DomainError(ValueError):
    """Input lies outside the domain of the mirror map."""


class NumericalError(RuntimeError):
    """An iterative numerical procedure failed to converge."""


_NEWTON_MAX_ITER = 100
_NEWTON_TOL = 1e-10


@dataclass(frozen=True)
class MirrorMap:
    """A strictly convex C^2 reference function with its derivatives.

    mu and lip are the declared strong-convexity and gradient-Lipschitz
    constants; they are inputs (spot-checked in the tests), never
    estimated from data.
    """

    name: str
    h: Callable[[np.ndarray], float]
    grad_h: Callable[[np.ndarray], np.ndarray]
    hess_h: Callable[[np.ndarray], np.ndarray]
    mu: float
    lip: float
    grad_h_dual: Optional[Callable[[np.ndarray], np.ndarray]] = None
    in_domain: Callable[[np.ndarray], bool] = field(default=lambda x: True)

    def __post_init__(self):
        if not (self.mu > 0):
            raise ValueError("strong-convexity constant mu must be > 0")
        if self.lip < self.mu:
            raise ValueError("Lipschitz constant must satisfy lip >= mu")

    def check_domain(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)) or not self.in_domain(x):
            raise DomainError(
                f"point outside the domain of mirror map {self.name!r}: {x!r}"
            )


def quadratic_map(m_diag=None, m_full=None) -> MirrorMap:
    """h(x) = 1/2 x' M x with M symmetric positive definite.

    Pass either a diagonal (1-d array) or a full matrix; the default is
    the identity, which makes grad h the identity map.
    """
    if m_diag is not None and m_full is not None:
        raise ValueError("pass at most one of m_diag, m_full")
    if m_full is not None:
        m = np.asarray(m_full, dtype=float)
        m = 0.5 * (m + m.T)
        eigs = np.linalg.eigvalsh(m)
        if eigs.min() <= 0:
            raise ValueError("M must be positive definite")
        m_inv = np.linalg.inv(m)
        return MirrorMap(
            name="quadratic",
            h=lambda x: 0.5 * float(x @ m @ x),
            grad_h=lambda x: m @ x,
            grad_h_dual=lambda z: m_inv @ z,
            hess_h=lambda x: m,
            mu=float(eigs.min()),
            lip=float(eigs.max()),
        )
    if m_diag is None:
        # Identity M: mirror steps reduce to plain gradient steps.
        return MirrorMap(
            name="quadratic",
            h=lambda x: 0.5 * float(x @ x),
            grad_h=lambda x: np.array(x, dtype=float),
            grad_h_dual=lambda z: np.array(z, dtype=float),
            hess_h=lambda x: np.eye(len(np.atleast_1d(x))),
            mu=1.0,
            lip=1.0,
        )
    d = np.asarray(m_diag, dtype=float)
    if np.any(d <= 0):
        raise ValueError("diagonal of M must be positive")
    return MirrorMap(
        name="quadratic",
        h=lambda x: 0.5 * float(x @ (d * x)),
        grad_h=lambda x: d * x,
        grad_h_dual=lambda z: z / d,
        hess_h=lambda x: np.diag(d),
        mu=float(d.min()),
        lip=float(d.max()),
    )


def entropy_map(lower: float = 0.05, upper: float = 20.0) -> MirrorMap:
    """Negative entropy h(x) = sum_i x_i log x_i on the positive orthant.

    grad h(x) = 1 + log x and grad h*(z) = exp(z - 1) componentwise.  The
    curvature constants only hold on a compact box [lower, upper]^d of
    the open orthant (hess h(x) = diag(1/x)); the box is declared at
    construction and the constants are mu = 1/upper, lip = 1/lower.
    Points outside the orthant are rejected, never clamped.
    """
    if not (0 < lower < upper):
        raise ValueError("need 0 < lower < upper")

    def h(x):
        return float(np.sum(x * np.log(x)))

    return MirrorMap(
        name="entropy",
        h=h,
        grad_h=lambda x: 1.0 + np.log(x),
        grad_h_dual=lambda z: np.exp(z - 1.0),
        hess_h=lambda x: np.diag(1.0 / x),
        mu=1.0 / upper,
        lip=1.0 / lower,
        in_domain=lambda x: bool(np.all(x > 0)),
    )


def custom_map(
    name,
    h,
    grad_h,
    hess_h,
    mu,
    lip,
    grad_h_dual=None,
    in_domain=lambda x: True,
) -> MirrorMap:
    """Wrap user-supplied callables.  Omitting grad_h_dual requests
    damped-Newton inversion of grad_h inside grad_dual."""
    return MirrorMap(
        name=name,
        h=h,
        grad_h=grad_h,
        hess_h=hess_h,
        mu=mu,
        lip=lip,
        grad_h_dual=grad_h_dual,
        in_domain=in_domain,
    )


def divergence(mirror: MirrorMap, y, x) -> float:
    """D_h(y, x) = h(y) - h(x) - <grad h(x), y - x>.  Non-negative."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    mirror.check_domain(x)
    mirror.check_domain(y)
    return float(mirror.h(y) - mirror.h(x) - mirror.grad_h(x) @ (y - x))


def grad_dual(mirror: MirrorMap, z) -> np.ndarray:
    """Evaluate grad h*(z), the inverse of grad h, at a dual point z.

    Built-in maps use their closed forms.  Maps without a closed-form
    dual are inverted by damped Newton on grad h(x) - z, which raises
    NumericalError with the achieved residual on non-convergence.
    """
    z = np.asarray(z, dtype=float)
    if mirror.grad_h_dual is not None:
        return np.asarray(mirror.grad_h_dual(z), dtype=float)
    return _newton_invert(mirror, z)


def _newton_invert(mirror: MirrorMap, z: np.ndarray) -> np.ndarray:
    x = np.zeros_like(z)
    if not mirror.in_domain(x):
        x = np.ones_like(z)
    tol = _NEWTON_TOL * (1.0 + float(np.linalg.norm(z)))
    for _ in range(_NEWTON_MAX_ITER):
        resid = mirror.grad_h(x) - z
        rnorm = float(np.linalg.norm(resid))
        if rnorm <= tol:
            return x
        step = np.linalg.solve(np.atleast_2d(mirror.hess_h(x)), resid)
        # Damped update: halve until the trial point stays in the domain
        # and does not increase the residual.
        lam = 1.0
        for _ in range(50):
            trial = x - lam * step
            if mirror.in_domain(trial):
                tnorm = float(np.linalg.norm(mirror.grad_h(trial) - z))
                if tnorm < rnorm:
                    x = trial
                    break
            lam *= 0.5
        else:
            break
    rnorm = float(np.linalg.norm(mirror.grad_h(x) - z))
    if rnorm <= tol:
        return x
    raise NumericalError(
        f"Newton inversion of grad h did not converge (residual {rnorm:.3e})"
    )


def _dual_divergence(mirror: MirrorMap, z1, z2) -> float:
    """D_{h*}(z1, z2) through the dual gradient: h*(z) = <z, x> - h(x)
    with x = grad h*(z)."""
    x1 = grad_dual(mirror, z1)
    x2 = grad_dual(mirror, z2)
    hstar1 = float(z1 @ x1) - mirror.h(x1)
    hstar2 = float(z2 @ x2) - mirror.h(x2)
    return hstar1 - hstar2 - float(x2 @ (np.asarray(z1) - np.asarray(z2)))


def dual_divergence_check(mirror: MirrorMap, x, y) -> float:
    """Residual of the duality identity D_h(x, y) = D_{h*}(grad h(y), grad h(x))
    (convex duality swaps the arguments).

    Returns |lhs - rhs|; at most ~1e-8 for the built-in maps.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lhs = divergence(mirror, x, y)
    rhs = _dual_divergence(mirror, mirror.grad_h(y), mirror.grad_h(x))
    return abs(lhs - rhs)
