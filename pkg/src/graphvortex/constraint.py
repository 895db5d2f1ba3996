"""Constant-shift constraint for the reduced functional.

For a zero-mean multi-field ``w`` the constants ``c`` with ``t = e^c`` solve,
per component ``i``, the quadratic

    t_i^2 R_i^2 alpha_ii a_ii - t_i B_i(t) + b_i / lam = 0,
    B_i(t) = R_i a_i / P_i + sum_{j != i} t_j R_i R_j alpha_ij a_ij,

whose coefficients are the moments ``a_i = int e^{u0_i + w_i}`` and
``a_ij = int e^{u0_i + u0_j + w_i + w_j}``. The larger root defines a map
``t -> f(t)`` that is nondecreasing in every entry, so Picard iteration from
``t = 0`` climbs to the minimal fixed point.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .cartan import CartanSystem, VortexData
from .errors import Diverged, MaxIter, NotAdmissible, NotPositiveDefinite, NumericRange
from .graph import WeightedGraph

__all__ = [
    "Moments",
    "ConstraintSolution",
    "moments",
    "qtilde",
    "admissible",
    "admissibility_margins",
    "plus_root_map",
    "solve_t",
]

logger = logging.getLogger(__name__)

EXP_LIMIT = 350.0


@dataclass(frozen=True, eq=False)
class Moments:
    a: np.ndarray
    aij: np.ndarray
    volume: float

    def check(self, rtol=1e-12) -> bool:
        """Positivity, symmetry, and the two Cauchy-Schwarz bounds."""
        a, aij = self.a, self.aij
        diag = np.diag(aij)
        return bool(
            np.all(a > 0)
            and np.all(aij > 0)
            and np.allclose(aij, aij.T, rtol=1e-14, atol=0)
            and np.all(aij**2 <= np.outer(diag, diag) * (1 + rtol))
            and np.all(a <= np.sqrt(self.volume * diag) * (1 + rtol))
        )


@dataclass(frozen=True, eq=False)
class ConstraintSolution:
    t: np.ndarray
    c: np.ndarray
    quad_residual: float
    iterations: int
    method: str = "picard"
    history: list = field(default=None, repr=False)


def moments(g: WeightedGraph, u0, w) -> Moments:
    """Exponential moments of ``u0 + w``.

    ``w`` must be zero-mean per component. Raises :class:`NumericRange` if
    ``|u0 + w|`` exceeds 350, past which ``a_ij`` (which squares the
    exponential) overflows.
    """
    u0 = np.atleast_2d(g.check_field(u0))
    w = np.atleast_2d(g.check_field(w))
    scale = max(1.0, float(np.abs(w).max())) if w.size else 1.0
    if np.any(np.abs(w @ g.mu) > 1e-9 * scale * g.volume):
        raise ValueError("w must have zero mean in every component")
    x = u0 + w
    if np.any(np.abs(x) > EXP_LIMIT):
        raise NumericRange(f"|u0 + w| reaches {np.abs(x).max():.4g}; exponentials unsafe")
    E = np.exp(x)
    a = E @ g.mu
    aij = (E * g.mu) @ E.T
    aij = 0.5 * (aij + aij.T)
    return Moments(a=a, aij=aij, volume=g.volume)


def qtilde(sys: CartanSystem, m: Moments) -> np.ndarray:
    """``R Stilde R`` where ``Stilde`` is ``S`` weighted entrywise by ``a_ij``."""
    Qt = sys.Q * m.aij
    try:
        np.linalg.cholesky(Qt)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("Qtilde is not positive definite; moments are inconsistent") from exc
    return Qt


def admissibility_margins(sys: CartanSystem, vort: VortexData, m: Moments, lam: float) -> np.ndarray:
    """``a_i^2 / a_ii - 4 alpha_ii P_i^2 b_i / lam`` per component."""
    diag = np.diag(m.aij)
    return m.a**2 / diag - 4.0 * np.diag(sys.S) * sys.P**2 * vort.b / lam


def admissible(sys: CartanSystem, vort: VortexData, m: Moments, lam: float):
    """Return ``(ok, margins)``; ``ok`` iff every margin is nonnegative."""
    margins = admissibility_margins(sys, vort, m, lam)
    return bool(np.all(margins >= 0)), margins


class _Quadratic:
    """Coefficients of the per-component quadratics for fixed moments."""

    def __init__(self, sys, vort, m, lam, eps=1.0):
        R, P = sys.R, sys.P
        alpha = sys.alpha
        self.lead = R**2 * np.diag(alpha) * np.diag(m.aij)
        self.base = R * m.a / P
        coup = np.outer(R, R) * alpha * m.aij
        np.fill_diagonal(coup, 0.0)
        self.coup = coup
        self.const = eps * vort.b / lam
        self.disc0 = 4.0 * self.lead * self.const

    def B(self, t):
        return self.base + self.coup @ t

    def f(self, t):
        B = self.B(t)
        D = B**2 - self.disc0
        # rounding slack at the admissibility boundary
        slack = 1e-12 * B**2
        if np.any(D < -slack):
            raise NotAdmissible(f"negative discriminant {D} at t={t}")
        return (B + np.sqrt(np.maximum(D, 0.0))) / (2.0 * self.lead), D

    def residual(self, t):
        return np.abs(self.lead * t**2 - t * self.B(t) + self.const).max()

    def jacobian(self, t):
        """Jacobian of ``F(t) = t - f(t)``."""
        B = self.B(t)
        D = np.maximum(B**2 - self.disc0, 1e-300)
        dfdB = (1.0 + B / np.sqrt(D)) / (2.0 * self.lead)
        return np.eye(len(t)) - dfdB[:, None] * self.coup


def plus_root_map(sys, vort, m, lam, t, eps=1.0) -> np.ndarray:
    """One application of the larger-root map ``f(eps, t)``."""
    return _Quadratic(sys, vort, m, lam, eps).f(np.asarray(t, dtype=float))[0]


def solve_t(
    sys: CartanSystem,
    vort: VortexData,
    m: Moments,
    lam: float,
    tol: float = 1e-12,
    max_iter: int = 10000,
    eps: float = 1.0,
    record: bool = False,
) -> ConstraintSolution:
    """Minimal fixed point ``t`` of the larger-root map, and ``c = log t``.

    ``eps`` scales ``b`` (``eps = 0`` gives the linear problem
    ``Qtilde t = P^-1 R a``). Picard iteration from 0 is used; if it stalls
    for 50 steps (relative progress below 1e-15, or steps shrinking by less
    than 1%) a damped Newton iteration on ``t - f(t)`` takes over.

    Raises
    ------
    NotAdmissible
        If the moments violate the discriminant condition.
    Diverged
        If an iterate exceeds ``10 |V| / min a_i``.
    MaxIter
        If neither iteration meets ``tol`` in ``max_iter`` steps.
    """
    ok, margins = admissible(sys, vort, m, lam / eps if eps > 0 else np.inf)
    if not ok:
        scale = m.a**2 / np.diag(m.aij)
        if np.any(margins < -1e-13 * scale):
            raise NotAdmissible(f"moments are not admissible: margins {margins}", margins)
    quad = _Quadratic(sys, vort, m, lam, eps)
    bound = 10.0 * m.volume / m.a.min()
    history = [] if record else None

    t = np.zeros(sys.n)
    stall = 0
    prev_step = np.inf
    for k in range(1, max_iter + 1):
        t_new, D = quad.f(t)
        if record:
            history.append((t_new.copy(), D.copy()))
        if np.any(t_new > bound):
            raise Diverged(f"Picard iterate {t_new} exceeded {bound:.4g}", iterations=k)
        step = np.abs(t_new - t).max()
        t = t_new
        if step <= tol:
            return _finish(_polish(t, quad), quad, k, "picard", history)
        # slow or no contraction, or steps lost below rounding of t
        if step >= 0.99 * prev_step or step <= 1e-15 * np.abs(t).max():
            stall += 1
        else:
            stall = 0
        prev_step = step
        if stall >= 50:
            logger.debug("Picard stalled after %d steps; switching to Newton", k)
            return _newton(t, quad, tol, max_iter - k, k, history, bound)
    raise MaxIter(f"constraint iteration did not converge in {max_iter} steps", iterations=max_iter)


def _newton(t, quad, tol, max_iter, start, history, bound):
    for k in range(1, max(max_iter, 1) + 1):
        F = t - quad.f(t)[0]
        delta = np.linalg.solve(quad.jacobian(t), -F)
        s = 1.0
        while s > 1e-10:
            trial = t + s * delta
            try:
                if np.all(trial > 0):
                    F_trial = trial - quad.f(trial)[0]
                    if np.abs(F_trial).max() < np.abs(F).max() or np.abs(delta).max() * s <= tol:
                        break
            except NotAdmissible:
                pass
            s *= 0.5
        t = t + s * delta
        if history is not None:
            history.append((t.copy(), quad.B(t) ** 2 - quad.disc0))
        if np.any(t > bound):
            raise Diverged(f"Newton iterate {t} exceeded {bound:.4g}", iterations=start + k)
        if np.abs(s * delta).max() <= tol:
            return _finish(t, quad, start + k, "newton", history)
    raise MaxIter("Newton fallback did not converge", iterations=start + max_iter)


def _polish(t, quad, steps=3):
    """A few undamped Newton steps, kept only while ``|t - f(t)|`` drops.

    Picard steps shrink like the contraction factor, which can be close to
    one, so a small final step does not mean a small error.
    """
    err = np.abs(t - quad.f(t)[0]).max()
    for _ in range(steps):
        if err == 0.0:
            break
        try:
            trial = t - np.linalg.solve(quad.jacobian(t), t - quad.f(t)[0])
            if not np.all(trial > 0):
                break
            err_trial = np.abs(trial - quad.f(trial)[0]).max()
        except (NotAdmissible, np.linalg.LinAlgError):
            break
        if not err_trial < err:
            break
        t, err = trial, err_trial
    return t


def _finish(t, quad, iterations, method, history):
    return ConstraintSolution(
        t=t,
        c=np.log(t),
        quad_residual=float(quad.residual(t)),
        iterations=iterations,
        method=method,
        history=history,
    )
