"""Scalar (rank-one) vortex equation on a graph.

Solves ``laplacian(u) = lam * e^u (e^u - 1) + 4 pi sum_j delta_{p_j}`` for the
maximal solution by a monotone iteration started at the supersolution
``u = 0``, and brackets the critical coupling below which no solution exists.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import NoConvergence, VortexDataError, VortexError
from .graph import WeightedGraph, integrate
from .poisson import solve_zero_mean

__all__ = [
    "AbelianProblem",
    "AbelianSolution",
    "MonotonicityError",
    "abelian_problem",
    "monotone_solve",
    "critical_lambda",
    "lower_bound",
]

logger = logging.getLogger(__name__)


class MonotonicityError(VortexError, RuntimeError):
    """The iterates stopped decreasing; the shift is too small for this data."""


@dataclass(frozen=True, eq=False)
class AbelianProblem:
    graph: WeightedGraph
    points: tuple
    lam: float
    u0: np.ndarray

    @property
    def M(self) -> int:
        return len(self.points)


@dataclass(frozen=True, eq=False)
class AbelianSolution:
    """Converged maximal solution ``u = u0 + v``."""

    v: np.ndarray
    u: np.ndarray
    lam: float
    iterations: int
    residual_inf: float
    integral_check: float

    def to_dict(self, g: WeightedGraph) -> dict:
        return {
            "lambda": self.lam,
            "iterations": self.iterations,
            "residual_inf": self.residual_inf,
            "integral_check": self.integral_check,
            "max_u": float(self.u.max()),
            "u": g.as_dict(self.u),
            "v": g.as_dict(self.v),
        }


def abelian_problem(g: WeightedGraph, points, lam: float) -> AbelianProblem:
    """Set up the scalar problem, including its zero-mean background field."""
    points = tuple(str(p) for p in points)
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    rhs = np.full(g.n_vertices, -4.0 * np.pi * len(points) / g.volume)
    for p in points:
        if p not in g.index:
            raise VortexDataError(f"vortex point {p!r} is not a vertex")
        rhs += 4.0 * np.pi * g.dirac(p)
    u0 = solve_zero_mean(g, rhs)
    u0 = u0 - integrate(g, u0) / g.volume
    u0.setflags(write=False)
    return AbelianProblem(graph=g, points=points, lam=float(lam), u0=u0)


def lower_bound(g: WeightedGraph, M: int) -> float:
    """``16 pi M / |V|``: no solution exists at or below this coupling."""
    return 16.0 * np.pi * M / g.volume


def _residual(g, lam, src, u0, v):
    u = u0 + v
    e = np.exp(u)
    lap = -(g.laplacian_matrix @ v) / g.mu
    return np.abs(lap - lam * e * (e - 1.0) - src).max()


def monotone_solve(
    p: AbelianProblem,
    tol: float = 1e-10,
    max_iter: int = 20000,
    shift: float | None = None,
    callback=None,
) -> AbelianSolution:
    """Maximal solution by monotone iteration.

    With ``u = u0 + v`` each step solves the linear problem
    ``(laplacian - kappa) v_new = lam e^u (e^u - 1) - kappa v + 4 pi M/|V|``
    starting from ``v = -u0`` (so ``u = 0``). The iterates decrease
    pointwise; this is checked at every step.

    Parameters
    ----------
    tol : float
        Required sup-norm of the equation residual. The step size must also
        drop below ``tol / kappa``.
    shift : float, optional
        ``kappa``; defaults to ``2 * lam``. Iterates stay below 0 where the
        nonlinearity has slope at most ``lam``, so this is twice what
        monotonicity needs.
    callback : callable, optional
        Called as ``callback(k, u)`` after every step.

    Raises
    ------
    NoConvergence
        After ``max_iter`` steps, or as soon as ``max u`` falls below
        ``log(4 pi M / (lam |V|))``. Every solution integrates
        ``e^u (1 - e^u)`` to ``4 pi M / lam``, so it must reach that level
        somewhere; since the iterates stay above the maximal solution, such
        a failure certifies that none exists (``certified=True``), provided
        ``kappa >= lam``; with a smaller shift the iterates may undershoot.
    """
    g, lam = p.graph, p.lam
    M = p.M
    u0 = p.u0
    if M == 0:
        zero = np.zeros(g.n_vertices)
        return AbelianSolution(zero - u0, zero, lam, 0, 0.0, 0.0)

    src = 4.0 * np.pi * M / g.volume
    kappa = 2.0 * lam if shift is None else float(shift)
    lu = splu((g.laplacian_matrix + kappa * sp.diags(g.mu)).tocsc())
    floor = math.log(4.0 * np.pi * M / (lam * g.volume))

    v = -np.array(u0)
    u = np.zeros_like(v)
    for k in range(1, max_iter + 1):
        e = np.exp(u)
        rhs = lam * e * (e - 1.0) - kappa * v + src
        v_new = lu.solve(-g.mu * rhs)
        u_new = u0 + v_new
        if np.any(u_new > u + 1e-12 * (1.0 + np.abs(u))):
            raise MonotonicityError(
                f"iterate increased by {np.max(u_new - u):.3g} at step {k}; shift {kappa} too small"
            )
        step = np.abs(v_new - v).max()
        v, u = v_new, u_new
        if callback is not None:
            callback(k, u)
        if u.max() < floor:
            raise NoConvergence(
                f"max u = {u.max():.4g} fell below {floor:.4g}: no solution at lambda={lam}",
                iterations=k,
                # the comparison argument needs kappa above the slope bound lam
                certified=kappa >= lam,
            )
        if step <= tol / kappa:
            res = _residual(g, lam, src, u0, v)
            if res <= tol:
                e = np.exp(u)
                check = abs(integrate(g, e * (1.0 - e)) - 4.0 * np.pi * M / lam)
                return AbelianSolution(v, u, lam, k, float(res), float(check))
    raise NoConvergence(
        f"monotone iteration did not converge in {max_iter} steps at lambda={lam}",
        iterations=max_iter,
    )


def _succeeds(g, points, lam, tol, max_iter) -> bool:
    try:
        monotone_solve(abelian_problem(g, points, lam), tol=tol, max_iter=max_iter)
    except NoConvergence:
        return False
    return True


def critical_lambda(
    g: WeightedGraph,
    points,
    tol_bracket: float = 1e-3,
    lambda_max: float = 1e6,
    tol: float = 1e-10,
    max_iter: int = 20000,
) -> tuple[float, float]:
    """Bracket ``[lo, hi]`` around the critical coupling, ``hi - lo <= tol_bracket``.

    The solver fails at ``lo`` and succeeds at ``hi``. The search starts
    from the lower bound ``16 pi M / |V|``, doubles until a solve succeeds,
    then bisects. ``lambda_max`` caps the doubling.
    """
    points = tuple(points)
    if not points:
        raise VortexDataError("critical coupling needs at least one vortex point")
    lo = lower_bound(g, len(points))
    if _succeeds(g, points, lo, tol, max_iter):
        raise VortexError(f"solver succeeded at the lower bound {lo}; iteration is unreliable")
    hi = 2.0 * lo
    while not _succeeds(g, points, hi, tol, max_iter):
        lo = hi
        hi *= 2.0
        if hi > lambda_max:
            raise NoConvergence(f"no successful solve below lambda_max={lambda_max}")
    while hi - lo > tol_bracket:
        mid = 0.5 * (lo + hi)
        if _succeeds(g, points, mid, tol, max_iter):
            hi = mid
        else:
            lo = mid
        logger.debug("critical bracket [%r, %r]", lo, hi)
    return lo, hi
