"""Constrained variational solver for the non-Abelian vortex system.

Unknowns are split as ``v = w + c`` with ``w`` zero-mean per component and
``c`` the constants fixed by :mod:`graphvortex.constraint`. The reduced
functional ``J(w) = I(w + c(w))`` is minimized over the admissible set by
nonlinear conjugate gradients with Armijo backtracking; steps leaving the
admissible set are halved away.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import abelian
from .cartan import CartanSystem, VortexData, lambda0 as _lambda0
from .constraint import (
    ConstraintSolution,
    Moments,
    admissibility_margins,
    moments,
    solve_t,
)
from .errors import (
    LambdaBelowThreshold,
    LineSearchFail,
    MaxIter,
    NotAdmissible,
    NumericRange,
    SeedNotAdmissible,
)
from .graph import WeightedGraph, integrate, project_zero_mean
from .poisson import BackgroundField, background

__all__ = [
    "ProblemInstance",
    "SolveReport",
    "energy_I",
    "functional_J",
    "grad_J",
    "system_residual",
    "check_identities",
    "seed",
    "minimize",
    "SEED_STRATEGIES",
]

logger = logging.getLogger(__name__)

SEED_STRATEGIES = ("neg-u0", "abelian", "zero")


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    graph: WeightedGraph
    system: CartanSystem
    vortex: VortexData
    background: BackgroundField
    lam: float

    @classmethod
    def build(cls, graph, system, vortex, lam) -> "ProblemInstance":
        if not lam > 0:
            raise ValueError(f"lambda must be positive, got {lam}")
        if vortex.n != system.n:
            raise ValueError("vortex data and Cartan system have different ranks")
        return cls(graph, system, vortex, background(graph, vortex), float(lam))

    def with_lambda(self, lam) -> "ProblemInstance":
        return ProblemInstance(self.graph, self.system, self.vortex, self.background, float(lam))

    @property
    def u0(self) -> np.ndarray:
        return self.background.u0

    @property
    def lambda0(self) -> float:
        return _lambda0(self.system, self.vortex.N, self.graph.volume)

    @property
    def seed_threshold(self) -> float:
        """Smallest lambda for which the admissible set is non-empty.

        ``a_i^2 <= |V| a_ii`` by Cauchy-Schwarz with equality exactly at
        ``w = -u0``, so the admissible set is empty below
        ``max_i 4 alpha_ii P_i^2 b_i / |V|``.
        """
        s = self.system
        return float(np.max(4.0 * np.diag(s.S) * s.P**2 * self.vortex.b) / self.graph.volume)


@dataclass
class SolveReport:
    converged: bool
    lam: float
    lambda0: float
    w: np.ndarray
    t: np.ndarray
    c: np.ndarray
    v: np.ndarray
    u_hat: np.ndarray
    u_orig: np.ndarray
    J_value: float
    grad_norm: float
    residual_inf: float
    identity_310_err: float
    identity_313_err: float
    quad_residual: float
    iterations: int
    admissible_margins: np.ndarray
    seed_strategy: str = "neg-u0"
    message: str = ""
    history: list = field(default_factory=list, repr=False)

    def to_dict(self, g: WeightedGraph) -> dict:
        def multi(x):
            return [g.as_dict(row) for row in x]

        return {
            "converged": self.converged,
            "lambda": self.lam,
            "lambda0": self.lambda0,
            "iterations": self.iterations,
            "J": self.J_value,
            "grad_norm": self.grad_norm,
            "t": self.t.tolist(),
            "c": self.c.tolist(),
            "w": multi(self.w),
            "v": multi(self.v),
            "u_hat": multi(self.u_hat),
            "u_orig": multi(self.u_orig),
            "residual_inf": self.residual_inf,
            "identity_310_err": self.identity_310_err,
            "identity_313_err": self.identity_313_err,
            "quad_residual": self.quad_residual,
            "admissible_margins": self.admissible_margins.tolist(),
            "seed_strategy": self.seed_strategy,
            "message": self.message,
        }


# -- functionals --------------------------------------------------------------


def _dirichlet(p: ProblemInstance, x) -> float:
    """``(1/2) sum_jk A_kj int Gamma(x_k, x_j)``."""
    Lx = (p.graph.laplacian_matrix @ x.T).T
    return 0.5 * float(np.sum(p.system.A * (x @ Lx.T)))


def energy_I(p: ProblemInstance, v) -> float:
    """Unconstrained energy of ``v`` (any multi-field, not only constrained ones)."""
    g, s = p.graph, p.system
    v = np.atleast_2d(g.check_field(v))
    x = p.u0 + v
    if np.any(np.abs(x) > 700):
        raise NumericRange("exponent of u0 + v out of range")
    U1 = np.exp(x) - 1.0
    pot = 0.5 * p.lam * float(np.einsum("ix,ij,jx,x->", U1, s.Q, U1, g.mu))
    lin = float(p.vortex.b @ integrate(g, v)) / g.volume
    return _dirichlet(p, v) + pot + lin


@dataclass(eq=False)
class _State:
    w: np.ndarray
    m: Moments
    cons: ConstraintSolution
    v: np.ndarray
    U: np.ndarray
    J: float
    J_scale: float
    G: np.ndarray = None
    raw_mean: np.ndarray = None


def _evaluate(p: ProblemInstance, w, with_grad=True) -> _State:
    g, s = p.graph, p.system
    m = moments(g, p.u0, w)
    cons = solve_t(s, p.vortex, m, p.lam)
    t, c = cons.t, cons.c
    v = w + c[:, None]
    U = np.exp(p.u0 + w) * t[:, None]

    b = p.vortex.b
    ratio = s.R / s.P
    terms = np.array(
        [
            _dirichlet(p, w),
            0.5 * p.lam * float(ratio @ (g.volume - t * m.a)),
            float(b @ c),
            -0.5 * float(b.sum()),
        ]
    )
    J_scale = _dirichlet(p, np.abs(w)) + 0.5 * p.lam * float(ratio @ (g.volume + t * m.a))
    J_scale += float(np.abs(b) @ (np.abs(c) + 0.5))
    st = _State(w, m, cons, v, U, float(terms.sum()), J_scale)
    if with_grad:
        Lv = (g.laplacian_matrix @ v.T).T
        raw = (s.A @ Lv) / g.mu + p.lam * U * (s.Q @ (U - 1.0)) + b[:, None] / g.volume
        st.raw_mean = integrate(g, raw) / g.volume
        st.G = raw - st.raw_mean[:, None]
    return st


def functional_J(p: ProblemInstance, w) -> float:
    """Reduced energy ``I(w + c(w))`` via the constraint-simplified formula."""
    w = np.atleast_2d(p.graph.check_field(w))
    return _evaluate(p, w, with_grad=False).J


def grad_J(p: ProblemInstance, w) -> np.ndarray:
    """``mu``-weighted L2 gradient of ``J`` at ``w``, projected to zero mean.

    Because ``c(w)`` makes ``I`` stationary in constant directions, the
    gradient of ``J`` is the partial gradient of ``I`` at ``v = w + c(w)``:
    ``-A lap(v) + lam U Q (U - 1) + b / |V|``.
    """
    w = np.atleast_2d(p.graph.check_field(w))
    return _evaluate(p, w).G


def _inner(g: WeightedGraph, x, y) -> float:
    return float(np.sum((x * y) @ g.mu))


def system_residual(p: ProblemInstance, v) -> float:
    """Sup norm of ``lap(v) - lam Kt U Kt (U - 1) - 4 pi N / |V|``."""
    g, s = p.graph, p.system
    v = np.atleast_2d(v)
    U = np.exp(p.u0 + v)
    Kt = s.Ktilde
    lap = -((g.laplacian_matrix @ v.T).T) / g.mu
    rhs = p.lam * (Kt @ (U * (Kt @ (U - 1.0)))) + 4.0 * np.pi * p.vortex.N[:, None] / g.volume
    return float(np.abs(lap - rhs).max())


def check_identities(p: ProblemInstance, report_or_v) -> tuple[float, float]:
    """Errors in the two integral identities satisfied by every solution.

    Returns ``(err_310, err_313)``:

    * ``max_i |int (U Q (U - 1))_i + b_i / lam|``
    * ``|int (U - 1/2)^T Q (U - 1/2) - (|V|/4) 1^T P^-1 (K^T)^-1 1
      + 4 pi 1^T P^-1 (K^T)^-1 N / lam|``
    """
    v = report_or_v.v if isinstance(report_or_v, SolveReport) else report_or_v
    g, s = p.graph, p.system
    U = np.exp(p.u0 + np.atleast_2d(v))
    lhs = integrate(g, U * (s.Q @ (U - 1.0)))
    err_310 = float(np.abs(lhs + p.vortex.b / p.lam).max())

    W = np.linalg.inv(s.K.T) / s.P[:, None]
    rhs = g.volume / 4.0 * W.sum() - 4.0 * np.pi * (W @ p.vortex.N).sum() / p.lam
    H = U - 0.5
    quad = float(np.einsum("ix,ij,jx,x->", H, s.Q, H, g.mu))
    return err_310, abs(quad - rhs)


def quadratic_identity_rhs(p: ProblemInstance) -> float:
    s = p.system
    W = np.linalg.inv(s.K.T) / s.P[:, None]
    return float(p.graph.volume / 4.0 * W.sum() - 4.0 * np.pi * (W @ p.vortex.N).sum() / p.lam)


# -- seeds --------------------------------------------------------------------


def seed(p: ProblemInstance, strategy: str = "neg-u0", r: float | None = None) -> np.ndarray:
    """Starting point for the minimization.

    ``"neg-u0"`` returns ``-u0``; ``"zero"`` returns 0; ``"abelian"`` solves,
    per component, the scalar equation at coupling ``r`` (default
    ``10 * lam``) and returns the zero-mean part of ``u - u0``, which tends
    to ``-u0`` as ``r`` grows.
    """
    g = p.graph
    if strategy == "neg-u0":
        return -np.array(p.u0)
    if strategy == "zero":
        return np.zeros_like(p.u0)
    if strategy == "abelian":
        r = 10.0 * p.lam if r is None else float(r)
        rows = []
        for i, pts in enumerate(p.vortex.points):
            prob = abelian.AbelianProblem(graph=g, points=tuple(pts), lam=r, u0=p.u0[i])
            rows.append(abelian.monotone_solve(prob).v)
        return project_zero_mean(g, np.array(rows))
    raise ValueError(f"unknown seed strategy {strategy!r}; choose from {SEED_STRATEGIES}")


# -- minimization -------------------------------------------------------------


@dataclass
class _Counters:
    rejections: int = 0
    consecutive_rejections: int = 0


def _line_search(p, st, d, dphi0, s0, counters, c1=1e-4):
    """Backtracking along ``d``; returns ``(step, new_state)``.

    Uses the Armijo test while the predicted decrease is resolvable in
    floating point. Below that level the slope at the trial point decides
    (accept unless it has turned strongly positive, in which case a secant
    step is taken).
    """
    g = p.graph
    noise = 1e-12 * max(st.J_scale, 1.0)
    s = s0
    for _ in range(80):
        try:
            trial = _evaluate(p, st.w + s * d)
        except (NotAdmissible, NumericRange):
            counters.rejections += 1
            counters.consecutive_rejections += 1
            if counters.consecutive_rejections > 100:
                raise LineSearchFail(
                    "minimization stagnates at the boundary of the admissible set; "
                    "lambda is likely too small"
                )
            s *= 0.5
            continue
        counters.consecutive_rejections = 0
        dJ = trial.J - st.J
        if dJ <= c1 * s * dphi0:
            return s, trial
        if abs(s * dphi0) <= noise and dJ <= noise:
            dphi = _inner(g, trial.G, d)
            if dphi <= -0.8 * dphi0:
                return s, trial
            s *= float(np.clip(dphi0 / (dphi0 - dphi), 0.1, 0.9))
            continue
        s *= 0.5
    raise LineSearchFail("line search failed to find an acceptable step")


def _report(p, st, iterations, converged, strategy, message="", history=None) -> SolveReport:
    s = p.system
    v = st.v
    u_hat = p.u0 + v
    err310, err313 = check_identities(p, v)
    G = st.G if st.G is not None else _evaluate(p, st.w).G
    return SolveReport(
        converged=converged,
        lam=p.lam,
        lambda0=p.lambda0,
        w=st.w,
        t=st.cons.t,
        c=st.cons.c,
        v=v,
        u_hat=u_hat,
        u_orig=u_hat + np.log(s.R)[:, None],
        J_value=st.J,
        grad_norm=float(np.abs(G).max()),
        residual_inf=system_residual(p, v),
        identity_310_err=err310,
        identity_313_err=err313,
        quad_residual=st.cons.quad_residual,
        iterations=iterations,
        admissible_margins=admissibility_margins(s, p.vortex, st.m, p.lam),
        seed_strategy=strategy,
        message=message,
        history=history or [],
    )


def minimize(
    p: ProblemInstance,
    seed_strategy: str = "neg-u0",
    tol: float = 1e-9,
    max_iter: int = 20000,
    w0=None,
    check_threshold: bool = True,
    restart_every: int | None = None,
    record: bool = False,
    max_step: float = 0.25,
) -> SolveReport:
    """Minimize ``J`` over the admissible set and assemble the solution.

    Stops when ``max|grad J| <= tol`` and the residual of the full system is
    at most ``tol``.

    Parameters
    ----------
    seed_strategy : {"neg-u0", "abelian", "zero"}
        Initial point, see :func:`seed`; ignored when ``w0`` is given.
    check_threshold : bool
        Refuse ``lam <= lambda0`` up front (no solution exists there).
    restart_every : int, optional
        Conjugate-gradient restart period; defaults to ``10 n |V|``.
    record : bool
        Keep ``J`` after every accepted step in ``report.history``.
    max_step : float
        Cap on ``max|w_new - w|`` for the first trial of each line search.
        Near the critical coupling ``J`` can have a shallow well around the
        seed next to a descent channel running into the boundary of the
        admissible set; long steps can jump from one to the other.

    Raises
    ------
    LambdaBelowThreshold, SeedNotAdmissible, MaxIter, LineSearchFail
    """
    g = p.graph
    lam0 = p.lambda0
    if check_threshold and not p.lam > lam0:
        raise LambdaBelowThreshold(p.lam, lam0)

    w = seed(p, seed_strategy) if w0 is None else np.atleast_2d(np.array(w0, dtype=float))
    w = project_zero_mean(g, w)
    try:
        st = _evaluate(p, w)
    except NotAdmissible as exc:
        m = moments(g, p.u0, w)
        margins = admissibility_margins(p.system, p.vortex, m, p.lam)
        raise SeedNotAdmissible(
            f"seed {seed_strategy!r} is not admissible at lambda={p.lam} (margins {margins}); "
            f"the admissible set is empty below lambda={p.seed_threshold!r}",
            margins=margins,
            required_lambda=p.seed_threshold,
        ) from exc

    n_dof = p.system.n * g.n_vertices
    restart = restart_every or 10 * n_dof
    counters = _Counters()
    history = [st.J] if record else None

    d = -st.G
    step = 1.0 / max(1.0, float(np.abs(st.G).max()))
    since_restart = 0
    pinned = 0
    for it in range(max_iter + 1):
        gnorm = float(np.abs(st.G).max())
        if gnorm <= tol and st.cons.quad_residual <= 1e-10:
            res = system_residual(p, st.v)
            if res <= tol:
                return _report(p, st, it, True, seed_strategy, "converged", history)
        if it == max_iter:
            break
        dphi0 = _inner(g, st.G, d)
        if not dphi0 < 0:
            d = -st.G
            dphi0 = _inner(g, st.G, d)
            since_restart = 0
        try:
            rejections_before = counters.rejections
            s0 = min(2.0 * step, max_step / max(float(np.abs(d).max()), 1e-300))
            step, new = _line_search(p, st, d, dphi0, s0, counters)
        except LineSearchFail as exc:
            exc.report = _report(p, st, it, False, seed_strategy, str(exc), history)
            exc.iterations = it
            raise
        if record:
            history.append(new.J)
        # pinned against the boundary: rejected trials and no real decrease
        noise = 1e-12 * max(st.J_scale, 1.0)
        if counters.rejections > rejections_before and st.J - new.J <= noise:
            pinned += 1
        else:
            pinned = 0
        if pinned >= 100:
            exc = LineSearchFail(
                "minimization stagnates at the boundary of the admissible set "
                f"(|grad J| = {np.abs(new.G).max():.3g}); lambda is likely too small",
                iterations=it + 1,
            )
            exc.report = _report(p, new, it + 1, False, seed_strategy, str(exc), history)
            raise exc
        since_restart += 1
        gg = _inner(g, st.G, st.G)
        beta = max(0.0, _inner(g, new.G, new.G - st.G) / gg) if gg > 0 else 0.0
        if since_restart >= restart:
            beta, since_restart = 0.0, 0
        d = -new.G + beta * d
        st = new
        if it % 500 == 0:
            logger.debug("iter %d: J=%.15g |G|=%.3g step=%.3g", it, st.J, gnorm, step)

    raise MaxIter(
        f"no convergence in {max_iter} iterations (|grad J| = {np.abs(st.G).max():.3g})",
        iterations=max_iter,
        report=_report(p, st, max_iter, False, seed_strategy, "max_iter", history),
    )
