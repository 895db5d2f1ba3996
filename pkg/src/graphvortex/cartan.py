"""Cartan-matrix data for the non-Abelian system.

A matrix ``K`` is usable when ``K^T = P S`` with ``P`` a positive diagonal
and ``S`` symmetric positive definite, with nonpositive off-diagonal entries
and an entrywise positive inverse. :func:`validate` checks all of that and
derives the matrices the solver needs:

* ``R = (K^T)^-1 1`` (row sums of the inverse transpose),
* ``A = P^-1 S^-1 P^-1`` (weights of the Dirichlet term),
* ``Q = R S R`` (weights of the potential term),
* ``Ktilde = K^T R = P S R`` (coupling of the translated system).
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadSignPattern,
    CartanError,
    InconsistentPattern,
    InverseNotPositive,
    NonpositiveR,
    NotPositiveDefinite,
    NotSymmetric,
    ReduciblePattern,
    VortexDataError,
)

__all__ = [
    "CartanSystem",
    "VortexData",
    "PRESETS",
    "preset",
    "symmetrize_P",
    "validate",
    "lambda0",
    "make_vortex",
    "cholesky_with_tolerance",
]

SYMMETRY_TOL = 1e-12
POSITIVITY_TOL = 1e-14

# name -> (K, P). P = None means derive it with symmetrize_P.
PRESETS = {
    "A1": ([[2.0]], [2.0]),
    "A2": ([[2.0, -1.0], [-1.0, 2.0]], None),
    "B2": ([[2.0, -1.0], [-2.0, 2.0]], None),
    "G2": ([[2.0, -1.0], [-3.0, 2.0]], None),
}


@dataclass(frozen=True, eq=False)
class CartanSystem:
    """Validated matrix data; build it with :func:`validate`."""

    K: np.ndarray
    P: np.ndarray
    S: np.ndarray
    R: np.ndarray
    A: np.ndarray
    Q: np.ndarray
    name: str = ""

    @property
    def n(self) -> int:
        return self.K.shape[0]

    @property
    def alpha(self) -> np.ndarray:
        """Entries alpha_ij >= 0 with S_ii = alpha_ii and S_ij = -alpha_ij."""
        a = -self.S.copy()
        np.fill_diagonal(a, np.diag(self.S))
        return a

    @property
    def Ktilde(self) -> np.ndarray:
        return self.K.T * self.R[None, :]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "K": self.K.tolist(),
            "P": self.P.tolist(),
            "S": self.S.tolist(),
            "R": self.R.tolist(),
            "A": self.A.tolist(),
            "Q": self.Q.tolist(),
        }


@dataclass(frozen=True, eq=False)
class VortexData:
    """Vortex multiplicities ``N``, their locations, and ``b = 4 pi A N``."""

    N: np.ndarray
    points: tuple = field(default_factory=tuple)
    b: np.ndarray = None

    @property
    def n(self) -> int:
        return len(self.N)


def symmetrize_P(K) -> np.ndarray:
    """Positive diagonal ``P`` (min entry 1) making ``P^-1 K^T`` symmetric.

    Symmetry of ``S = P^-1 K^T`` means ``K_ji / P_i = K_ij / P_j``, which
    fixes every ratio ``P_j / P_i`` along a nonzero off-diagonal entry; the
    ratios are propagated through the off-diagonal pattern and checked for
    consistency on every entry.
    """
    K = np.asarray(K, dtype=float)
    n = _square(K)
    off = (K != 0) & ~np.eye(n, dtype=bool)
    if np.any(off != off.T):
        raise InconsistentPattern("zero pattern of K is not symmetric")

    P = np.full(n, np.nan)
    P[0] = 1.0
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for j in np.flatnonzero(off[i]):
            ratio = K[i, j] / K[j, i]
            if ratio <= 0:
                raise InconsistentPattern(
                    f"K[{i},{j}] and K[{j},{i}] have opposite signs; no positive P exists"
                )
            if np.isnan(P[j]):
                P[j] = P[i] * ratio
                queue.append(j)
    if np.any(np.isnan(P)):
        raise ReduciblePattern(
            "off-diagonal pattern of K is reducible; the relative scale of P "
            "between blocks is ambiguous, supply P explicitly"
        )
    P /= P.min()
    S = K.T / P[:, None]
    if not np.allclose(S, S.T, rtol=0, atol=SYMMETRY_TOL * max(1.0, np.abs(K).max())):
        raise InconsistentPattern("no diagonal P makes P^-1 K^T symmetric (cycle mismatch)")
    return P


def cholesky_with_tolerance(S, rel_tol=1e-12) -> np.ndarray:
    """Lower Cholesky factor of ``S``; raises if a pivot falls below ``rel_tol * trace(S)/n``."""
    S = np.asarray(S, dtype=float)
    n = S.shape[0]
    tol = rel_tol * np.trace(S) / n
    L = np.zeros_like(S)
    for j in range(n):
        pivot = S[j, j] - L[j, :j] @ L[j, :j]
        if not pivot > tol:
            raise NotPositiveDefinite(
                f"matrix is not positive definite (pivot {pivot:.3g} at index {j})"
            )
        L[j, j] = np.sqrt(pivot)
        L[j + 1 :, j] = (S[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    return L


def validate(K, P=None, name: str = "") -> CartanSystem:
    """Check the structure conditions for ``(K, P)`` and derive R, A, Q.

    When ``P`` is omitted it is derived with :func:`symmetrize_P`.

    Raises
    ------
    NotSymmetric, BadSignPattern, NotPositiveDefinite, InverseNotPositive, NonpositiveR
        Each names the violated condition.
    """
    K = np.array(K, dtype=float)
    n = _square(K)
    if P is None:
        P = symmetrize_P(K)
    P = np.array(P, dtype=float).reshape(-1)
    if P.shape != (n,):
        raise CartanError(f"P must have {n} entries, got {P.shape[0]}")
    if np.any(P <= 0):
        raise CartanError("P must be a positive diagonal")

    S = K.T / P[:, None]
    scale = max(1.0, np.abs(K).max())
    if np.abs(S - S.T).max() > SYMMETRY_TOL * scale:
        raise NotSymmetric(f"S = P^-1 K^T is not symmetric:\n{S}")
    S = 0.5 * (S + S.T)

    off = S[~np.eye(n, dtype=bool)]
    if np.any(np.diag(S) <= 0) or np.any(off > 0):
        raise BadSignPattern(f"S must have alpha_ii > 0 and alpha_ij >= 0:\n{S}")

    cholesky_with_tolerance(S)

    S_inv = np.linalg.inv(S)
    if np.any(S_inv <= POSITIVITY_TOL):
        raise InverseNotPositive(f"S^-1 has non-positive entries:\n{S_inv}")

    R = S_inv @ (1.0 / P)
    R_direct = np.linalg.inv(K.T).sum(axis=1)
    if np.abs(R - R_direct).max() > 1e-10 * max(1.0, np.abs(R).max()):
        raise NotSymmetric("(K^T)^-1 1 differs from S^-1 P^-1 1; K^T != P S")
    if np.any(R <= 0):
        raise NonpositiveR(f"R has non-positive entries: {R}")

    A = S_inv / np.outer(P, P)
    Q = np.outer(R, R) * S
    A = 0.5 * (A + A.T)
    Q = 0.5 * (Q + Q.T)
    for arr in (K, P, S, R, A, Q):
        arr.setflags(write=False)
    return CartanSystem(K=K, P=P, S=S, R=R, A=A, Q=Q, name=name)


def preset(name: str) -> CartanSystem:
    """Validated system for one of the shipped Cartan matrices (A1, A2, B2, G2)."""
    key = name.upper().replace("_", "")
    if key not in PRESETS:
        raise CartanError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    K, P = PRESETS[key]
    return validate(K, P, name=key)


def lambda0(sys: CartanSystem, N, volume: float) -> float:
    """Necessary coupling threshold: solutions can only exist for lambda above it.

    ``(16 pi / |V|) * sum_ij P_i^-1 (K^-1)_ji N_j / sum_ij P_i^-1 (K^-1)_ji``
    """
    if isinstance(N, VortexData):
        N = N.N
    N = np.asarray(N, dtype=float)
    if not volume > 0:
        raise ValueError("volume must be positive")
    # (P^-1 (K^T)^-1)_ij = P_i^-1 (K^-1)_ji
    W = np.linalg.inv(sys.K).T / sys.P[:, None]
    return float(16.0 * np.pi / volume * (W @ N).sum() / W.sum())


def make_vortex(sys: CartanSystem, N=None, points=None, graph=None) -> VortexData:
    """Bundle vortex locations with their multiplicities and ``b = 4 pi A N``.

    ``points[i]`` lists the vertices of component ``i`` (repeats allowed).
    Either argument may be omitted: ``N`` is inferred from the point lists,
    and without points only the counts are stored.
    """
    if points is not None:
        points = tuple(tuple(str(p) for p in comp) for comp in points)
        if len(points) != sys.n:
            raise VortexDataError(f"expected {sys.n} point lists, got {len(points)}")
        counts = np.array([len(c) for c in points], dtype=float)
        if N is not None and not np.array_equal(np.asarray(N, dtype=float), counts):
            raise VortexDataError(f"N = {list(N)} does not match point counts {counts.tolist()}")
        N = counts
        if graph is not None:
            for comp in points:
                for p in comp:
                    if p not in graph.index:
                        raise VortexDataError(f"vortex point {p!r} is not a vertex")
    else:
        if N is None:
            raise VortexDataError("need N or points")
        N = np.array(N, dtype=float)
        points = ()
    if N.shape != (sys.n,) or np.any(N < 0) or np.any(N != np.round(N)):
        raise VortexDataError(f"N must be {sys.n} nonnegative integers, got {N}")
    b = 4.0 * np.pi * sys.A @ N
    N.setflags(write=False)
    b.setflags(write=False)
    return VortexData(N=N, points=points, b=b)


def _square(K) -> int:
    if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape[0] == 0:
        raise CartanError(f"K must be a non-empty square matrix, got shape {K.shape}")
    return K.shape[0]
