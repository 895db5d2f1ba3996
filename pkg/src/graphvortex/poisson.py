"""Zero-mean graph Poisson solves and the vortex background fields."""
from __future__ import annotations

import threading
import weakref
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .cartan import VortexData
from .errors import NonzeroMean
from .graph import WeightedGraph, integrate

__all__ = ["BackgroundField", "dirac", "solve_zero_mean", "background"]

_FACTORS: "weakref.WeakKeyDictionary[WeightedGraph, object]" = weakref.WeakKeyDictionary()
_LOCK = threading.Lock()


@dataclass(frozen=True, eq=False)
class BackgroundField:
    """Zero-mean fields ``u0`` absorbing the point sources, one row per component."""

    u0: np.ndarray
    grad_energy: np.ndarray


def dirac(g: WeightedGraph, p: str) -> np.ndarray:
    """Unit-mass point source at ``p`` (value ``1/mu(p)``)."""
    return g.dirac(p)


def _factor(g: WeightedGraph):
    with _LOCK:
        lu = _FACTORS.get(g)
        if lu is None:
            # bordered system [[L, mu], [mu^T, 0]] is nonsingular for a connected graph
            mu = sp.csr_matrix(g.mu[:, None])
            aug = sp.bmat([[g.laplacian_matrix, mu], [mu.T, None]], format="csc")
            lu = splu(aug)
            _FACTORS[g] = lu
    return lu


def solve_zero_mean(g: WeightedGraph, f) -> np.ndarray:
    """Unique ``u`` with ``laplacian(u) = f`` and zero integral.

    Raises :class:`NonzeroMean` unless ``f`` integrates to zero (up to
    ``1e-10 * max|f| * |V|``). Accepts a single field or a stack of rows.
    """
    f = g.check_field(f)
    fs = np.atleast_2d(f)
    scale = np.abs(fs).max(axis=1) * g.volume
    total = fs @ g.mu
    if np.any(np.abs(total) > 1e-10 * np.maximum(scale, np.finfo(float).tiny)):
        raise NonzeroMean(f"right-hand side integrates to {total}, not zero")
    lu = _factor(g)
    rhs = np.zeros((g.n_vertices + 1, fs.shape[0]))
    rhs[:-1] = -(fs * g.mu).T
    sol = lu.solve(rhs)[:-1].T
    return sol.reshape(f.shape)


def background(g: WeightedGraph, vort: VortexData) -> BackgroundField:
    """Solve ``laplacian(u0_i) = 4 pi sum_s delta_{p_is} - 4 pi N_i / |V|`` with zero mean."""
    n = vort.n
    if len(vort.points) != n:
        raise ValueError("vortex data carries no point locations")
    rhs = np.zeros((n, g.n_vertices))
    for i, comp in enumerate(vort.points):
        for p in comp:
            rhs[i] += 4.0 * np.pi * g.dirac(p)
        rhs[i] -= 4.0 * np.pi * len(comp) / g.volume
    u0 = solve_zero_mean(g, rhs) if n else rhs
    # remove the tiny mean left by the bordered solve
    u0 = u0 - (integrate(g, u0) / g.volume)[:, None]
    grad_energy = np.array(
        [-4.0 * np.pi * sum(u0[i, g.index[p]] for p in comp) for i, comp in enumerate(vort.points)]
    )
    u0.setflags(write=False)
    grad_energy.setflags(write=False)
    return BackgroundField(u0=u0, grad_energy=grad_energy)
