"""Weighted finite graphs with a vertex measure, and their discrete calculus.

Fields are plain ``numpy`` arrays indexed by the graph's vertex order: a
vertex field has shape ``(n_vertices,)`` and a multi-field (one component per
rank) has shape ``(n, n_vertices)``.
"""
from __future__ import annotations

import json
from collections.abc import Iterable, Mapping, Sequence
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import FieldMismatch, GraphError

__all__ = [
    "WeightedGraph",
    "laplacian",
    "gradient_form",
    "integrate",
    "lp_norm",
    "project_zero_mean",
    "spectral_gap",
    "dirichlet_energy",
    "path_graph",
    "cycle_graph",
    "complete_graph",
]


class WeightedGraph:
    """Connected finite graph with symmetric positive weights and a positive measure.

    Parameters
    ----------
    vertices : sequence of str
        Vertex identifiers; their order fixes the field index.
    edges : iterable of (u, v, w)
        Undirected edges with weight ``w > 0``. Self-loops and repeated
        edges are rejected.
    measure : mapping or sequence of float, optional
        Vertex measure mu(x) > 0. Defaults to 1 everywhere.

    Instances are treated as immutable; the arrays they expose are
    read-only.
    """

    def __init__(self, vertices, edges, measure=None):
        self.vertices = tuple(str(v) for v in vertices)
        if not self.vertices:
            raise GraphError("graph has no vertices")
        self.index = {v: i for i, v in enumerate(self.vertices)}
        if len(self.index) != len(self.vertices):
            raise GraphError("duplicate vertex identifiers")
        nv = len(self.vertices)

        if measure is None:
            mu = np.ones(nv)
        elif isinstance(measure, Mapping):
            mu = np.array([float(measure.get(v, 1.0)) for v in self.vertices])
        else:
            mu = np.array(measure, dtype=float)
            if mu.shape != (nv,):
                raise GraphError("measure length does not match vertex count")
        if not np.all(np.isfinite(mu)) or np.any(mu <= 0):
            raise GraphError("vertex measure must be finite and positive")

        heads, tails, wts = [], [], []
        seen = set()
        for u, v, w in edges:
            u, v, w = str(u), str(v), float(w)
            if u not in self.index or v not in self.index:
                raise GraphError(f"edge ({u}, {v}) uses an unknown vertex")
            if u == v:
                raise GraphError(f"self-loop at {u}")
            key = frozenset((u, v))
            if key in seen:
                raise GraphError(f"duplicate edge ({u}, {v})")
            if not np.isfinite(w) or w <= 0:
                raise GraphError(f"edge ({u}, {v}) has non-positive weight {w}")
            seen.add(key)
            heads.append(self.index[u])
            tails.append(self.index[v])
            wts.append(w)

        self.edge_heads = np.array(heads, dtype=np.intp)
        self.edge_tails = np.array(tails, dtype=np.intp)
        self.edge_weights = np.array(wts, dtype=float)
        self.mu = mu
        for arr in (self.edge_heads, self.edge_tails, self.edge_weights, self.mu):
            arr.setflags(write=False)

        ncomp, _ = connected_components(self.weights, directed=False)
        if ncomp != 1:
            raise GraphError(f"graph is disconnected ({ncomp} components)")

    # -- construction helpers -------------------------------------------------

    @classmethod
    def from_dict(cls, data: Mapping) -> "WeightedGraph":
        """Build from ``{"vertices": [{"id", "mu"}], "edges": [{"u", "v", "w"}]}``."""
        try:
            verts = data["vertices"]
            ids = [str(v["id"]) for v in verts]
            mu = [float(v.get("mu", 1.0)) for v in verts]
            edges = [(e["u"], e["v"], e.get("w", 1.0)) for e in data.get("edges", [])]
        except (KeyError, TypeError) as exc:
            raise GraphError(f"malformed graph description: {exc}") from exc
        return cls(ids, edges, mu)

    @classmethod
    def from_json(cls, path) -> "WeightedGraph":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "vertices": [{"id": v, "mu": float(m)} for v, m in zip(self.vertices, self.mu)],
            "edges": [
                {"u": self.vertices[i], "v": self.vertices[j], "w": float(w)}
                for i, j, w in zip(self.edge_heads, self.edge_tails, self.edge_weights)
            ],
        }

    def relabel(self, perm: Sequence[int]) -> "WeightedGraph":
        """Graph whose vertex ``k`` is this graph's vertex ``perm[k]``."""
        verts = [self.vertices[p] for p in perm]
        edges = zip(
            (self.vertices[i] for i in self.edge_heads),
            (self.vertices[j] for j in self.edge_tails),
            self.edge_weights,
        )
        return WeightedGraph(verts, list(edges), self.mu[list(perm)])

    def scaled(self, weight_factor=1.0, measure_factor=1.0) -> "WeightedGraph":
        edges = zip(
            (self.vertices[i] for i in self.edge_heads),
            (self.vertices[j] for j in self.edge_tails),
            self.edge_weights * weight_factor,
        )
        return WeightedGraph(self.vertices, list(edges), self.mu * measure_factor)

    # -- basic data -----------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def volume(self) -> float:
        return float(self.mu.sum())

    @cached_property
    def weights(self) -> sp.csr_matrix:
        """Symmetric sparse weight matrix W."""
        nv = self.n_vertices
        rows = np.concatenate([self.edge_heads, self.edge_tails])
        cols = np.concatenate([self.edge_tails, self.edge_heads])
        vals = np.concatenate([self.edge_weights, self.edge_weights])
        return sp.csr_matrix((vals, (rows, cols)), shape=(nv, nv))

    @cached_property
    def laplacian_matrix(self) -> sp.csr_matrix:
        """Weight Laplacian L = D - W, so that the graph Laplacian is -M^-1 L."""
        W = self.weights
        deg = np.asarray(W.sum(axis=1)).ravel()
        return (sp.diags(deg) - W).tocsr()

    @property
    def total_weight(self) -> float:
        return float(self.edge_weights.sum())

    def field(self, values) -> np.ndarray:
        """Turn a ``{vertex: value}`` mapping or a sequence into a vertex field."""
        if isinstance(values, Mapping):
            missing = set(self.vertices) - set(map(str, values))
            extra = set(map(str, values)) - set(self.vertices)
            if missing or extra:
                raise FieldMismatch(
                    f"field domain differs from vertex set (missing={sorted(missing)}, "
                    f"extra={sorted(extra)})"
                )
            return np.array([float(values[v]) for v in self.vertices])
        return self.check_field(np.asarray(values, dtype=float))

    def as_dict(self, u) -> dict:
        u = self.check_field(u)
        return {v: float(x) for v, x in zip(self.vertices, u)}

    def check_field(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.ndim < 1 or u.shape[-1] != self.n_vertices:
            raise FieldMismatch(
                f"field of shape {u.shape} does not live on a graph with "
                f"{self.n_vertices} vertices"
            )
        return u

    def dirac(self, p: str) -> np.ndarray:
        """Unit-mass point source at ``p``: value 1/mu(p) there, 0 elsewhere."""
        if p not in self.index:
            raise GraphError(f"unknown vertex {p!r}")
        d = np.zeros(self.n_vertices)
        d[self.index[p]] = 1.0 / self.mu[self.index[p]]
        return d

    def __repr__(self):
        return (
            f"WeightedGraph(n_vertices={self.n_vertices}, n_edges={len(self.edge_weights)}, "
            f"volume={self.volume:g})"
        )


def laplacian(g: WeightedGraph, u) -> np.ndarray:
    """Graph Laplacian (1/mu(x)) sum_y w_xy (u(y) - u(x)).

    Works on a single field or row-wise on a multi-field.
    """
    u = g.check_field(u)
    Lu = (g.laplacian_matrix @ u.T).T
    return -Lu / g.mu


def gradient_form(g: WeightedGraph, u, v) -> np.ndarray:
    """Pointwise gradient form Gamma(u, v)."""
    u = g.check_field(u)
    v = g.check_field(v)
    if u.shape != v.shape:
        raise FieldMismatch("fields have different shapes")
    i, j, w = g.edge_heads, g.edge_tails, g.edge_weights
    # du * dv first so that Gamma(u, v) == Gamma(v, u) bit for bit
    prod = w * ((u[..., j] - u[..., i]) * (v[..., j] - v[..., i]))
    out = np.zeros(u.shape)
    np.add.at(out.T, i, prod.T)
    np.add.at(out.T, j, prod.T)
    return out / (2.0 * g.mu)


def integrate(g: WeightedGraph, u) -> float | np.ndarray:
    """Integral sum_x mu(x) u(x); row-wise for multi-fields."""
    u = g.check_field(u)
    return u @ g.mu


def dirichlet_energy(g: WeightedGraph, u, v=None) -> float:
    """Integral of Gamma(u, v); equals u^T L v."""
    u = g.check_field(u)
    v = u if v is None else g.check_field(v)
    return float(u @ (g.laplacian_matrix @ v))


def lp_norm(g: WeightedGraph, u, p: float) -> float:
    if not p > 0:
        raise ValueError(f"p must be positive, got {p}")
    u = g.check_field(u)
    if np.isinf(p):
        return float(np.max(np.abs(u)))
    return float((np.abs(u) ** p @ g.mu) ** (1.0 / p))


def project_zero_mean(g: WeightedGraph, u) -> np.ndarray:
    """Subtract the mu-weighted mean (row-wise for multi-fields)."""
    u = g.check_field(u)
    mean = integrate(g, u) / g.volume
    return u - np.expand_dims(mean, -1)


def spectral_gap(g: WeightedGraph) -> float:
    """Smallest nonzero eigenvalue of -Laplacian in the mu-inner product.

    ``1 / spectral_gap(g)`` is the sharp Poincare constant for zero-mean
    fields.
    """
    if g.n_vertices < 2:
        raise GraphError("spectral gap undefined on a single vertex")
    s = 1.0 / np.sqrt(g.mu)
    M = s[:, None] * g.laplacian_matrix.toarray() * s[None, :]
    return float(np.linalg.eigvalsh(M)[1])


def _named(n, names):
    if names is None:
        return [f"v{k}" for k in range(n)]
    names = list(names)
    if len(names) != n:
        raise GraphError("wrong number of vertex names")
    return names


def path_graph(n: int, weight=1.0, measure=None, names: Iterable[str] | None = None):
    ids = _named(n, names)
    return WeightedGraph(ids, [(ids[k], ids[k + 1], weight) for k in range(n - 1)], measure)


def cycle_graph(n: int, weight=1.0, measure=None, names: Iterable[str] | None = None):
    ids = _named(n, names)
    edges = [(ids[k], ids[(k + 1) % n], weight) for k in range(n)]
    return WeightedGraph(ids, edges if n > 2 else edges[:1], measure)


def complete_graph(n: int, weight=1.0, measure=None, names: Iterable[str] | None = None):
    ids = _named(n, names)
    edges = [(ids[a], ids[b], weight) for a in range(n) for b in range(a + 1, n)]
    return WeightedGraph(ids, edges, measure)
