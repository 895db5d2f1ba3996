"""Vortex equations on finite weighted graphs.

Scalar (rank-one) solver by monotone iteration, and a constrained
variational solver for systems coupled through a Cartan matrix.
"""
from .abelian import abelian_problem, critical_lambda, monotone_solve
from .cartan import CartanSystem, VortexData, lambda0, make_vortex, preset, validate
from .graph import WeightedGraph, complete_graph, cycle_graph, path_graph
from .minimizer import ProblemInstance, SolveReport, minimize
from .poisson import background, solve_zero_mean

__all__ = [
    "WeightedGraph",
    "path_graph",
    "cycle_graph",
    "complete_graph",
    "CartanSystem",
    "VortexData",
    "preset",
    "validate",
    "lambda0",
    "make_vortex",
    "solve_zero_mean",
    "background",
    "abelian_problem",
    "monotone_solve",
    "critical_lambda",
    "ProblemInstance",
    "SolveReport",
    "minimize",
]

__version__ = "0.1.0"
