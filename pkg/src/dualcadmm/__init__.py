"""
Decentralized conic resource allocation by dual consensus ADMM.

Agents ``i = 1..N`` on a connected undirected graph solve

    minimize    sum_i f_i(x_i)
    subject to  sum_i (A_i x_i - b_i) in K

by running consensus ADMM on the dual problem, exchanging only dual vectors
with their neighbours.  See :mod:`dualcadmm.dual_solvers` for the two
algorithms and :mod:`dualcadmm.bench_bpd` for the basis pursuit denoising
benchmark.
"""

__version__ = "0.1.0"

from . import cones, objectives  # noqa: E402,F401
from .dual_solvers import SolverConfig, InnerConfig, run, optimality_residuals  # noqa: E402,F401
from .graph import Graph, small_world  # noqa: E402,F401
from .problem import AgentProblem, CoupledProblem, load_problem, save_problem  # noqa: E402,F401
