"""Simulator for adaptive, line-search-free decentralized optimization.

Agents on an undirected connected graph cooperatively minimize an average
of private convex losses by exchanging iterates with neighbors through a
doubly stochastic gossip matrix. The package provides the adaptive
primal-dual solvers (shared-stepsize and fully local variants), a
fixed-parameter primal-dual oracle, the EXTRA baseline, Lyapunov and merit
diagnostics against a high-accuracy reference solution, and a CLI harness
that runs experiment configs to CSV traces.
"""

__version__ = "0.1.0"

from . import config, diagnostics, errors, objectives, runner, solvers, stepsize, topology

__all__ = [
    "__version__",
    "config",
    "diagnostics",
    "errors",
    "objectives",
    "runner",
    "solvers",
    "stepsize",
    "topology",
]
