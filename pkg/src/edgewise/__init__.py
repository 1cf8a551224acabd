"""Exact posterior probabilities of Bayesian-network edges.

Forward-backward dynamic programming over the subset lattice, run serially
or on a simulated/threaded ``k``-dimensional hypercube of workers.
"""

from .bench import k_star, synthetic_data
from .oracle import naive_truncated_sums, posterior_by_order_enumeration
from .posterior import (EdgePosteriorMatrix, edge_posterior_forward, edge_posteriors,
                        edge_posteriors_serial)
from .runtime import FabricDeadlock, FabricError, reduce_logsumexp, spawn
from .scoring import DataError, DataMatrix, PriorSpec, build_family_scores, load_csv

__version__ = "0.1.0"

__all__ = [
    "DataError", "DataMatrix", "EdgePosteriorMatrix", "FabricDeadlock", "FabricError",
    "PriorSpec", "build_family_scores", "edge_posterior_forward", "edge_posteriors",
    "edge_posteriors_serial", "k_star", "load_csv", "naive_truncated_sums",
    "posterior_by_order_enumeration", "reduce_logsumexp", "spawn", "synthetic_data",
]
