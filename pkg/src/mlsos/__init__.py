"""Sum-of-squares hierarchy for disjointly constrained multilinear programs."""

from mlsos.errors import MlsosError
from mlsos.polytope import HPolytope
from mlsos.mlp import MultilinearForm, MultilinearProgram, vertex_oracle, local_search
from mlsos.hierarchy import run, solve_order, compile_order
from mlsos.apps import (
    BimatrixGame,
    ContainmentInstance,
    decide_containment,
    solve_game,
)

__all__ = [
    "MlsosError",
    "HPolytope",
    "MultilinearForm",
    "MultilinearProgram",
    "vertex_oracle",
    "local_search",
    "run",
    "solve_order",
    "compile_order",
    "BimatrixGame",
    "ContainmentInstance",
    "decide_containment",
    "solve_game",
]

__version__ = "0.1.0"
