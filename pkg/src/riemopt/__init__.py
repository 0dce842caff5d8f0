"""Riemannian optimal control toolkit.

Evolve metrics under a controlling connection, test integrability and
adjoint structure, synthesize bang-bang optimal connections for flux
functionals, and check closed-form soliton metrics and the optimal pipe.
"""

__version__ = "0.1.0"

from .fieldexpr import EvalError, ParseError, differentiate, evaluate, parse, to_string
from .grid import (
    ConnectionField,
    CostateField,
    Domain,
    Grid,
    GridError,
    GridSpec,
    InverseMetricField,
    MetricField,
    TensorField,
    constant_field,
    make_grid,
    sample_field,
)
from .geometry import christoffel_from_metric, cic_residual, riemann_lowered
from .evolution import (
    EvolutionProblem,
    adjoint_residual,
    compat_residual,
    duality_flux_divergence,
    evolve_metric,
    path_independence_check,
)
from .control import (
    BolzaSpec,
    SignVector,
    bang_bang_synthesize,
    brute_force_hamiltonian_max,
    costate_from_C,
    mp_certificate,
    total_flux_functional,
)
from .solutions import (
    PipeFlow,
    conformal_pair,
    field_transform,
    pipe_mesh,
    pipe_optimal_metric,
    rank_one_pair,
    verify_closed_form,
)

__all__ = [
    "adjoint_residual",
    "bang_bang_synthesize",
    "BolzaSpec",
    "brute_force_hamiltonian_max",
    "christoffel_from_metric",
    "cic_residual",
    "compat_residual",
    "conformal_pair",
    "ConnectionField",
    "constant_field",
    "costate_from_C",
    "CostateField",
    "differentiate",
    "Domain",
    "duality_flux_divergence",
    "EvalError",
    "evaluate",
    "EvolutionProblem",
    "evolve_metric",
    "field_transform",
    "Grid",
    "GridError",
    "GridSpec",
    "InverseMetricField",
    "make_grid",
    "MetricField",
    "mp_certificate",
    "parse",
    "ParseError",
    "path_independence_check",
    "pipe_mesh",
    "pipe_optimal_metric",
    "PipeFlow",
    "rank_one_pair",
    "riemann_lowered",
    "sample_field",
    "SignVector",
    "TensorField",
    "to_string",
    "total_flux_functional",
    "verify_closed_form",
]
