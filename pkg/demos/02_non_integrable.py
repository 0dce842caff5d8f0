"""What goes wrong when the connection is not metric.

With Gamma^1_11 = x2 and all other components zero, the mixed partials of
the compatibility system disagree, so integrating x1-first and x2-first
lands on different tensors.
"""

import numpy as np

from riemopt import (
    ConnectionField,
    Domain,
    EvolutionProblem,
    GridSpec,
    cic_residual,
    evolve_metric,
    make_grid,
    path_independence_check,
    sample_field,
)

grid = make_grid(Domain.unit(2), GridSpec((33, 33)))
gamma = sample_field(grid, [[["x2", "0"], ["0", "0"]], [["0", "0"], ["0", "0"]]], "udd", ConnectionField)
problem = EvolutionProblem(grid, gamma, np.eye(2), mode="primal")

a = evolve_metric(problem, order=(0, 1))
b = evolve_metric(problem, order=(1, 0))
print("g_11 at (1, 1), x1 first:", a.values[-1, -1, 0, 0])
print("g_11 at (1, 1), x2 first:", b.values[-1, -1, 0, 0])
print("largest discrepancy:", path_independence_check(problem))

detail = cic_residual(a, gamma, detail=True)
print("curvature form |R_ijkl + R_jikl|:", detail["curvature"])
print("mixed partial defect:", detail["mixed_partial"])
