"""Interior and boundary forms of the total divergence.

For g = exp(2(x1 + x2)) d and X = (1, 0) on the unit square both integrals
equal (e^2 - 1)^2 / 2. Composite Simpson on the interior and on each face
converges at fourth order.
"""

import math

from riemopt import BolzaSpec, Domain, GridSpec, conformal_pair, make_grid, sample_field, total_flux_functional
from riemopt.grid import constant_field

exact = (math.e ** 2 - 1) ** 2 / 2
print(f"exact value {exact:.10f}")
prev = None
for m in (9, 17, 33, 65):
    grid = make_grid(Domain.unit(2), GridSpec((m, m)))
    pair = conformal_pair(grid, (1, 1), 1.0)
    X = constant_field(grid, [1.0, 0.0], "u")
    interior, boundary = total_flux_functional(BolzaSpec("divergence", X), pair.metric)
    err = abs(boundary - exact)
    ratio = "" if prev is None else f"  ratio {prev / err:5.1f}"
    print(f"m={m:3d}  interior {interior:.10f}  boundary {boundary:.10f}{ratio}")
    prev = err

# The total Laplacian works the same way
grid = make_grid(Domain.unit(2), GridSpec((33, 33)))
pair = conformal_pair(grid, (1, -1), 1.0)
f = sample_field(grid, "sin(x1)*x2^2", "")
interior, boundary = total_flux_functional(BolzaSpec("laplacian", f), pair.metric)
print(f"total Laplacian: interior {interior:.10f}, boundary {boundary:.10f}")
