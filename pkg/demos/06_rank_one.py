"""The rank-one connection Gamma^k_ij = e^k e_i e_j.

Its exponential solution of the dual system is a symmetric tensor that is
can be indefinite, so at best a semi-Riemannian structure. The closed
form satisfies the system with the minus sign; flipping the sign of the
right side leaves a residual of exactly twice the derivative.
"""

import numpy as np

from riemopt import Domain, GridSpec, make_grid, rank_one_pair, verify_closed_form

grid = make_grid(Domain.unit(2), GridSpec((17, 17)))
pair = rank_one_pair(grid, (1, -1), alpha=1.0, alphas=(0.4, -0.4))
print("relative residual, minus sign:", verify_closed_form(pair, "pde"))
print("relative residual, plus sign:", verify_closed_form(pair, "remark"))

ev = np.linalg.eigvalsh(pair.inverse_metric.values)
print("eigenvalue range of g^ij:", ev.min(), ev.max())
neg = int(np.sum(ev[..., 0] < 0))
print(f"{neg} of {ev.shape[0] * ev.shape[1]} grid points carry a negative eigenvalue")
