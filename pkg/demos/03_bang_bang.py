"""Bang-bang connections for flux functionals.

With the costate p = C (x) g the control Hamiltonian is linear in Gamma
with coefficient -C^c on each trace component Gamma^a_ac. On the box
[-1, 1] its maximum sits on a vertex: Gamma^i_ij = sgn(-C^j).
"""

import numpy as np

from riemopt import brute_force_hamiltonian_max
from riemopt.control import bang_bang_at, hamiltonian_value

C = np.array([3.0, -2.0])
gamma, eps, arbitrary = bang_bang_at(C)
print("switching signs:", eps)
print("Hamiltonian at the bang-bang vertex:", hamiltonian_value(C, gamma))

best, argmaxes = brute_force_hamiltonian_max(C, 2)
print("brute-force maximum over all", 3 ** 6, "vertices:", best)
print("number of maximizing vertices:", len(argmaxes))
print("free components (k, i, j), 1-based:", [tuple(int(v) + 1 for v in ix) for ix in np.argwhere(arbitrary)])

# Scaling C does not move the argmax
for s in (0.01, 1.0, 100.0):
    g2, _, _ = bang_bang_at(s * C)
    print(f"scale {s:>6}: same vertex = {np.array_equal(g2, gamma)}")

# A zero coefficient frees more components
print("C = (1, 0):", brute_force_hamiltonian_max(np.array([1.0, 0.0]), 2)[1].shape[0], "optimal vertices")
