"""Shared oracles and generators for the test suite."""

import numpy as np

from riemopt.fieldexpr import evaluate

UNARY = ("sin", "cos", "exp_small", "sq", "recip_shift")
BINARY = ("+", "-", "*")


def random_smooth_expr(rng, n, depth=3):
    """Random expression string that is smooth and of moderate size on [0.2, 0.8]^n."""
    if depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.7:
            return f"x{rng.integers(1, n + 1)}"
        return f"{rng.uniform(-2, 2):.3f}"
    if rng.random() < 0.5:
        a = random_smooth_expr(rng, n, depth - 1)
        op = UNARY[rng.integers(len(UNARY))]
        if op == "exp_small":
            return f"exp(0.5*sin({a}))"
        if op == "sq":
            return f"({a})^2"
        if op == "recip_shift":
            return f"1/(2 + cos({a}))"
        return f"{op}({a})"
    a = random_smooth_expr(rng, n, depth - 1)
    b = random_smooth_expr(rng, n, depth - 1)
    return f"({a}) {BINARY[rng.integers(len(BINARY))]} ({b})"


def central_difference(e, x, k, h=1e-5):
    """d/dx_k (k 1-based) of an expression by the symmetric quotient."""
    xp, xm = np.array(x, float), np.array(x, float)
    xp[k - 1] += h
    xm[k - 1] -= h
    return (evaluate(e, xp) - evaluate(e, xm)) / (2 * h)


def conformal_inverse_metric_values(grid, eps, K):
    """Independent evaluation of K delta exp(-2 eps.x) on the grid."""
    coords = np.stack(grid.coords(), -1)
    phi = coords @ np.asarray(eps, float)
    return K * np.exp(-2.0 * phi)[..., None, None] * np.eye(grid.n)


def rank_one_values(grid, eps, alpha, alphas):
    """Independent evaluation of the rank-one soliton tensor g^ij."""
    n = grid.n
    e = np.asarray(eps, float)
    a = np.asarray(alphas, float)
    phi = np.stack(grid.coords(), -1) @ e
    out = np.empty(tuple(grid.shape) + (n, n))
    for i in range(n):
        for j in range(n):
            out[..., i, j] = e[i] * e[j] * (
                alpha * np.exp(-2 * n * phi) + 0.5 * (a[i] + a[j]) * np.exp(-n * phi)
            )
    return out
