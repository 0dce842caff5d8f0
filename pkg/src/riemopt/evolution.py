"""Forward integration of the controlled metric compatibility systems.

Primal form, for the metric::

    d_k g_ij = g_is Gamma^s_jk + g_js Gamma^s_ik

Dual form, for the inverse metric::

    d_k g^ij = -(g^is Gamma^j_sk + g^js Gamma^i_sk)

Both are integrated from the lower corner of the box by a tensor-product
sweep of classical RK4, one grid cell per step. The adjoint systems are
underdetermined as evolution equations, so they are only exposed as
residual checks for candidate costates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid import (
    ConnectionField,
    CostateField,
    Grid,
    GridError,
    InverseMetricField,
    MetricField,
    TensorField,
)

__all__ = [
    "EvolutionError",
    "EvolutionProblem",
    "compat_rhs",
    "compat_residual",
    "evolve_metric",
    "path_independence_check",
    "adjoint_defect",
    "adjoint_residual",
    "duality_flux_divergence",
    "max_relative_error",
]

BLOWUP = 1e100
MODES = ("primal", "dual")


class EvolutionError(GridError):
    pass


def compat_rhs(state, gamma, k: int, mode: str = "primal") -> np.ndarray:
    """Right-hand side ``d_k`` of the state for a connection value.

    ``state`` has shape ``(..., n, n)`` and ``gamma`` shape
    ``(..., n, n, n)`` (indexed ``[k, i, j]``); leading axes broadcast.
    The result is symmetric by construction.
    """
    gk = np.asarray(gamma)[..., :, :, k]  # gk[..., s, j] = Gamma^s_jk
    if mode == "primal":
        a = np.matmul(state, gk)  # g_is Gamma^s_jk
        return a + np.swapaxes(a, -1, -2)
    if mode == "dual":
        b = np.matmul(state, np.swapaxes(gk, -1, -2))  # g^is Gamma^j_sk
        return -(b + np.swapaxes(b, -1, -2))
    raise EvolutionError(f"unknown mode {mode!r}")


@dataclass
class EvolutionProblem:
    """Initial value problem for ``mode`` in {"primal", "dual"}.

    ``eta`` is the state at the lower corner of the grid: ``g_ij`` in
    primal mode, ``g^ij`` in dual mode.
    """

    grid: Grid
    connection: ConnectionField
    eta: np.ndarray
    mode: str = "primal"

    def __post_init__(self):
        self.eta = np.asarray(self.eta, dtype=float)
        n = self.grid.n
        if self.mode not in MODES:
            raise EvolutionError(f"unknown mode {self.mode!r}")
        if self.eta.shape != (n, n):
            raise EvolutionError(f"eta must be {n}x{n}")
        if not np.array_equal(self.eta, self.eta.T):
            raise EvolutionError("eta must be symmetric")
        if self.connection.grid != self.grid:
            raise EvolutionError("connection lives on a different grid")


def _check_blowup(grid, state, where):
    bad = ~np.isfinite(state) | (np.abs(state) > BLOWUP)
    if np.any(bad):
        bad_pts = np.any(bad, axis=(-1, -2))
        idx = tuple(int(i) for i in np.argwhere(bad_pts)[0])
        full = list(where)
        j = 0
        for k in range(grid.n):
            if full[k] is None:
                full[k] = idx[j]
                j += 1
        x = tuple(float(v) for v in grid.index_to_point(full))
        raise EvolutionError(f"state blow-up (|g| > {BLOWUP:g}) at {x}")


def evolve_metric(problem: EvolutionProblem, order: Sequence[int] | None = None):
    """Fill the grid with the solution of the compatibility system.

    Axis ``order[0]`` is integrated first along the line through the lower
    corner, then ``order[1]`` from every point of that line, and so on.
    Returns a :class:`MetricField` (primal) or :class:`InverseMetricField`.
    """
    grid = problem.grid
    n = grid.n
    order = tuple(range(n)) if order is None else tuple(order)
    if sorted(order) != list(range(n)):
        raise EvolutionError(f"order must be a permutation of 0..{n - 1}")
    gamma = problem.connection
    mode = problem.mode
    G = np.full(tuple(grid.shape) + (n, n), np.nan)
    G[(0,) * n] = problem.eta

    done = []
    for a in order:
        h = grid.h[a]
        # coordinates of the slab: sweep axes free, the rest at index 0
        slab_idx = [None if k in done else 0 for k in range(n)]
        base = []
        for k in range(n):
            if k in done:
                shp = [1] * len(done)
                shp[sorted(done).index(k)] = grid.shape[k]
                base.append(grid.axes[k].reshape(shp))
            else:
                base.append(np.float64(grid.domain.x0[k]))

        def at(xa):
            pts = list(base)
            pts[a] = np.float64(xa)
            shape = np.broadcast_shapes(*(np.shape(p) for p in pts))
            return gamma.at([np.broadcast_to(p, shape) for p in pts])

        def index(i):
            return tuple(slice(None) if k in done else (i if k == a else 0) for k in range(n))

        y = G[index(0)]
        x0 = grid.axes[a][0]
        for i in range(grid.shape[a] - 1):
            xa = x0 + i * h
            g0, gh, g1 = at(xa), at(xa + 0.5 * h), at(xa + h)
            k1 = compat_rhs(y, g0, a, mode)
            k2 = compat_rhs(y + 0.5 * h * k1, gh, a, mode)
            k3 = compat_rhs(y + 0.5 * h * k2, gh, a, mode)
            k4 = compat_rhs(y + h * k3, g1, a, mode)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            where = list(slab_idx)
            where[a] = i + 1
            _check_blowup(grid, y, where)
            G[index(i + 1)] = y
        done.append(a)

    G = 0.5 * (G + np.swapaxes(G, -1, -2))
    if mode == "primal":
        return MetricField(grid, G)
    return InverseMetricField(grid, G)


def path_independence_check(problem: EvolutionProblem) -> float:
    """Max componentwise difference between forward and reversed sweep orders."""
    n = problem.grid.n
    a = evolve_metric(problem, tuple(range(n)))
    b = evolve_metric(problem, tuple(reversed(range(n))))
    return float(np.abs(a.values - b.values).max())


def max_relative_error(field: TensorField, reference: TensorField) -> float:
    """Largest pointwise ``max_c |a - b| / max_c |b|`` (c runs over components)."""
    a, b = np.asarray(field.values), np.asarray(reference.values)
    axes = tuple(range(field.grid.n, b.ndim))
    den = np.maximum(np.abs(b).max(axis=axes), np.finfo(float).tiny)
    return float((np.abs(a - b).max(axis=axes) / den).max())


def compat_residual(state, gamma: ConnectionField, mode: str | None = None) -> float:
    """``max |d_k state - rhs_k|`` over grid, components and k.

    ``mode`` defaults to primal for a :class:`MetricField` and dual for
    an :class:`InverseMetricField`.
    """
    if mode is None:
        mode = "dual" if isinstance(state, InverseMetricField) else "primal"
    worst = 0.0
    for k in range(state.n):
        lhs = state.partial(k).values
        rhs = compat_rhs(state.values, gamma.values, k, mode)
        worst = max(worst, float(np.abs(lhs - rhs).max()))
    return worst


def adjoint_defect(p: CostateField, gamma: ConnectionField) -> np.ndarray:
    """Pointwise ``div_k p - rhs`` of the adjoint system selected by ``p.variant``.

    - ``upper-raw``: ``d_k lam^ijk = -(lam^isk Gamma^j_sk + lam^sik Gamma^j_sk)``
    - ``upper-sym``: ``d_k p^ijk = -(p^isk Gamma^j_sk + p^jsk Gamma^i_sk)``
    - ``lower``:     ``d_k p^k_ij = p^k_is Gamma^s_jk + p^k_js Gamma^s_ik``

    Returns an array of shape ``grid.shape + (n, n)``.
    """
    if p.grid != gamma.grid:
        raise EvolutionError("costate and connection live on different grids")
    n = p.n
    P, G = p.values, gamma.values
    if p.variant == "lower":
        div = sum(p.partial(k).values[..., k, :, :] for k in range(n))
        a = np.einsum("...kis,...sjk->...ij", P, G)
        return div - (a + np.swapaxes(a, -1, -2))
    div = sum(p.partial(k).values[..., :, :, k] for k in range(n))
    if p.variant == "upper-sym":
        a = np.einsum("...isk,...jsk->...ij", P, G)
        return div + a + np.swapaxes(a, -1, -2)
    if p.variant == "upper-raw":
        a = np.einsum("...isk,...jsk->...ij", P, G)
        b = np.einsum("...sik,...jsk->...ij", P, G)
        return div + a + b
    raise EvolutionError(f"unknown costate variant {p.variant!r}")


def adjoint_residual(p: CostateField, gamma: ConnectionField, variant: str | None = None) -> float:
    """Max absolute adjoint defect over the grid."""
    if variant is not None and variant != p.variant:
        raise EvolutionError(f"costate is {p.variant!r}, not {variant!r}")
    return float(np.abs(adjoint_defect(p, gamma)).max())


def duality_flux_divergence(y: MetricField, p: CostateField) -> float:
    """Max over interior points of ``|d_k S^k|`` with ``S^k = y_ij p^ijk``.

    For a raw costate this is the field ``Q``. When both inputs are
    expression backed the divergence is taken by the product rule with
    exact partials; otherwise ``S`` is differenced on the grid.
    """
    if p.variant == "lower":
        raise EvolutionError("duality flux needs an upper costate (p^ijk or lambda^ijk)")
    if y.signature != "dd" or y.grid != p.grid:
        raise EvolutionError("y must be a (0,2) field on the costate grid")
    n = y.n
    if y.backed and p.backed:
        div = np.zeros(y.grid.shape)
        for k in range(n):
            dy, dp = y.partial(k).values, p.partial(k).values
            div += np.einsum("...ij,...ij->...", dy, p.values[..., k])
            div += np.einsum("...ij,...ij->...", y.values, dp[..., k])
    else:
        S = np.einsum("...ij,...ijk->...k", y.values, p.values)
        Sf = TensorField(y.grid, S, "u")
        div = sum(Sf.partial(k).values[..., k] for k in range(n))
    interior = tuple(slice(1, -1) for _ in range(n))
    return float(np.abs(div[interior]).max(initial=0.0))
