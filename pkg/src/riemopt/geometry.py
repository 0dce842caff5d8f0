"""Pointwise tensor calculus on grid fields.

Index conventions used throughout::

    Gamma[..., k, i, j]   = Gamma^k_ij
    R[..., l, k, i, j]    = R^l_kij
                          = d_i Gamma^l_jk - d_j Gamma^l_ik
                            + Gamma^l_is Gamma^s_jk - Gamma^l_js Gamma^s_ik
    Rlow[..., i, j, k, l] = g_is R^s_jkl

Only the combination ``R_ijkl + R_jikl`` enters the integrability test,
and that combination does not depend on the sign convention chosen above.
"""

from __future__ import annotations

import numpy as np

from .grid import (
    ConnectionField,
    GridError,
    InverseMetricField,
    MetricField,
    TensorField,
)

__all__ = [
    "GeometryError",
    "CurvatureField",
    "metric_inverse_det",
    "lower_metric",
    "raise_metric",
    "metric_data",
    "christoffel_from_metric",
    "riemann_lowered",
    "cic_residual",
    "curvature_symmetry_residual",
    "mixed_partial_residual",
    "riemannian_divergence",
    "laplace_beltrami",
]


class GeometryError(GridError):
    pass


class CurvatureField(TensorField):
    """Lowered Riemann tensor ``R_ijkl``."""

    default_name = "R"

    def __init__(self, grid, values, name=None):
        super().__init__(grid, values, "dddd", None, name)


def _first_bad(grid, mask):
    idx = tuple(int(i) for i in np.argwhere(mask)[0])
    return tuple(float(v) for v in grid.index_to_point(idx))


def _invert(grid, values, what):
    det = np.linalg.det(values)
    bad = ~np.isfinite(det) | (det == 0)
    if np.any(bad):
        raise GeometryError(f"{what} is singular at {_first_bad(grid, bad)}")
    inv = np.linalg.inv(values)
    return 0.5 * (inv + np.swapaxes(inv, -1, -2)), det


def metric_inverse_det(g: MetricField):
    """Return ``(g^-1, det g, sqrt(det g))`` for a metric with positive determinant."""
    if not isinstance(g, MetricField):
        raise GeometryError("metric_inverse_det expects a MetricField")
    grid = g.grid
    det = np.linalg.det(g.values)
    bad = ~(det > 0)
    if np.any(bad):
        raise GeometryError(
            f"det g = {det[bad].flat[0]:.6g} is not positive at {_first_bad(grid, bad)};"
            " sqrt(det g) is undefined"
        )
    inv, _ = _invert(grid, g.values, "metric")
    return (
        InverseMetricField(grid, inv),
        TensorField(grid, det, "", name="detg"),
        TensorField(grid, np.sqrt(det), "", name="sqrtg"),
    )


def lower_metric(ginv: InverseMetricField) -> MetricField:
    """Numerical inverse of ``g^ij`` (nondegenerate, any signature)."""
    inv, _ = _invert(ginv.grid, ginv.values, "inverse metric")
    return MetricField(ginv.grid, inv)


def raise_metric(g: MetricField) -> InverseMetricField:
    inv, _ = _invert(g.grid, g.values, "metric")
    return InverseMetricField(g.grid, inv)


class MetricData:
    """Lower/upper metric values plus their first partials on the grid.

    Partials come from the field that was supplied (symbolic when it is
    expression backed); the other side follows from
    ``d(g^-1) = -g^-1 (dg) g^-1``.
    """

    def __init__(self, g):
        self.grid = g.grid
        n = g.grid.n
        if isinstance(g, MetricField):
            self.lower = g.values
            self.upper, _ = _invert(g.grid, g.values, "metric")
            self.dlower = [g.partial(k).values for k in range(n)]
            self.dupper = [-self.upper @ d @ self.upper for d in self.dlower]
        elif isinstance(g, InverseMetricField):
            self.upper = g.values
            self.lower, _ = _invert(g.grid, g.values, "inverse metric")
            self.dupper = [g.partial(k).values for k in range(n)]
            self.dlower = [-self.lower @ d @ self.lower for d in self.dupper]
        else:
            raise GeometryError("expected a MetricField or InverseMetricField")
        self.det = np.linalg.det(self.lower)

    def sqrt_det(self):
        bad = ~(self.det > 0)
        if np.any(bad):
            raise GeometryError(
                f"det g is not positive at {_first_bad(self.grid, bad)};"
                " sqrt(det g) is undefined"
            )
        return np.sqrt(self.det)

    def dlog_sqrt_det(self):
        """``d_k log sqrt(g) = 1/2 g^ab d_k g_ab`` for each axis k."""
        return [0.5 * np.einsum("...ab,...ab->...", self.upper, d) for d in self.dlower]


def metric_data(g) -> MetricData:
    return MetricData(g)


def christoffel_from_metric(g) -> ConnectionField:
    """Levi-Civita connection ``1/2 g^ks (d_i g_sj + d_j g_si - d_s g_ij)``."""
    md = MetricData(g)
    D = np.stack(md.dlower, axis=-1)  # D[..., a, b, k] = d_k g_ab
    T = np.swapaxes(D, -1, -2) + D - np.moveaxis(D, -1, -3)
    # T[..., s, i, j] = d_i g_sj + d_j g_si - d_s g_ij
    gamma = 0.5 * np.einsum("...ks,...sij->...kij", md.upper, T)
    gamma = 0.5 * (gamma + np.swapaxes(gamma, -1, -2))
    return ConnectionField(g.grid, gamma)


def _connection_partials(gamma: ConnectionField) -> np.ndarray:
    # P[..., l, j, k, i] = d_i Gamma^l_jk
    return np.stack([gamma.partial(i).values for i in range(gamma.n)], axis=-1)


def _riemann_up(gamma: ConnectionField) -> np.ndarray:
    G = gamma.values
    P = _connection_partials(gamma)
    A = np.einsum("...ljki->...lkij", P)
    Q = np.einsum("...lis,...sjk->...lkij", G, G)
    return A - np.swapaxes(A, -1, -2) + Q - np.swapaxes(Q, -1, -2)


def _lower_values(g) -> np.ndarray:
    if isinstance(g, MetricField):
        return g.values
    if isinstance(g, InverseMetricField):
        return _invert(g.grid, g.values, "inverse metric")[0]
    raise GeometryError("expected a MetricField or InverseMetricField")


def riemann_lowered(g, gamma: ConnectionField) -> CurvatureField:
    """``R_ijkl = g_is R^s_jkl`` of the connection, lowered with ``g``."""
    if g.grid != gamma.grid:
        raise GeometryError("metric and connection live on different grids")
    Rup = _riemann_up(gamma)
    Rlow = np.einsum("...is,...sjkl->...ijkl", _lower_values(g), Rup)
    return CurvatureField(g.grid, Rlow)


def curvature_symmetry_residual(g, gamma: ConnectionField) -> float:
    """``max |R_ijkl + R_jikl|`` over the grid."""
    R = riemann_lowered(g, gamma).values
    return float(np.abs(R + np.swapaxes(R, -4, -3)).max())


def mixed_partial_residual(g, gamma: ConnectionField) -> float:
    """Largest defect of ``d_l(F_k) = d_k(F_l)`` for the compatibility right side.

    ``F_k(g)_ij = g_is Gamma^s_jk + g_js Gamma^s_ik``; derivatives of g
    are replaced through the system itself, so this is the integrability
    condition of the system rather than a property of the sampled g.
    """
    from .evolution import compat_rhs

    G = _lower_values(g)
    n = g.grid.n
    dgam = [gamma.partial(l).values for l in range(n)]
    rhs = [compat_rhs(G, gamma.values, k, "primal") for k in range(n)]
    worst = 0.0
    for k in range(n):
        for l in range(k + 1, n):
            # d_l F_k = F_k evaluated on (d_l g) plus the d_l Gamma term
            dl_fk = compat_rhs(rhs[l], gamma.values, k, "primal") + compat_rhs(
                G, dgam[l], k, "primal"
            )
            dk_fl = compat_rhs(rhs[k], gamma.values, l, "primal") + compat_rhs(
                G, dgam[k], l, "primal"
            )
            worst = max(worst, float(np.abs(dl_fk - dk_fl).max()))
    return worst


def cic_residual(g, gamma: ConnectionField, detail: bool = False):
    """Integrability residual of the metric compatibility system.

    Returns the larger of the curvature form ``max |R_ijkl + R_jikl|``
    and the direct mixed-partial defect. With ``detail=True`` returns a
    dict with both.
    """
    curv = curvature_symmetry_residual(g, gamma)
    mixed = mixed_partial_residual(g, gamma)
    if detail:
        return {"curvature": curv, "mixed_partial": mixed, "residual": max(curv, mixed)}
    return max(curv, mixed)


def riemannian_divergence(X: TensorField, g) -> TensorField:
    """``Div X = (1/sqrt g) d_i (sqrt g X^i)``, expanded by the product rule."""
    if X.signature != "u":
        raise GeometryError("riemannian_divergence needs a vector field")
    md = MetricData(g)
    md.sqrt_det()
    dlog = md.dlog_sqrt_det()
    out = np.zeros(X.grid.shape)
    for i in range(X.n):
        out += X.partial(i).values[..., i] + X.values[..., i] * dlog[i]
    return TensorField(X.grid, out, "", name="divX")


def laplace_beltrami(f: TensorField, g) -> TensorField:
    """``Delta f = (1/sqrt g) d_i (sqrt g g^ij d_j f)``."""
    if f.rank != 0:
        raise GeometryError("laplace_beltrami needs a scalar field")
    md = MetricData(g)
    md.sqrt_det()
    n = f.n
    dlog = md.dlog_sqrt_det()
    df = [f.partial(j) for j in range(n)]
    grad = np.stack([d.values for d in df], axis=-1)
    hess = np.stack([np.stack([df[j].partial(i).values for j in range(n)], -1) for i in range(n)], -2)
    # hess[..., i, j] = d_i d_j f
    out = np.einsum("...ij,...ij->...", md.upper, hess)
    for i in range(n):
        out = out + np.einsum("...j,...j->...", md.dupper[i][..., i, :], grad)
        out = out + dlog[i] * np.einsum("...j,...j->...", md.upper[..., i, :], grad)
    return TensorField(f.grid, out, "", name="lapf")
