"""Closed-form optimal connections, soliton metrics and the pipe geometry.

Two constant connections built from a sign vector ``eps`` admit
exponential ("soliton") inverse metrics:

* conformal: ``Gamma^k_ij = d^k_i eps_j + d^k_j eps_i - d_ij eps^k`` with
  ``g^ij = K d^ij exp(-2 eps.x)``;
* rank one: ``Gamma^k_ij = eps^k eps_i eps_j`` with
  ``g^ij = [a exp(-2n eps.x) + (a^i + a^j)/2 exp(-n eps.x)] eps^i eps^j``
  (no summation, ``sum a^i = 0``), which is only semi-Riemannian at best.

The pipe part works on the solid cylinder ``D^1 x (0, 1)`` in the chart
``(rho, theta, z)``; flows are vector fields given in either frame.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .control import SIGN_ZERO, SignVector
from .fieldexpr import (
    Const,
    EvalError,
    Expr,
    Var,
    add,
    call,
    div,
    evaluate,
    mul,
    neg,
    parse,
    power,
    sub,
    substitute,
)
from .grid import ConnectionField, Grid, InverseMetricField, MetricField, sample_field
from .evolution import compat_rhs

__all__ = [
    "SolitonParams",
    "ClosedFormPair",
    "conformal_connection",
    "conformal_pair",
    "rank_one_pair",
    "verify_closed_form",
    "PipeFlow",
    "field_transform",
    "round_trip_error",
    "PipeMetric",
    "pipe_optimal_metric",
    "PipeMesh",
    "pipe_mesh",
]


@dataclass(frozen=True)
class SolitonParams:
    kind: str
    eps: SignVector
    K: float = 1.0
    alpha: float = 1.0
    alphas: tuple = ()

    def __post_init__(self):
        if not isinstance(self.eps, SignVector):
            object.__setattr__(self, "eps", SignVector(self.eps))
        if self.kind == "conformal":
            if not self.K > 0:
                raise ValueError("K must be positive")
        elif self.kind == "rank-one":
            if len(self.alphas) != self.eps.n:
                raise ValueError(f"need {self.eps.n} constants alpha^i")
            if abs(math.fsum(self.alphas)) > 1e-14:
                raise ValueError("the constants alpha^i must sum to zero")
        else:
            raise ValueError(f"unknown soliton kind {self.kind!r}")


@dataclass
class ClosedFormPair:
    """A constant connection together with its closed-form (inverse) metric."""

    params: SolitonParams
    connection: ConnectionField
    inverse_metric: InverseMetricField
    metric: MetricField | None = None
    semi_riemannian_candidate: bool = False


def _phi(eps: Sequence[int]) -> Expr:
    out = Const(0.0)
    for k, e in enumerate(eps):
        out = add(out, mul(Const(float(e)), Var(k + 1)))
    return out


def conformal_connection(eps) -> np.ndarray:
    """``Gamma[k, i, j] = d^k_i eps_j + d^k_j eps_i - d_ij eps^k`` (Euclidean indices)."""
    e = np.asarray(eps, dtype=float)
    n = e.shape[0]
    d = np.eye(n)
    return (
        np.einsum("ki,j->kij", d, e) + np.einsum("kj,i->kij", d, e) - np.einsum("ij,k->kij", d, e)
    )


def _constant_table(values):
    table = np.empty(values.shape, dtype=object)
    for c in np.ndindex(values.shape):
        table[c] = Const(float(values[c]) + 0.0)
    return table.tolist()


def conformal_pair(grid: Grid, eps, K: float = 1.0) -> ClosedFormPair:
    """Conformal connection with ``g^ij = K d^ij exp(-2 eps.x)`` and its lower metric."""
    params = SolitonParams("conformal", eps, K=K)
    n = grid.n
    if params.eps.n != n:
        raise ValueError(f"eps has {params.eps.n} entries, grid dimension is {n}")
    gamma = ConnectionField(
        grid, np.broadcast_to(conformal_connection(params.eps), tuple(grid.shape) + (n, n, n)),
        exprs=np.array(_constant_table(conformal_connection(params.eps)), dtype=object),
        box_constrained=True,
    )
    phi = _phi(params.eps.eps)
    up = mul(Const(float(K)), call("exp", mul(Const(-2.0), phi)))
    down = mul(Const(1.0 / K), call("exp", mul(Const(2.0), phi)))
    zero = Const(0.0)
    up_table = [[up if i == j else zero for j in range(n)] for i in range(n)]
    down_table = [[down if i == j else zero for j in range(n)] for i in range(n)]
    ginv = sample_field(grid, up_table, "uu", InverseMetricField)
    g = sample_field(grid, down_table, "dd", MetricField)
    return ClosedFormPair(params, gamma, ginv, g)


def rank_one_pair(grid: Grid, eps, alpha: float, alphas: Sequence[float]) -> ClosedFormPair:
    """Rank-one connection ``eps^k eps_i eps_j`` with its soliton tensor ``g^ij``.

    The closed form solves the dual compatibility system only when every
    ``eps^i`` is nonzero; a warning is issued otherwise. The tensor is
    flagged as a semi-Riemannian candidate since it is typically
    indefinite.
    """
    params = SolitonParams("rank-one", eps, alpha=float(alpha), alphas=tuple(float(a) for a in alphas))
    n = grid.n
    if params.eps.n != n:
        raise ValueError(f"eps has {params.eps.n} entries, grid dimension is {n}")
    e = np.asarray(params.eps, dtype=float)
    if np.any(e == 0):
        warnings.warn(
            "rank-one soliton is only exact when every eps^i is nonzero", RuntimeWarning, stacklevel=2
        )
    gvals = np.einsum("k,i,j->kij", e, e, e)
    gamma = ConnectionField(
        grid, np.broadcast_to(gvals, tuple(grid.shape) + (n, n, n)),
        exprs=np.array(_constant_table(gvals), dtype=object),
        box_constrained=True,
    )
    phi = _phi(params.eps.eps)
    e2 = call("exp", mul(Const(-2.0 * n), phi))
    e1 = call("exp", mul(Const(-1.0 * n), phi))
    table = []
    for i in range(n):
        row = []
        for j in range(n):
            coeff = Const(e[i] * e[j])
            inner = add(mul(Const(params.alpha), e2), mul(Const(0.5 * (params.alphas[i] + params.alphas[j])), e1))
            row.append(mul(coeff, inner))
        table.append(row)
    ginv = sample_field(grid, table, "uu", InverseMetricField, semi_riemannian_candidate=True)
    return ClosedFormPair(params, gamma, ginv, None, semi_riemannian_candidate=True)


def verify_closed_form(pair: ClosedFormPair, convention: str = "pde", relative: bool = True) -> float:
    """Residual of the closed form in the dual compatibility system.

    Derivatives are symbolic. ``convention="pde"`` uses the right side
    ``-(g^is Gamma^j_sk + g^js Gamma^i_sk)``; ``"remark"`` uses the same
    expression with a plus sign, which the rank-one closed form does not
    satisfy.

    With ``relative=True`` the largest defect is divided by
    ``max(1, max |d_k g^ij|)``: the exponential profiles reach ``e^18`` on
    the unit cube, where absolute rounding alone exceeds ``1e-12``.
    """
    if convention not in ("pde", "remark"):
        raise ValueError("convention must be 'pde' or 'remark'")
    sign = 1.0 if convention == "pde" else -1.0
    ginv, gamma = pair.inverse_metric, pair.connection
    worst = scale = 0.0
    for k in range(ginv.n):
        lhs = ginv.partial(k).values
        rhs = sign * compat_rhs(ginv.values, gamma.values, k, "dual")
        worst = max(worst, float(np.abs(lhs - rhs).max()))
        scale = max(scale, float(np.abs(lhs).max()))
    return worst / max(1.0, scale) if relative else worst


# --------------------------------------------------------------------------
# Pipe geometry

CARTESIAN_NAMES = {"x": 1, "y": 2, "z": 3}
CYLINDRICAL_NAMES = {"rho": 1, "theta": 2, "z": 3}


@dataclass(frozen=True)
class PipeFlow:
    """A vector field on the cylinder.

    ``frame="cartesian"``: components ``(X, Y, Z)`` over ``(x, y, z)``.
    ``frame="cylindrical"``: components ``(R, T, zeta)`` of
    ``R d/drho + T d/dtheta + zeta d/dz`` over ``(rho, theta, z)``.
    Variables are ``x1, x2, x3`` internally; the names above are accepted
    as aliases when parsing.
    """

    frame: str
    components: tuple

    def __post_init__(self):
        if self.frame not in ("cartesian", "cylindrical"):
            raise ValueError(f"unknown frame {self.frame!r}")
        names = CARTESIAN_NAMES if self.frame == "cartesian" else CYLINDRICAL_NAMES
        comps = tuple(
            parse(c, 3, names) if isinstance(c, str) else (Const(float(c)) if not isinstance(c, Expr) else c)
            for c in self.components
        )
        if len(comps) != 3:
            raise ValueError("a pipe flow has three components")
        object.__setattr__(self, "components", comps)

    @classmethod
    def cartesian(cls, X, Y, Z):
        return cls("cartesian", (X, Y, Z))

    @classmethod
    def cylindrical(cls, R, T, zeta):
        return cls("cylindrical", (R, T, zeta))

    def evaluate(self, a, b, c) -> np.ndarray:
        """Components at the given coordinates of this frame, shape ``(..., 3)``."""
        if self.frame == "cylindrical" and np.any(np.asarray(a) <= 0):
            raise EvalError("cylindrical coordinates need rho > 0")
        return np.stack([np.asarray(evaluate(e, (a, b, c)), float) for e in self.components], -1)


def field_transform(F: PipeFlow, to: str) -> PipeFlow:
    """Re-express a flow in the other frame.

    Cartesian to cylindrical::

        R    = X cos(theta) + Y sin(theta)
        T    = (-X sin(theta) + Y cos(theta)) / rho
        zeta = Z

    with ``X, Y, Z`` evaluated at ``(rho cos(theta), rho sin(theta), z)``;
    and conversely ``X = R x/rho - T y``, ``Y = R y/rho + T x``,
    ``Z = zeta`` with ``rho = sqrt(x^2 + y^2)``, ``theta = atan2(y, x)``.
    """
    if to == F.frame:
        return F
    r, t, z = Var(1), Var(2), Var(3)
    if to == "cylindrical":
        ct, st = call("cos", t), call("sin", t)
        sub_map = {1: mul(r, ct), 2: mul(r, st), 3: z}
        X, Y, Z = (substitute(e, sub_map) for e in F.components)
        R = add(mul(X, ct), mul(Y, st))
        T = div(add(neg(mul(X, st)), mul(Y, ct)), r)
        return PipeFlow("cylindrical", (R, T, Z))
    if to == "cartesian":
        x, y = Var(1), Var(2)
        rho = call("sqrt", add(power(x, Const(2.0)), power(y, Const(2.0))))
        theta = call("atan2", y, x)
        sub_map = {1: rho, 2: theta, 3: z}
        R, T, Zeta = (substitute(e, sub_map) for e in F.components)
        X = sub(mul(R, div(x, rho)), mul(T, y))
        Y = add(mul(R, div(y, rho)), mul(T, x))
        return PipeFlow("cartesian", (X, Y, Zeta))
    raise ValueError(f"unknown frame {to!r}")


def round_trip_error(F: PipeFlow, samples: int = 200, seed: int = 0) -> float:
    """Largest component error of ``F -> other frame -> F`` at random interior points.

    Points are drawn with ``rho`` in (0.05, 1), ``theta`` in
    (-pi + 0.05, pi - 0.05) (the range of atan2, away from the cut) and
    ``z`` in (0, 1).
    """
    rng = np.random.default_rng(seed)
    rho = rng.uniform(0.05, 1.0, samples)
    theta = rng.uniform(-np.pi + 0.05, np.pi - 0.05, samples)
    z = rng.uniform(0.0, 1.0, samples)
    other = "cylindrical" if F.frame == "cartesian" else "cartesian"
    back = field_transform(field_transform(F, other), F.frame)
    if F.frame == "cartesian":
        pts = (rho * np.cos(theta), rho * np.sin(theta), z)
    else:
        pts = (rho, theta, z)
    a = F.evaluate(*pts)
    b = back.evaluate(*pts)
    return float(np.abs(a - b).max())


def _sgn(v):
    v = np.asarray(v, dtype=float)
    return np.where(np.abs(v) < SIGN_ZERO, 0.0, np.sign(v)) + 0.0


class PipeMetric:
    """Optimal conformal structure of the pipe for a given flow.

    The wall sign ``S(theta, z) = sgn R(1, theta, z)`` selects the
    conformal factor ``K exp(2 S rho)``; ``S`` is extended radially
    constant into the pipe.
    """

    def __init__(self, F: PipeFlow, K: float = 1.0):
        if not K > 0:
            raise ValueError("K must be positive")
        self.K = float(K)
        self.cartesian_flow = field_transform(F, "cartesian")
        self.cylindrical_flow = field_transform(F, "cylindrical")
        self.wall_radial = substitute(self.cylindrical_flow.components[0], {1: Const(1.0)})

    def sign(self, theta, z) -> np.ndarray:
        """``S(theta, z) = sgn R(1, theta, z)``."""
        return _sgn(evaluate(self.wall_radial, (1.0, theta, z)))

    def sign_cartesian(self, theta, z) -> np.ndarray:
        """``sgn <N, F>`` at the wall point, with ``N = x d/dx + y d/dy``."""
        theta, z = np.broadcast_arrays(np.asarray(theta, float), np.asarray(z, float))
        x, y = np.cos(theta), np.sin(theta)
        F = self.cartesian_flow.evaluate(x, y, z)
        return _sgn(x * F[..., 0] + y * F[..., 1])

    def conformal_factor(self, rho, theta, z) -> np.ndarray:
        return self.K * np.exp(2.0 * self.sign(theta, z) * np.asarray(rho, float))

    def cylindrical(self, rho, theta, z) -> np.ndarray:
        """``K exp(2 S rho) (drho^2 + dtheta^2 + dz^2)`` as ``(..., 3, 3)`` matrices."""
        f = np.asarray(self.conformal_factor(rho, theta, z))
        return f[..., None, None] * np.eye(3)

    def cartesian(self, x, y, z) -> np.ndarray:
        """``K exp(2 S sqrt(x^2+y^2)) diag(1, x^2 + y^2, 1)``, S taken at the wall angle."""
        x, y, z = np.broadcast_arrays(*(np.asarray(v, float) for v in (x, y, z)))
        rho2 = x * x + y * y
        theta = np.mod(np.arctan2(y, x), 2.0 * np.pi)
        f = self.K * np.exp(2.0 * self.sign(theta, z) * np.sqrt(rho2))
        out = np.zeros(x.shape + (3, 3))
        out[..., 0, 0] = f
        out[..., 1, 1] = f * rho2
        out[..., 2, 2] = f
        return out


def pipe_optimal_metric(F: PipeFlow, K: float = 1.0) -> PipeMetric:
    return PipeMetric(F, K)


@dataclass
class PipeMesh:
    """Triangulated pipe wall; vertex ``(i, j)`` sits at angle ``theta[i]`` and height ``z[j]``."""

    vertices: np.ndarray  # (V, 3)
    faces: np.ndarray  # (F, 3), 0-based
    theta: np.ndarray
    z: np.ndarray
    S: np.ndarray  # (n_theta, n_z)
    radius: np.ndarray  # (n_theta, n_z)

    def to_obj(self, fh) -> None:
        """Wavefront text: ``v x y z`` lines, then ``f i j k`` with 1-based indices."""
        for v in self.vertices:
            fh.write("v " + " ".join(format(c, ".17g") for c in v) + "\n")
        for f in self.faces:
            fh.write("f " + " ".join(str(int(i) + 1) for i in f) + "\n")

    def to_csv(self, fh) -> None:
        fh.write("theta,z,S,r\n")
        for j in range(self.z.size):
            for i in range(self.theta.size):
                fh.write(
                    f"{self.theta[i]:.17g},{self.z[j]:.17g},{self.S[i, j]:.17g},{self.radius[i, j]:.17g}\n"
                )

    def boundary_edges(self) -> set:
        """Edges used by exactly one triangle."""
        count = {}
        for f in self.faces:
            for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
                e = (min(a, b), max(a, b))
                count[e] = count.get(e, 0) + 1
        return {e for e, c in count.items() if c == 1}


def pipe_mesh(F: PipeFlow, amplitude: float = 0.2, resolution=(64, 16), K: float = 1.0) -> PipeMesh:
    """Wall surface with radius ``exp(amplitude * S(theta, z))``.

    Outward flow through the wall widens the pipe and inward flow narrows
    it; where the flow is tangent the radius stays 1.
    """
    if not 0 < amplitude <= 0.5:
        raise ValueError("amplitude must lie in (0, 0.5]")
    nt, nz = (int(v) for v in resolution)
    if nt < 3 or nz < 2:
        raise ValueError("resolution needs at least 3 angles and 2 heights")
    metric = PipeMetric(F, K)
    theta = 2.0 * np.pi * np.arange(nt) / nt
    z = np.linspace(0.0, 1.0, nz)
    T, Z = np.meshgrid(theta, z, indexing="ij")
    S = metric.sign(T, Z)
    r = np.exp(amplitude * S)
    # vertex id = j * nt + i, so z rings are contiguous
    verts = np.stack([r * np.cos(T), r * np.sin(T), Z], -1).transpose(1, 0, 2).reshape(-1, 3)
    faces = []
    for j in range(nz - 1):
        for i in range(nt):
            a = j * nt + i
            b = j * nt + (i + 1) % nt
            c = (j + 1) * nt + (i + 1) % nt
            d = (j + 1) * nt + i
            faces.append((a, b, c))
            faces.append((a, c, d))
    return PipeMesh(verts, np.array(faces, dtype=int), theta, z, S, r)
