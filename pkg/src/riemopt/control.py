"""Hamiltonians, bang-bang synthesis and maximum-principle certificates.

The flux problems use the dual formulation: the state is ``g^ij``, the
costate ``p^k_ij`` and the reduced Hamiltonian (no running cost) is::

    H'(g^-1, Gamma, p) = -g^is Gamma^j_sk p^k_ij

With the ansatz ``p^k_ij = C^k g_ij`` this collapses to the switching
function ``-C^k Gamma^s_ks``, which is linear in the control and is
maximized over the box ``[-1, 1]`` at a vertex.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .evolution import adjoint_residual, compat_residual
from .fieldexpr import mul
from .geometry import MetricData, laplace_beltrami, riemannian_divergence
from .grid import (
    ConnectionField,
    CostateField,
    GridError,
    InverseMetricField,
    MetricField,
    TensorField,
    boundary_flux,
    integrate_interior,
    sample_field,
)

__all__ = [
    "ControlError",
    "SIGN_ZERO",
    "SignVector",
    "switching_signs",
    "bang_bang_at",
    "bang_bang_synthesize",
    "BangBang",
    "switching_hamiltonian",
    "hamiltonian_value",
    "reduced_hamiltonian",
    "hamiltonian_coefficients",
    "brute_force_hamiltonian_max",
    "costate_from_C",
    "solenoidal_residual",
    "BolzaSpec",
    "total_flux_functional",
    "boundary_residual",
    "matched_divergence_field",
    "Clause",
    "CertificateReport",
    "mp_certificate",
    "DEFAULT_TOLERANCES",
]

# |C^l| below this counts as a zero switching coefficient
SIGN_ZERO = 1e-12

DEFAULT_TOLERANCES = {
    "evolution": 1e-8,
    "adjoint": 1e-8,
    "hamiltonian": 1e-12,
    "boundary": 1e-8,
    "solenoidal": 1e-10,
}


class ControlError(GridError):
    pass


@dataclass(frozen=True)
class SignVector:
    """Entries in {-1, 0, 1}; zero entries mark arbitrary directions."""

    eps: tuple

    def __post_init__(self):
        eps = tuple(self.eps)
        for e in eps:
            if e not in (-1, 0, 1):
                raise ControlError("sign vector entries must be -1, 0, or 1")
        object.__setattr__(self, "eps", tuple(int(e) for e in eps))

    @property
    def n(self):
        return len(self.eps)

    @property
    def arbitrary(self):
        return tuple(e == 0 for e in self.eps)

    def __array__(self, dtype=None, copy=None):
        return np.array(self.eps, dtype=dtype or float)

    def __iter__(self):
        return iter(self.eps)

    def __len__(self):
        return len(self.eps)


def switching_signs(C, direction: str = "max") -> np.ndarray:
    """``sgn(-C)`` when maximizing, ``sgn(C)`` when minimizing (|C| < SIGN_ZERO -> 0)."""
    C = np.asarray(C, dtype=float)
    if direction == "max":
        eps = -np.sign(C)
    elif direction == "min":
        eps = np.sign(C)
    else:
        raise ControlError(f"direction must be 'max' or 'min', not {direction!r}")
    eps[np.abs(C) < SIGN_ZERO] = 0.0
    return eps + 0.0


def bang_bang_at(C, direction: str = "max"):
    """Bang-bang connection for switching coefficients ``C`` (shape ``(..., n)``).

    Returns ``(Gamma, eps, arbitrary)`` where ``Gamma[..., k, i, j]``
    equals ``eps_j`` if ``k == i`` and ``eps_i`` if ``k == j`` (whenever
    that sign is nonzero); all other components are arbitrary, set to 0
    and flagged in the boolean mask.
    """
    eps = switching_signs(C, direction)
    n = eps.shape[-1]
    lead = eps.shape[:-1]
    gamma = np.zeros(lead + (n, n, n))
    arbitrary = np.ones(lead + (n, n, n), dtype=bool)
    for k, i, j in itertools.product(range(n), repeat=3):
        if k == i:
            set_ = eps[..., j] != 0
            gamma[..., k, i, j] = np.where(set_, eps[..., j], gamma[..., k, i, j])
            arbitrary[..., k, i, j] &= ~set_
        if k == j:
            set_ = eps[..., i] != 0
            gamma[..., k, i, j] = np.where(set_, eps[..., i], gamma[..., k, i, j])
            arbitrary[..., k, i, j] &= ~set_
    return gamma, eps, arbitrary


@dataclass
class BangBang:
    connection: ConnectionField
    eps: np.ndarray
    arbitrary: np.ndarray


def bang_bang_synthesize(C: TensorField, direction: str = "max") -> BangBang:
    """Pointwise bang-bang synthesis on the grid of the vector field ``C``."""
    if C.signature != "u":
        raise ControlError("C must be a vector field")
    gamma, eps, arbitrary = bang_bang_at(C.values, direction)
    return BangBang(ConnectionField(C.grid, gamma, box_constrained=True), eps, arbitrary)


def switching_hamiltonian(C, gamma) -> np.ndarray:
    """``-C^k Gamma^s_ks``, vectorized over leading axes."""
    return -np.einsum("...k,...sks->...", np.asarray(C, float), np.asarray(gamma, float))


def hamiltonian_value(C: Sequence[float], gamma) -> float:
    """``-C^k Gamma^s_ks`` at one point, correctly rounded (``math.fsum``)."""
    C = np.asarray(C, float)
    gamma = np.asarray(gamma, float)
    n = C.shape[0]
    return -math.fsum(C[k] * gamma[s, k, s] for k in range(n) for s in range(n)) + 0.0


def reduced_hamiltonian(state, gamma, p, mode: str = "dual", running_cost=0.0):
    """Reduced control Hamiltonian at points (arrays with matching leading axes).

    primal: ``X + g_is Gamma^s_jk p^ijk`` with ``p`` stored ``[i, j, k]``;
    dual:   ``X - g^is Gamma^j_sk p^k_ij`` with ``p`` stored ``[k, i, j]``.
    """
    state, gamma, p = (np.asarray(a, float) for a in (state, gamma, p))
    if mode == "primal":
        return running_cost + np.einsum("...is,...sjk,...ijk->...", state, gamma, p)
    if mode == "dual":
        return running_cost - np.einsum("...is,...jsk,...kij->...", state, gamma, p)
    raise ControlError(f"unknown mode {mode!r}")


def hamiltonian_coefficients(state, p, mode: str = "dual") -> np.ndarray:
    """Coefficients ``c`` with ``H(Gamma) = X + sum c[a,b,c] Gamma^a_bc``."""
    state, p = np.asarray(state, float), np.asarray(p, float)
    if mode == "primal":
        return np.einsum("...is,...ijk->...sjk", state, p)
    if mode == "dual":
        return -np.einsum("...is,...kij->...jsk", state, p)
    raise ControlError(f"unknown mode {mode!r}")


def _independent(n):
    return [(k, i, j) for k in range(n) for i in range(n) for j in range(i, n)]


def _reduce_coefficients(coef, n):
    """Coefficients on the independent components Gamma^k_ij, i <= j."""
    return np.stack(
        [coef[..., k, i, j] + (coef[..., k, j, i] if i != j else 0.0) for k, i, j in _independent(n)],
        axis=-1,
    )


def _expand(vertices, n):
    """Independent-component rows -> symmetric (m, n, n, n) connections."""
    out = np.zeros((vertices.shape[0], n, n, n))
    for col, (k, i, j) in enumerate(_independent(n)):
        out[:, k, i, j] = vertices[:, col]
        out[:, k, j, i] = vertices[:, col]
    return out


_VERTEX_CACHE = {}


def _vertices(count):
    if count not in _VERTEX_CACHE:
        # rows in lexicographic order over (-1, 0, 1)
        _VERTEX_CACHE[count] = np.indices((3,) * count).reshape(count, -1).T - 1.0
    return _VERTEX_CACHE[count]


MAX_BRUTE_FORCE_N = 3


def _vertex_max(coef_ind, keep_argmax=True, rtol=1e-12):
    """Exhaustive max of ``v . coef`` over v in {-1,0,1}^N (split enumeration)."""
    N = coef_ind.shape[0]
    head = min(N, 6)
    outer = _vertices(head)
    inner = _vertices(N - head) if N > head else np.zeros((1, 0))
    outer_vals = outer @ coef_ind[:head]
    inner_vals = inner @ coef_ind[head:]
    best = -np.inf
    for ov in outer_vals:
        best = max(best, float(np.max(ov + inner_vals)))
    if not keep_argmax:
        return best, None
    cut = best - rtol * (1.0 + abs(best))
    rows = []
    for o, ov in enumerate(outer_vals):
        hit = np.nonzero(ov + inner_vals >= cut)[0]
        if hit.size:
            rows.append(np.hstack([np.broadcast_to(outer[o], (hit.size, head)), inner[hit]]))
    return best, np.vstack(rows)


def brute_force_hamiltonian_max(C: Sequence[float], n: int | None = None):
    """Enumerate every symmetric connection with components in {-1, 0, 1}.

    Returns ``(value, argmax)`` where ``value`` is the maximum of
    ``-C^k Gamma^s_ks`` and ``argmax`` holds all attaining connections,
    shape ``(m, n, n, n)``. There are ``3^(n^2 (n+1)/2)`` candidates, so
    ``n`` is limited to 3.
    """
    C = np.asarray(C, dtype=float).ravel()
    n = C.shape[0] if n is None else n
    if C.shape[0] != n:
        raise ControlError(f"C has {C.shape[0]} entries, expected {n}")
    if n > MAX_BRUTE_FORCE_N:
        raise ControlError(f"brute force enumeration limited to n <= {MAX_BRUTE_FORCE_N}")
    coef = np.zeros((n, n, n))
    for k in range(n):
        for s in range(n):
            coef[s, k, s] += -C[k]
    _, rows = _vertex_max(_reduce_coefficients(coef, n))
    argmax = _expand(rows, n)
    return hamiltonian_value(C, argmax[0]), argmax


def costate_from_C(C: TensorField, g) -> CostateField:
    """Lower costate ``p^k_ij = C^k g_ij``.

    ``g`` may be a metric or an inverse metric (then inverted
    numerically). The result is expression backed when ``C`` and a
    backed :class:`MetricField` are given.
    """
    if C.signature != "u":
        raise ControlError("C must be a vector field")
    n = C.n
    if isinstance(g, MetricField) and C.backed and g.backed:
        table = np.empty((n, n, n), dtype=object)
        for k, i, j in itertools.product(range(n), repeat=3):
            table[k, i, j] = mul(C.exprs[k], g.exprs[i, j])
        return sample_field(C.grid, table.tolist(), "udd", CostateField, variant="lower")
    lower = MetricData(g).lower if not isinstance(g, MetricField) else g.values
    values = np.einsum("...k,...ij->...kij", C.values, lower)
    return CostateField(C.grid, values, "lower")


def matched_divergence_field(C: TensorField, g, boundary_sign: str = "paper") -> TensorField:
    """Vector field ``X = s C / sqrt(g)`` that meets the divergence transversality condition."""
    if boundary_sign not in ("paper", "derived"):
        raise ControlError("boundary_sign must be 'paper' or 'derived'")
    s = 1.0 if boundary_sign == "paper" else -1.0
    sqrtg = MetricData(g).sqrt_det()
    return TensorField(C.grid, s * C.values / sqrtg[..., None], "u", name="X")


def solenoidal_residual(C: TensorField) -> float:
    """``max |d_k C^k|`` (Euclidean divergence)."""
    div = sum(C.partial(k).values[..., k] for k in range(C.n))
    return float(np.abs(div).max())


@dataclass
class BolzaSpec:
    """Flux functional: total divergence of ``field`` (a vector) or total
    Laplacian of ``field`` (a scalar), to be maximized or minimized."""

    kind: str
    field: TensorField
    direction: str = "max"

    def __post_init__(self):
        if self.kind not in ("divergence", "laplacian"):
            raise ControlError(f"unknown functional kind {self.kind!r}")
        if self.direction not in ("max", "min"):
            raise ControlError(f"unknown direction {self.direction!r}")
        want = "u" if self.kind == "divergence" else ""
        if self.field.signature != want:
            raise ControlError(
                "divergence needs a vector field X" if want else "laplacian needs a scalar field f"
            )


def total_flux_functional(spec: BolzaSpec, g):
    """``(interior, boundary)`` quadratures of the functional.

    Interior: ``int Div X sqrt(g) dx`` or ``int Lap f sqrt(g) dx``.
    Boundary: ``oint X^i n_i sqrt(g) dsigma`` or ``oint g^ij f_i n_j sqrt(g) dsigma``.
    """
    md = MetricData(g)
    sqrtg = TensorField(spec.field.grid, md.sqrt_det(), "")
    if spec.kind == "divergence":
        dens = riemannian_divergence(spec.field, g).values * sqrtg.values
        flux = spec.field
    else:
        dens = laplace_beltrami(spec.field, g).values * sqrtg.values
        grad = np.stack([spec.field.partial(i).values for i in range(spec.field.n)], -1)
        flux = TensorField(spec.field.grid, np.einsum("...ij,...i->...j", md.upper, grad), "u")
    interior = integrate_interior(TensorField(spec.field.grid, dens, ""))
    boundary = boundary_flux(flux, sqrtg)
    return interior, boundary


def boundary_residual(spec: BolzaSpec, C: TensorField, g, boundary_sign: str = "paper") -> float:
    """Largest violation of the transversality condition on the boundary.

    divergence: ``|n_k (C^k - s sqrt(g) X^k)|``
    laplacian:  ``|n_k C^k g_ij - n_k g^kl (f_i g_lj + f_j g_li - f_l g_ij) sqrt(g)|``

    ``s = +1`` for ``boundary_sign="paper"`` and ``-1`` for ``"derived"``
    (the sign obtained by differentiating ``X^i sqrt(g) n_i`` with
    respect to ``g^ij``). For the Laplacian both conventions coincide.
    """
    if boundary_sign not in ("paper", "derived"):
        raise ControlError("boundary_sign must be 'paper' or 'derived'")
    s = 1.0 if boundary_sign == "paper" else -1.0
    grid = C.grid
    md = MetricData(g)
    sqrtg = md.sqrt_det()
    worst = 0.0
    if spec.kind == "divergence":
        X = spec.field.values
        for face in grid.faces():
            ix = grid.face_index(face)
            a = face.axis
            r = face.normal_sign * (C.values[ix + (a,)] - s * sqrtg[ix] * X[ix + (a,)])
            worst = max(worst, float(np.abs(r).max()))
        return worst
    grad = np.stack([spec.field.partial(i).values for i in range(grid.n)], -1)
    for face in grid.faces():
        ix = grid.face_index(face)
        a, sgn = face.axis, face.normal_sign
        gl, gu, df = md.lower[ix], md.upper[ix], grad[ix]
        nC = sgn * C.values[ix + (a,)]
        ngu = sgn * gu[..., a, :]  # n_k g^kl
        t1 = np.einsum("...l,...i,...lj->...ij", ngu, df, gl)
        bracket = t1 + np.swapaxes(t1, -1, -2) - np.einsum("...l,...l->...", ngu, df)[..., None, None] * gl
        r = nC[..., None, None] * gl - bracket * sqrtg[ix][..., None, None]
        worst = max(worst, float(np.abs(r).max()))
    return worst


# --------------------------------------------------------------------------
# Certificate


@dataclass
class Clause:
    residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.residual <= self.tolerance)


@dataclass
class CertificateReport:
    clauses: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.clauses.values())

    def to_dict(self) -> dict:
        return {
            name: {"residual": c.residual, "tolerance": c.tolerance, "pass": c.passed}
            for name, c in self.clauses.items()
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)


def _random_connections(rng, count, n):
    raw = rng.uniform(-1.0, 1.0, size=(count, len(_independent(n))))
    return _expand(raw, n)


def _box_max_gap(coef, gamma_star, n):
    """``max_Gamma H(Gamma) - H(Gamma*)`` over the box, per point.

    Vertex enumeration for n <= 2; for larger n the exact maximum of a
    linear function over the box (sum of |coefficients|).
    """
    coef_ind = _reduce_coefficients(coef, n)
    h_star = np.einsum("...abc,...abc->...", coef, gamma_star)
    if n <= 2:
        verts = _vertices(coef_ind.shape[-1])
        best = np.max(coef_ind @ verts.T, axis=-1)
    else:
        best = np.abs(coef_ind).sum(axis=-1)
    return best - h_star


def mp_certificate(
    state,
    gamma_star: ConnectionField,
    p_star: CostateField,
    spec: BolzaSpec,
    C: TensorField,
    samples: int = 1000,
    seed: int = 0,
    tolerances: dict | None = None,
    boundary_sign: str = "paper",
) -> CertificateReport:
    """Check every verifiable clause of the Riemannian maximum principle.

    ``state`` is the optimal inverse metric (dual formulation) or metric
    (primal formulation); the costate must be the matching variant. The
    report carries one :class:`Clause` per condition: ``evolution``,
    ``adjoint``, ``hamiltonian_max`` (largest ``H(Gamma) - H(Gamma*)``
    over random admissible controls and box vertices), ``boundary`` and
    ``solenoidal``.
    """
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(tolerances or {})
    mode = "dual" if isinstance(state, InverseMetricField) else "primal"
    n = state.n
    rep = CertificateReport()
    rep.clauses["evolution"] = Clause(compat_residual(state, gamma_star, mode), tol["evolution"])
    rep.clauses["adjoint"] = Clause(adjoint_residual(p_star, gamma_star), tol["adjoint"])

    coef = hamiltonian_coefficients(state.values, p_star.values, mode)
    flat = coef.reshape(-1, n ** 3)
    h_star = np.einsum("pa,pa->p", flat, gamma_star.values.reshape(-1, n ** 3))
    rng = np.random.default_rng(seed)
    gap = -np.inf
    chunk = 256
    for start in range(0, samples, chunk):
        draws = _random_connections(rng, min(chunk, samples - start), n).reshape(-1, n ** 3)
        gap = max(gap, float(np.max(draws @ flat.T - h_star[None, :])))
    gap = max(gap, float(np.max(_box_max_gap(coef, gamma_star.values, n))))
    rep.clauses["hamiltonian_max"] = Clause(gap, tol["hamiltonian"])

    rep.clauses["boundary"] = Clause(boundary_residual(spec, C, state, boundary_sign), tol["boundary"])
    rep.clauses["solenoidal"] = Clause(solenoidal_residual(C), tol["solenoidal"])
    return rep
