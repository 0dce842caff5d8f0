"""Structured grids on an axis-aligned box and tensor fields sampled on them.

Fields store their values as ``grid.shape + (n,) * rank`` arrays in C
order, so the last grid axis varies fastest. Component slots follow the
index signature string: ``"dd"`` is ``g_ij``, ``"uu"`` is ``g^ij`` and
``"udd"`` is ``Gamma^k_ij`` stored as ``values[..., k, i, j]``.

A field may carry a table of expressions, one per component. Such fields
are differentiated symbolically and evaluated exactly off the grid; all
others fall back to second-order finite differences and multilinear
interpolation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .fieldexpr import Const, EvalError, Expr, differentiate, evaluate, parse

__all__ = [
    "GridError",
    "Domain",
    "GridSpec",
    "Grid",
    "Face",
    "make_grid",
    "TensorField",
    "MetricField",
    "InverseMetricField",
    "ConnectionField",
    "CostateField",
    "sample_field",
    "constant_field",
    "fd_partial",
    "simpson_weights",
    "integrate_interior",
    "integrate_boundary",
    "boundary_flux",
    "write_field_csv",
    "read_field_csv",
]

SYMMETRY_RTOL = 1e-12


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Domain:
    """The box ``[x0[0], x1[0]] x ... x [x0[n-1], x1[n-1]]``."""

    x0: tuple
    x1: tuple

    def __post_init__(self):
        x0 = tuple(float(v) for v in self.x0)
        x1 = tuple(float(v) for v in self.x1)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "x1", x1)
        if len(x0) < 1:
            raise GridError("domain dimension must be >= 1")
        if len(x0) != len(x1):
            raise GridError("x0 and x1 must have the same length")
        for k, (a, b) in enumerate(zip(x0, x1)):
            if not b > a:
                raise GridError(f"axis {k + 1}: upper bound must exceed lower bound")

    @property
    def n(self) -> int:
        return len(self.x0)

    @classmethod
    def unit(cls, n: int) -> "Domain":
        return cls((0.0,) * n, (1.0,) * n)


@dataclass(frozen=True)
class GridSpec:
    """Per-axis sample counts; each must be odd and at least 3."""

    m: tuple

    def __post_init__(self):
        m = tuple(int(v) for v in self.m)
        object.__setattr__(self, "m", m)
        for k, mk in enumerate(m):
            if mk < 3:
                raise GridError(f"axis {k + 1}: sample count must be at least 3")
            if mk % 2 == 0:
                raise GridError(f"axis {k + 1}: sample count must be odd")


@dataclass(frozen=True)
class Face:
    """One of the 2n faces ``{x_axis = x0}`` (side 0) or ``{x_axis = x1}`` (side 1)."""

    axis: int
    side: int

    @property
    def normal_sign(self) -> float:
        return 1.0 if self.side == 1 else -1.0


class Grid:
    def __init__(self, domain: Domain, spec: GridSpec):
        if domain.n != len(spec.m):
            raise GridError(
                f"grid spec has {len(spec.m)} axes but the domain has dimension {domain.n}"
            )
        self.domain = domain
        self.spec = spec
        self.n = domain.n
        self.shape = spec.m
        self.h = tuple((b - a) / (m - 1) for a, b, m in zip(domain.x0, domain.x1, spec.m))
        self.axes = tuple(
            np.linspace(a, b, m) for a, b, m in zip(domain.x0, domain.x1, spec.m)
        )

    def __repr__(self):
        return f"Grid(x0={self.domain.x0}, x1={self.domain.x1}, m={self.shape})"

    def __eq__(self, other):
        return (
            isinstance(other, Grid)
            and self.domain == other.domain
            and self.spec == other.spec
        )

    def __hash__(self):
        return hash((self.domain, self.spec))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def coords(self) -> tuple:
        """Coordinate arrays of the full grid, each of shape ``self.shape``."""
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    def index_to_point(self, idx: Sequence[int]) -> np.ndarray:
        idx = tuple(idx)
        if len(idx) != self.n:
            raise GridError(f"expected a {self.n}-index, got {idx}")
        for k, (i, m) in enumerate(zip(idx, self.shape)):
            if not 0 <= i < m:
                raise GridError(f"axis {k + 1}: index {i} out of range [0, {m})")
        return np.array([a + i * h for a, i, h in zip(self.domain.x0, idx, self.h)])

    def point_to_index(self, x: Sequence[float]) -> tuple:
        """Nearest lattice index of a point inside the domain."""
        out = []
        for k, (v, a, h, m) in enumerate(zip(x, self.domain.x0, self.h, self.shape)):
            i = int(round((v - a) / h))
            if not 0 <= i < m:
                raise GridError(f"axis {k + 1}: coordinate {v} outside the domain")
            out.append(i)
        return tuple(out)

    def faces(self) -> Iterator[Face]:
        for axis in range(self.n):
            for side in (0, 1):
                yield Face(axis, side)

    def face_index(self, face: Face) -> tuple:
        idx = [slice(None)] * self.n
        idx[face.axis] = 0 if face.side == 0 else self.shape[face.axis] - 1
        return tuple(idx)

    def face_coords(self, face: Face) -> tuple:
        """Coordinates of the face points; arrays drop the face axis."""
        ix = self.face_index(face)
        return tuple(c[ix] for c in self.coords())

    def face_weights(self, face: Face) -> np.ndarray:
        w = np.ones(())
        for k in range(self.n):
            if k != face.axis:
                w = np.multiply.outer(w, simpson_weights(self.shape[k], self.h[k]))
        return w


def make_grid(domain: Domain, spec: GridSpec) -> Grid:
    return Grid(domain, spec)


def simpson_weights(m: int, h: float) -> np.ndarray:
    """Composite Simpson weights ``h/3 * [1, 4, 2, 4, ..., 2, 4, 1]``."""
    if m < 3 or m % 2 == 0:
        raise GridError("composite Simpson needs an odd count >= 3")
    w = np.ones(m)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)


# --------------------------------------------------------------------------
# Fields


class TensorField:
    """Grid-sampled tensor field.

    Parameters
    ----------
    grid : Grid
    values : array_like
        Shape ``grid.shape + (n,) * len(signature)``.
    signature : str
        One character per slot, ``"u"`` (upper) or ``"d"`` (lower).
    exprs : array of Expr, optional
        Component table of shape ``(n,) * rank``; enables symbolic
        derivatives and exact off-grid evaluation.
    """

    symmetric_slots: tuple = ()
    default_name = "t"

    def __init__(self, grid: Grid, values, signature: str = "", exprs=None, name=None):
        values = np.array(values, dtype=float)
        expected = tuple(grid.shape) + (grid.n,) * len(signature)
        if values.shape != expected:
            raise GridError(f"field values have shape {values.shape}, expected {expected}")
        if exprs is not None:
            exprs = _to_expr_table(exprs, grid.n, len(signature))
        self.grid = grid
        self.values = values
        self.values.setflags(write=False)
        self.signature = signature
        self.exprs = exprs
        self.name = name or self.default_name
        self._validate()

    def _validate(self):
        for a, b in self.symmetric_slots:
            v = self.values
            ax_a, ax_b = self.grid.n + a, self.grid.n + b
            diff = np.abs(v - np.swapaxes(v, ax_a, ax_b))
            scale = 1.0 + np.abs(v).max(initial=0.0)
            if diff.max(initial=0.0) > SYMMETRY_RTOL * scale:
                raise GridError(
                    f"{type(self).__name__} requires symmetry in slots {a + 1},{b + 1}"
                )

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def rank(self) -> int:
        return len(self.signature)

    @property
    def backed(self) -> bool:
        return self.exprs is not None

    def components(self) -> Iterator[tuple]:
        return itertools.product(range(self.n), repeat=self.rank)

    def partial(self, k: int) -> "TensorField":
        """Partial derivative along axis ``k`` (0-based)."""
        return fd_partial(self, k)

    def at(self, points: Sequence) -> np.ndarray:
        """Values at arbitrary points inside the domain.

        ``points`` is a sequence of n coordinate arrays (broadcastable).
        Expression-backed fields are evaluated exactly; others are
        interpolated multilinearly.
        """
        pts = [np.asarray(p, dtype=float) for p in points]
        shape = np.broadcast_shapes(*(p.shape for p in pts))
        comp_shape = (self.n,) * self.rank
        if self.exprs is not None:
            out = np.empty(shape + comp_shape)
            cache = {}
            for c in self.components():
                e = self.exprs[c]
                if e not in cache:
                    cache[e] = evaluate(e, pts)
                out[(Ellipsis,) + c] = cache[e]
            return out
        interp = RegularGridInterpolator(self.grid.axes, self.values, method="linear")
        flat = np.stack([np.broadcast_to(p, shape).ravel() for p in pts], axis=-1)
        return interp(flat).reshape(shape + comp_shape)

    def with_values(self, values, exprs=None):
        return type(self)._rebuild(self, values, exprs)

    @classmethod
    def _rebuild(cls, proto, values, exprs):
        return TensorField(proto.grid, values, proto.signature, exprs, proto.name)

    def __repr__(self):
        kind = "expr" if self.backed else "grid"
        return f"{type(self).__name__}({self.signature!r}, {kind}, {self.grid!r})"


class MetricField(TensorField):
    """Symmetric ``g_ij``. With ``riemannian=True`` positive definiteness is checked."""

    symmetric_slots = ((0, 1),)
    default_name = "g"

    def __init__(self, grid, values, exprs=None, riemannian=False, name=None):
        super().__init__(grid, values, "dd", exprs, name)
        self.riemannian = riemannian
        if riemannian:
            for r in range(1, grid.n + 1):
                minors = np.linalg.det(self.values[..., :r, :r])
                bad = minors <= 0
                if np.any(bad):
                    idx = tuple(int(i) for i in np.argwhere(bad)[0])
                    raise GridError(
                        f"metric not positive definite at {tuple(grid.index_to_point(idx))}"
                    )

    @classmethod
    def _rebuild(cls, proto, values, exprs):
        return cls(proto.grid, values, exprs, name=proto.name)


class InverseMetricField(TensorField):
    """Symmetric ``g^ij``.

    ``semi_riemannian_candidate`` flags tensors that need not be positive
    (or even nondegenerate) everywhere.
    """

    symmetric_slots = ((0, 1),)
    default_name = "ginv"

    def __init__(self, grid, values, exprs=None, semi_riemannian_candidate=False, name=None):
        super().__init__(grid, values, "uu", exprs, name)
        self.semi_riemannian_candidate = semi_riemannian_candidate

    @classmethod
    def _rebuild(cls, proto, values, exprs):
        return cls(proto.grid, values, exprs, proto.semi_riemannian_candidate, proto.name)


class ConnectionField(TensorField):
    """Symmetric connection ``Gamma^k_ij`` stored as ``values[..., k, i, j]``."""

    symmetric_slots = ((1, 2),)
    default_name = "Gamma"

    def __init__(self, grid, values, exprs=None, box_constrained=False, name=None):
        super().__init__(grid, values, "udd", exprs, name)
        self.box_constrained = box_constrained
        if box_constrained and np.abs(self.values).max(initial=0.0) > 1.0:
            raise GridError("box-constrained connection has components outside [-1, 1]")

    @classmethod
    def _rebuild(cls, proto, values, exprs):
        return cls(proto.grid, values, exprs, proto.box_constrained, proto.name)


COSTATE_VARIANTS = ("lower", "upper-sym", "upper-raw")


class CostateField(TensorField):
    """Costate tensor.

    ``lower``: ``p^k_ij`` stored ``[..., k, i, j]``, symmetric in (i, j).
    ``upper-sym``: ``p^ijk`` stored ``[..., i, j, k]``, symmetric in (i, j).
    ``upper-raw``: ``lambda^ijk`` stored ``[..., i, j, k]``, no symmetry.
    """

    default_name = "p"

    def __init__(self, grid, values, variant="lower", exprs=None, name=None):
        if variant not in COSTATE_VARIANTS:
            raise GridError(f"unknown costate variant {variant!r}")
        self.variant = variant
        self.symmetric_slots = {
            "lower": ((1, 2),),
            "upper-sym": ((0, 1),),
            "upper-raw": (),
        }[variant]
        sig = "udd" if variant == "lower" else "uuu"
        super().__init__(grid, values, sig, exprs, name)

    @classmethod
    def _rebuild(cls, proto, values, exprs):
        return cls(proto.grid, values, proto.variant, exprs, proto.name)


# --------------------------------------------------------------------------
# Construction


def _point_message(grid, mask, comp):
    idx = tuple(int(i) for i in np.argwhere(np.broadcast_to(mask, grid.shape))[0])
    x = tuple(float(v) for v in grid.index_to_point(idx))
    return f"at point {x} (index {idx}), component {comp}"


def _to_expr_table(exprs, n, rank):
    table = np.empty((n,) * rank, dtype=object)
    if rank == 0:
        arr = np.empty((), dtype=object)
        arr[()] = exprs[()] if isinstance(exprs, np.ndarray) else exprs
    else:
        src = np.array(exprs, dtype=object)
        if src.shape != (n,) * rank:
            raise GridError(f"expression table has shape {src.shape}, expected {(n,) * rank}")
        arr = src
    for c in itertools.product(range(n), repeat=rank):
        e = arr[c]
        if isinstance(e, str):
            e = parse(e, n)
        elif isinstance(e, (int, float, np.integer, np.floating)):
            e = Const(float(e))
        elif not isinstance(e, Expr):
            raise GridError(f"component {list(c)} is not an expression: {e!r}")
        table[c] = e
    return table


def sample_field(grid: Grid, exprs, signature: str = "", cls=None, **kwargs) -> TensorField:
    """Sample an expression table on the grid.

    ``exprs`` is a nested list (or a single item for scalars) of strings,
    numbers or :class:`Expr`. ``cls`` selects a typed wrapper such as
    :class:`MetricField`; extra keyword arguments go to it.
    """
    rank = len(signature)
    table = _to_expr_table(exprs, grid.n, rank)
    coords = grid.coords()
    values = np.empty(tuple(grid.shape) + (grid.n,) * rank)
    cache = {}
    for c in itertools.product(range(grid.n), repeat=rank):
        e = table[c]
        if e not in cache:
            try:
                cache[e] = evaluate(e, coords)
            except EvalError as exc:
                where = _point_message(grid, exc.mask, list(c)) if exc.mask is not None else ""
                raise EvalError(f"{exc} {where}".strip(), exc.mask) from None
        values[(Ellipsis,) + c] = cache[e]
    if cls is None:
        return TensorField(grid, values, signature, table)
    return cls(grid, values, exprs=table, **kwargs)


def constant_field(grid: Grid, value, signature: str = "", cls=None, **kwargs) -> TensorField:
    """Expression-backed field that is constant in space."""
    value = np.asarray(value, dtype=float)
    exprs = np.empty(value.shape, dtype=object)
    for c in np.ndindex(value.shape):
        exprs[c] = Const(float(value[c]))
    if value.ndim == 0:
        exprs = exprs[()]
    return sample_field(grid, exprs, signature, cls, **kwargs)


def fd_partial(field: TensorField, k: int) -> TensorField:
    """``d/dx_k`` of a field (``k`` 0-based).

    Expression-backed fields are differentiated symbolically and stay
    backed; others use second-order central differences inside and
    second-order one-sided differences on the faces.
    """
    grid = field.grid
    if not 0 <= k < grid.n:
        raise GridError(f"axis {k + 1} out of range")
    if field.exprs is not None:
        dtable = np.empty(field.exprs.shape, dtype=object)
        for c in np.ndindex(field.exprs.shape):
            dtable[c] = differentiate(field.exprs[c], k + 1)
        return sample_field(grid, dtable if field.rank else dtable[()], field.signature)
    d = np.gradient(field.values, grid.h[k], axis=k, edge_order=2)
    return TensorField(grid, d, field.signature, None, field.name)


# --------------------------------------------------------------------------
# Quadrature


def _contract(values: np.ndarray, weights: Sequence[np.ndarray]) -> float:
    # fixed order: always contract the leading axis
    acc = values
    for w in weights:
        acc = np.tensordot(w, acc, axes=([0], [0]))
    return float(acc)


def integrate_interior(field: TensorField) -> float:
    """Composite Simpson integral of a scalar field over the whole box."""
    if field.rank != 0:
        raise GridError("integrate_interior needs a scalar field")
    g = field.grid
    return _contract(field.values, [simpson_weights(m, h) for m, h in zip(g.shape, g.h)])


def integrate_boundary(grid: Grid, integrand) -> float:
    """Sum of Simpson integrals over the 2n faces of the box.

    ``integrand`` is a scalar :class:`TensorField` (restricted to each
    face) or a callable ``integrand(face) -> array`` returning values on
    the face lattice. In one dimension each face is a point of measure 1.
    """
    total = 0.0
    for face in grid.faces():
        if isinstance(integrand, TensorField):
            if integrand.rank != 0:
                raise GridError("integrate_boundary needs a scalar integrand")
            vals = integrand.values[grid.face_index(face)]
        else:
            vals = np.asarray(integrand(face), dtype=float)
        weights = [
            simpson_weights(grid.shape[k], grid.h[k]) for k in range(grid.n) if k != face.axis
        ]
        vals = np.broadcast_to(vals, tuple(grid.shape[k] for k in range(grid.n) if k != face.axis))
        total += _contract(vals, weights)
    return total


def boundary_flux(vector: TensorField, weight: TensorField | None = None) -> float:
    """``sum over faces of  integral V^i n_i w dsigma`` with the Euclidean normal covector."""
    grid = vector.grid
    if vector.signature != "u":
        raise GridError("boundary_flux needs a vector field")

    def integrand(face):
        ix = grid.face_index(face)
        v = face.normal_sign * vector.values[ix + (face.axis,)]
        if weight is not None:
            v = v * weight.values[ix]
        return v

    return integrate_boundary(grid, integrand)


# --------------------------------------------------------------------------
# CSV


def _component_labels(field: TensorField) -> list:
    comps = []
    for c in field.components():
        if any(c[a] > c[b] for a, b in field.symmetric_slots):
            continue
        comps.append(c)
    return comps


def write_field_csv(field: TensorField, fh) -> None:
    """Write ``i1..in, x1..xn, <components>`` rows in storage order.

    Symmetric slot pairs only emit their upper triangle. Floats carry 17
    significant digits so the file round-trips exactly.
    """
    grid = field.grid
    comps = _component_labels(field)
    header = [f"i{k + 1}" for k in range(grid.n)] + [f"x{k + 1}" for k in range(grid.n)]
    header += [field.name + "".join(str(i + 1) for i in c) for c in comps]
    fh.write(",".join(header) + "\n")
    for idx in np.ndindex(*grid.shape):
        x = grid.index_to_point(idx)
        row = [str(i) for i in idx] + [format(v, ".17g") for v in x]
        row += [format(field.values[idx + c], ".17g") for c in comps]
        fh.write(",".join(row) + "\n")


def read_field_csv(fh, proto: TensorField) -> np.ndarray:
    """Read values written by :func:`write_field_csv` back into an array shaped like ``proto``."""
    grid = proto.grid
    comps = _component_labels(proto)
    lines = fh.read().strip().splitlines()
    out = np.zeros(proto.values.shape)
    for line in lines[1:]:
        parts = line.split(",")
        idx = tuple(int(p) for p in parts[: grid.n])
        vals = [float(p) for p in parts[2 * grid.n:]]
        for c, v in zip(comps, vals):
            out[idx + c] = v
            for a, b in proto.symmetric_slots:
                swapped = list(c)
                swapped[a], swapped[b] = swapped[b], swapped[a]
                out[idx + tuple(swapped)] = v
    return out
