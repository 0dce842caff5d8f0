"""Command-line front end.

Every subcommand reads an optional JSON config, lets flags override it,
validates the merged result and writes its outputs into ``--out``. A
``report.json`` is always written once the config is valid, even when a
check fails. Exit status: 0 all checks pass, 1 a check failed, 2 usage or
config error.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from . import __version__
from .control import (
    DEFAULT_TOLERANCES,
    BolzaSpec,
    SignVector,
    bang_bang_at,
    bang_bang_synthesize,
    brute_force_hamiltonian_max,
    costate_from_C,
    hamiltonian_value,
    matched_divergence_field,
    mp_certificate,
    solenoidal_residual,
    switching_hamiltonian,
    total_flux_functional,
)
from .evolution import (
    EvolutionProblem,
    adjoint_residual,
    compat_residual,
    duality_flux_divergence,
    evolve_metric,
    max_relative_error,
    path_independence_check,
)
from .fieldexpr import EvalError, ParseError, depends_on, evaluate, mul, parse
from .geometry import cic_residual, lower_metric
from .grid import (
    ConnectionField,
    CostateField,
    Domain,
    GridError,
    GridSpec,
    make_grid,
    sample_field,
    write_field_csv,
)
from .solutions import (
    PipeFlow,
    conformal_pair,
    pipe_mesh,
    rank_one_pair,
    round_trip_error,
    verify_closed_form,
)

SCHEMA_VERSION = 1

CLI_TOLERANCES = {
    "soliton": 1e-12,
    "cic": 1e-8,
    "path": 1e-6,
    "closed_form": 1e-5,
    "flux": 1e-4,
    "duality": 1e-12,
    "roundtrip": 1e-12,
    "brute_force": 0.0,
}
ALL_TOLERANCES = {**DEFAULT_TOLERANCES, **CLI_TOLERANCES}

_number = {"type": "number"}
_expr = {"type": ["string", "number"]}
_expr_list = {"type": "array", "items": _expr, "minItems": 1}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "n"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "n": {"type": "integer", "minimum": 1, "maximum": 3},
        "domain": {
            "type": "object",
            "required": ["lower", "upper"],
            "additionalProperties": False,
            "properties": {
                "lower": {"type": "array", "items": _number},
                "upper": {"type": "array", "items": _number},
            },
        },
        "grid": {
            "type": "object",
            "required": ["m"],
            "additionalProperties": False,
            "properties": {
                "m": {
                    "oneOf": [
                        {"type": "integer"},
                        {"type": "array", "items": {"type": "integer"}},
                    ]
                }
            },
        },
        "mode": {"enum": ["primal", "dual"]},
        "connection": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "generator": {"enum": ["conformal", "rank-one"]},
                "eps": {"type": "array", "items": {"type": "integer"}},
                "K": _number,
                "alpha": _number,
                "alphas": {"type": "array", "items": _number},
                "expressions": {"type": "array"},
            },
        },
        "eta": {"type": "array", "items": {"type": "array", "items": _number}},
        "functional": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["divergence", "laplacian"]},
                "X": _expr_list,
                "f": _expr,
                "direction": {"enum": ["max", "min"]},
            },
        },
        "C": _expr_list,
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: _number for k in ALL_TOLERANCES},
        },
        "seed": {"type": "integer"},
        "samples": {"type": "integer", "minimum": 1},
        "boundary_sign": {"enum": ["paper", "derived"]},
        "pipe": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "frame": {"enum": ["cartesian", "cylindrical"]},
                "F": {"type": "array", "items": _expr, "minItems": 3, "maxItems": 3},
                "K": _number,
                "amplitude": _number,
                "resolution": {
                    "type": "array",
                    "items": {"type": "integer"},
                    "minItems": 2,
                    "maxItems": 2,
                },
            },
        },
    },
}


class ConfigError(Exception):
    """Raised for anything that should end the run with exit status 2."""


def _path(error) -> str:
    out = ""
    for p in error.absolute_path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def validate_config(raw: dict) -> None:
    """Schema check; all missing keys are reported together."""
    validator = jsonschema.Draft7Validator(CONFIG_SCHEMA)
    missing, other = [], []
    for err in sorted(validator.iter_errors(raw), key=lambda e: list(map(str, e.absolute_path))):
        if err.validator == "required":
            where = _path(err)
            for key in err.validator_value:
                if key not in err.instance:
                    missing.append(key if where == "<root>" else f"{where}.{key}")
        else:
            other.append(f"{_path(err)}: {err.message}")
    msgs = []
    if missing:
        msgs.append("missing required keys: " + ", ".join(dict.fromkeys(missing)))
    msgs.extend(other)
    if msgs:
        raise ConfigError("; ".join(msgs))


@dataclass
class Config:
    """Validated configuration with expressions parsed."""

    raw: dict
    n: int
    grid: object
    mode: str
    tolerances: dict
    seed: int
    samples: int
    boundary_sign: str
    connection: dict = field(default_factory=dict)
    C: list | None = None
    functional: dict | None = None

    @property
    def digest(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def _parse_all(items, n, where):
    out = []
    for i, e in enumerate(items):
        try:
            out.append(parse(str(e), n))
        except ParseError as exc:
            raise ConfigError(f"{where}[{i}]: {exc}") from None
    return out


def build_config(raw: dict) -> Config:
    validate_config(raw)
    n = raw["n"]
    dom = raw.get("domain", {"lower": [0.0] * n, "upper": [1.0] * n})
    for key in ("lower", "upper"):
        if len(dom[key]) != n:
            raise ConfigError(f"domain.{key}: expected {n} entries")
    m = raw.get("grid", {}).get("m", 17)
    m = [m] * n if isinstance(m, int) else list(m)
    if len(m) != n:
        raise ConfigError(f"grid.m: expected {n} entries")
    try:
        grid = make_grid(Domain(tuple(dom["lower"]), tuple(dom["upper"])), GridSpec(tuple(m)))
    except GridError as exc:
        raise ConfigError(str(exc)) from None

    tol = dict(ALL_TOLERANCES)
    tol.update(raw.get("tolerances", {}))
    conn = dict(raw.get("connection", {}))
    if "eps" in conn:
        try:
            conn["eps"] = SignVector(conn["eps"])
        except GridError as exc:
            raise ConfigError(str(exc)) from None
        if conn["eps"].n != n:
            raise ConfigError(f"connection.eps: expected {n} entries")
    if "expressions" in conn:
        exprs = np.array(conn["expressions"], dtype=object)
        if exprs.shape != (n, n, n):
            raise ConfigError(f"connection.expressions: expected shape {(n, n, n)}")
        flat = _parse_all(exprs.ravel().tolist(), n, "connection.expressions")
        conn["expressions"] = np.array(flat, dtype=object).reshape(n, n, n)
    if "eta" in raw:
        eta = np.array(raw["eta"], dtype=float)
        if eta.shape != (n, n):
            raise ConfigError(f"eta: expected a {n}x{n} matrix")
    C = None
    if "C" in raw:
        if len(raw["C"]) != n:
            raise ConfigError(f"C: expected {n} entries")
        C = _parse_all(raw["C"], n, "C")
    fun = None
    if "functional" in raw:
        fun = dict(raw["functional"])
        if fun["kind"] == "divergence":
            if "X" not in fun:
                fun["X"] = None
            elif len(fun["X"]) != n:
                raise ConfigError(f"functional.X: expected {n} entries")
            else:
                fun["X"] = _parse_all(fun["X"], n, "functional.X")
        else:
            if "f" not in fun:
                raise ConfigError("missing required keys: functional.f")
            fun["f"] = _parse_all([fun["f"]], n, "functional.f")[0]
    return Config(
        raw=raw,
        n=n,
        grid=grid,
        mode=raw.get("mode", "dual"),
        tolerances=tol,
        seed=raw.get("seed", 0),
        samples=raw.get("samples", 1000),
        boundary_sign=raw.get("boundary_sign", "paper"),
        connection=conn,
        C=C,
        functional=fun,
    )


def load_config(path) -> Config:
    """Read, schema-check and pre-parse a JSON config file."""
    return build_config(_read_json(path))


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None


# --------------------------------------------------------------------------
# Reports


class Report:
    def __init__(self, subcommand: str, config: Config):
        self.subcommand = subcommand
        self.config = config
        self.checks = []
        self.values = {}

    def check(self, name, residual, tolerance, passed=None):
        residual = float(residual)
        if passed is None:
            passed = residual <= tolerance
        self.checks.append(
            {"name": name, "residual": residual, "tolerance": float(tolerance), "pass": bool(passed)}
        )

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "tool": "riemopt",
            "version": __version__,
            "subcommand": self.subcommand,
            "config_digest": self.config.digest,
            "checks": self.checks,
            "values": self.values,
            "pass": self.passed,
        }

    def write(self, out_dir):
        with open(os.path.join(out_dir, "report.json"), "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


# --------------------------------------------------------------------------
# Shared builders


def _closed_form(cfg: Config):
    conn = cfg.connection
    gen = conn.get("generator")
    if gen is None:
        return None
    if "eps" not in conn:
        raise ConfigError("missing required keys: connection.eps")
    if gen == "conformal":
        return conformal_pair(cfg.grid, conn["eps"], conn.get("K", 1.0))
    if "alphas" not in conn:
        raise ConfigError("missing required keys: connection.alphas")
    return rank_one_pair(cfg.grid, conn["eps"], conn.get("alpha", 1.0), conn["alphas"])


def _connection(cfg: Config, pair=None) -> ConnectionField:
    if pair is not None:
        return pair.connection
    if "expressions" in cfg.connection:
        return sample_field(
            cfg.grid, cfg.connection["expressions"].tolist(), "udd", ConnectionField
        )
    raise ConfigError("connection needs either 'generator' or 'expressions'")


def _eta(cfg: Config, pair=None) -> np.ndarray:
    if "eta" in cfg.raw:
        return np.array(cfg.raw["eta"], dtype=float)
    if pair is not None:
        corner = (0,) * cfg.n
        if cfg.mode == "dual":
            return np.array(pair.inverse_metric.values[corner])
        if pair.metric is None:
            raise ConfigError("this closed form has no lower metric; give 'eta' or use dual mode")
        return np.array(pair.metric.values[corner])
    return np.eye(cfg.n)


def _C_field(cfg: Config):
    if cfg.C is None:
        raise ConfigError("missing required keys: C")
    return sample_field(cfg.grid, cfg.C, "u")


def _state(cfg: Config):
    """Inverse metric and metric for the configured connection."""
    pair = _closed_form(cfg)
    gamma = _connection(cfg, pair)
    if pair is not None:
        g = pair.metric if pair.metric is not None else lower_metric(pair.inverse_metric)
        return pair.inverse_metric, g, gamma
    prob = EvolutionProblem(cfg.grid, gamma, _eta(cfg, pair), "dual")
    ginv = evolve_metric(prob)
    return ginv, lower_metric(ginv), gamma


# --------------------------------------------------------------------------
# Subcommands


def cmd_evolve(cfg: Config, args, out_dir, rep: Report):
    pair = _closed_form(cfg)
    gamma = _connection(cfg, pair)
    prob = EvolutionProblem(cfg.grid, gamma, _eta(cfg, pair), cfg.mode)
    state = evolve_metric(prob)
    name = "metric.csv" if cfg.mode == "primal" else "inverse_metric.csv"
    with open(os.path.join(out_dir, name), "w") as fh:
        write_field_csv(state, fh)
    rep.values["output"] = name
    rep.values["compat_residual_fd"] = compat_residual(state, gamma)
    rep.check("path_independence", path_independence_check(prob), cfg.tolerances["path"])
    if pair is not None and "eta" not in cfg.raw:
        exact = pair.inverse_metric if cfg.mode == "dual" else pair.metric
        if exact is not None:
            rep.check("closed_form", max_relative_error(state, exact), cfg.tolerances["closed_form"])


def cmd_curvature(cfg: Config, args, out_dir, rep: Report):
    pair = _closed_form(cfg)
    gamma = _connection(cfg, pair)
    if pair is not None:
        g = pair.metric if pair.metric is not None else pair.inverse_metric
        prob = EvolutionProblem(cfg.grid, gamma, np.array(pair.inverse_metric.values[(0,) * cfg.n]), "dual")
    else:
        prob = EvolutionProblem(cfg.grid, gamma, _eta(cfg), "primal")
        g = evolve_metric(prob)
    detail = cic_residual(g, gamma, detail=True)
    rep.values.update(detail)
    rep.check("cic", detail["residual"], cfg.tolerances["cic"])
    rep.check("path_independence", path_independence_check(prob), cfg.tolerances["path"])


def cmd_verify(cfg: Config, args, out_dir, rep: Report):
    case = args.case
    if case in ("conformal", "rank-one"):
        if cfg.connection.get("generator") != case:
            raise ConfigError(f"--case {case} needs connection.generator = {case!r}")
        pair = _closed_form(cfg)
        rep.values["convention"] = args.convention
        rep.check(
            "soliton", verify_closed_form(pair, args.convention), cfg.tolerances["soliton"]
        )
        return
    ginv, g, gamma = _state(cfg)
    C = _C_field(cfg)
    if case == "costate":
        p = costate_from_C(C, g)
        rep.check("adjoint", adjoint_residual(p, gamma), cfg.tolerances["adjoint"])
        rep.check("solenoidal", solenoidal_residual(C), cfg.tolerances["solenoidal"])
    elif case == "duality":
        p = _upper_costate(cfg, C, ginv)
        rep.check("duality", duality_flux_divergence(g, p), cfg.tolerances["duality"])
    elif case == "certificate":
        p = costate_from_C(C, g)
        spec = _functional(cfg, C, ginv)
        cert = mp_certificate(
            ginv,
            gamma,
            p,
            spec,
            C,
            samples=cfg.samples,
            seed=cfg.seed,
            tolerances=cfg.tolerances,
            boundary_sign=cfg.boundary_sign,
        )
        for name, clause in cert.clauses.items():
            rep.check(name, clause.residual, clause.tolerance, clause.passed)
        rep.values["boundary_sign"] = cfg.boundary_sign
    else:  # argparse restricts the choices
        raise ConfigError(f"unknown case {case!r}")


def _upper_costate(cfg, C, ginv) -> CostateField:
    """``p^ijk = C^k g^ij``, expression backed when both factors are."""
    n = cfg.n
    if C.backed and ginv.backed:
        table = [[[mul(C.exprs[k], ginv.exprs[i, j]) for k in range(n)] for j in range(n)] for i in range(n)]
        return sample_field(cfg.grid, table, "uuu", CostateField, variant="upper-sym")
    values = np.einsum("...k,...ij->...ijk", C.values, ginv.values)
    return CostateField(cfg.grid, values, "upper-sym")


def _functional(cfg, C, g) -> BolzaSpec:
    fun = cfg.functional or {"kind": "divergence", "X": None}
    direction = fun.get("direction", "max")
    if fun["kind"] == "divergence":
        if fun["X"] is None:
            X = matched_divergence_field(C, g, cfg.boundary_sign)
        else:
            X = sample_field(cfg.grid, fun["X"], "u")
        return BolzaSpec("divergence", X, direction)
    return BolzaSpec("laplacian", sample_field(cfg.grid, fun["f"], ""), direction)


def cmd_flux(cfg: Config, args, out_dir, rep: Report):
    if cfg.functional is None:
        raise ConfigError("missing required keys: functional")
    ginv, g, _ = _state(cfg)
    C = _C_field(cfg) if cfg.C is not None else None
    if cfg.functional["kind"] == "divergence" and cfg.functional["X"] is None and C is None:
        raise ConfigError("missing required keys: functional.X")
    spec = _functional(cfg, C, g)
    interior, boundary = total_flux_functional(spec, g)
    rep.values["interior"] = interior
    rep.values["boundary"] = boundary
    scale = max(abs(boundary), np.finfo(float).tiny)
    rep.check("divergence_theorem", abs(interior - boundary) / scale, cfg.tolerances["flux"])


def _write_point_gamma(path, gamma, arbitrary):
    n = gamma.shape[0]
    with open(path, "w") as fh:
        fh.write("k,i,j,gamma,arbitrary\n")
        for k in range(n):
            for i in range(n):
                for j in range(n):
                    fh.write(f"{k + 1},{i + 1},{j + 1},{gamma[k, i, j] + 0.0:.17g},{int(arbitrary[k, i, j])}\n")


def cmd_synthesize(cfg: Config, args, out_dir, rep: Report):
    if cfg.C is None:
        raise ConfigError("missing required keys: C")
    direction = args.direction or (cfg.functional or {}).get("direction", "max")
    constant = not any(depends_on(e, k + 1) for e in cfg.C for k in range(cfg.n))
    if constant:
        C = np.array([evaluate(e, np.zeros(cfg.n)) for e in cfg.C], dtype=float)
        gamma, eps, arbitrary = bang_bang_at(C, direction)
        _write_point_gamma(os.path.join(out_dir, "gamma.csv"), gamma, arbitrary)
        value = hamiltonian_value(C, gamma)
        rep.values["eps"] = [int(e) for e in eps]
        rep.values["hamiltonian"] = value
        if args.check_brute_force:
            sign = 1.0 if direction == "max" else -1.0
            best, _ = brute_force_hamiltonian_max(sign * C, cfg.n)
            best = sign * best
            rep.values["brute_force"] = best
            rep.check("brute_force", abs(value - best), cfg.tolerances["brute_force"])
        return
    Cf = sample_field(cfg.grid, cfg.C, "u")
    bb = bang_bang_synthesize(Cf, direction)
    with open(os.path.join(out_dir, "gamma.csv"), "w") as fh:
        write_field_csv(bb.connection, fh)
    mask = ConnectionField(cfg.grid, bb.arbitrary.astype(float), name="arbitrary")
    with open(os.path.join(out_dir, "mask.csv"), "w") as fh:
        write_field_csv(mask, fh)
    H = switching_hamiltonian(Cf.values, bb.connection.values)
    rep.values["hamiltonian_min"] = float(H.min())
    rep.values["hamiltonian_max"] = float(H.max())
    if args.check_brute_force:
        if cfg.n > 2:
            raise ConfigError("--check-brute-force on a field needs n <= 2 (use constant C for n = 3)")
        sign = 1.0 if direction == "max" else -1.0
        worst = 0.0
        flat_C = Cf.values.reshape(-1, cfg.n)
        flat_H = H.reshape(-1)
        for c, h in zip(flat_C, flat_H):
            best, _ = brute_force_hamiltonian_max(sign * c, cfg.n)
            worst = max(worst, abs(h - sign * best))
        rep.check("brute_force", worst, cfg.tolerances["brute_force"])


def cmd_pipe(cfg: Config, args, out_dir, rep: Report):
    pipe = cfg.raw.get("pipe", {})
    frame = pipe.get("frame", "cartesian")
    comps = pipe.get("F", ["x", "y", "0"])
    try:
        F = PipeFlow(frame, tuple(str(c) for c in comps))
    except ParseError as exc:
        raise ConfigError(f"pipe.F: {exc}") from None
    res = tuple(pipe.get("resolution", (64, 16)))
    try:
        mesh = pipe_mesh(F, pipe.get("amplitude", 0.2), res, pipe.get("K", 1.0))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    with open(os.path.join(out_dir, "pipe.obj"), "w") as fh:
        mesh.to_obj(fh)
    with open(os.path.join(out_dir, "sign.csv"), "w") as fh:
        mesh.to_csv(fh)
    rep.values["sign_counts"] = {
        str(s): int(np.sum(mesh.S == s)) for s in (-1.0, 0.0, 1.0)
    }
    rep.values["radius_range"] = [float(mesh.radius.min()), float(mesh.radius.max())]
    rep.check("round_trip", round_trip_error(F, seed=cfg.seed), cfg.tolerances["roundtrip"])


COMMANDS = {
    "evolve": cmd_evolve,
    "curvature": cmd_curvature,
    "verify": cmd_verify,
    "flux": cmd_flux,
    "synthesize": cmd_synthesize,
    "pipe": cmd_pipe,
}


# --------------------------------------------------------------------------
# Argument handling


def _ints(text):
    return [int(v) for v in text.split(",")]


def _floats(text):
    return [float(v) for v in text.split(",")]


def _items(text):
    """Split on commas that are not inside parentheses."""
    out, depth, cur = [], 0, ""
    for ch in text:
        if ch == "," and depth == 0:
            out.append(cur.strip())
            cur = ""
            continue
        depth += (ch == "(") - (ch == ")")
        cur += ch
    out.append(cur.strip())
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", default=".", help="output directory (default: .)")
    common.add_argument("--seed", type=int, help="sampler seed")
    common.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE")
    common.add_argument("--boundary-sign", choices=["paper", "derived"])
    common.add_argument("--n", type=int, help="dimension")
    common.add_argument("--m", type=_ints, help="samples per axis, e.g. 33 or 33,17")
    common.add_argument("--mode", choices=["primal", "dual"])
    common.add_argument("--generator", choices=["conformal", "rank-one"])
    common.add_argument("--eps", type=_ints, help="sign vector, e.g. 1,-1")
    common.add_argument("--K", type=float)
    common.add_argument("--alpha", type=float)
    common.add_argument("--alphas", type=_floats)
    common.add_argument("--C", type=_items, help="components of C, e.g. '3,-2'")

    parser = argparse.ArgumentParser(prog="riemopt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"riemopt {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")
    sub.required = True
    sub.add_parser("evolve", parents=[common], help="integrate the compatibility system")
    sub.add_parser("curvature", parents=[common], help="integrability residuals")
    v = sub.add_parser("verify", parents=[common], help="closed-form and certificate checks")
    v.add_argument(
        "--case", required=True, choices=["conformal", "rank-one", "costate", "duality", "certificate"]
    )
    v.add_argument("--convention", choices=["pde", "remark"], default="pde")
    sub.add_parser("flux", parents=[common], help="interior and boundary values of the functional")
    s = sub.add_parser("synthesize", parents=[common], help="bang-bang optimal connection")
    s.add_argument("--direction", choices=["max", "min"])
    s.add_argument("--check-brute-force", action="store_true")
    p = sub.add_parser("pipe", parents=[common], help="optimal pipe mesh and wall signs")
    p.add_argument("--F", type=_items, help="flow components, e.g. 'x,y,0'")
    p.add_argument("--frame", choices=["cartesian", "cylindrical"])
    p.add_argument("--amplitude", type=float)
    p.add_argument("--resolution", type=_ints, help="angles,heights")
    return parser


def merge_flags(raw: dict, args) -> dict:
    """Overlay command-line flags on a config dict (flags win)."""
    raw = copy.deepcopy(raw)
    raw.setdefault("schema_version", SCHEMA_VERSION)
    if args.command == "pipe":
        raw.setdefault("n", 3)
    if args.n is not None:
        raw["n"] = args.n
    if args.m is not None:
        raw["grid"] = {"m": args.m[0] if len(args.m) == 1 else args.m}
    if args.mode is not None:
        raw["mode"] = args.mode
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.boundary_sign is not None:
        raw["boundary_sign"] = args.boundary_sign
    conn = raw.setdefault("connection", {})
    if getattr(args, "case", None) in ("conformal", "rank-one"):
        conn.setdefault("generator", args.case)
    for key in ("generator", "eps", "K", "alpha", "alphas"):
        val = getattr(args, key)
        if val is not None:
            conn[key] = val
    if not conn:
        del raw["connection"]
    if args.C is not None:
        raw["C"] = args.C
    for item in args.tol:
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--tol expects NAME=VALUE, got {item!r}")
        if name not in ALL_TOLERANCES:
            raise ConfigError(f"unknown tolerance {name!r}; known: {', '.join(sorted(ALL_TOLERANCES))}")
        try:
            raw.setdefault("tolerances", {})[name] = float(value)
        except ValueError:
            raise ConfigError(f"--tol {name}: {value!r} is not a number") from None
    if args.command == "pipe":
        pipe = raw.setdefault("pipe", {})
        for key in ("F", "frame", "amplitude", "resolution"):
            val = getattr(args, key)
            if val is not None:
                pipe[key] = val
    return raw


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        raw = _read_json(args.config) if args.config else {}
        cfg = build_config(merge_flags(raw, args))
        os.makedirs(args.out, exist_ok=True)
        rep = Report(args.command, cfg)
        try:
            COMMANDS[args.command](cfg, args, args.out, rep)
        finally:
            rep.write(args.out)
    except (ConfigError, ValueError, ParseError, EvalError) as exc:
        print(f"riemopt {args.command}: error: {exc}", file=sys.stderr)
        return 2
    for c in rep.checks:
        flag = "PASS" if c["pass"] else "FAIL"
        print(f"{flag} {c['name']}: residual {c['residual']:.3e} (tolerance {c['tolerance']:.1e})")
    return 0 if rep.passed else 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
