"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run under pytest (lines appear in the live output) or directly with
``python3 tests/test_acceptance.py``. Reference values come from
independent oracles: closed-form evaluators written separately from the
library, analytic integrals, hand-derived derivatives, explicit vertex
enumeration and central differences.
"""

import itertools
import math
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from helpers import (  # noqa: E402
    central_difference,
    conformal_inverse_metric_values,
    random_smooth_expr,
    rank_one_values,
)
from riemopt.control import (  # noqa: E402
    BolzaSpec,
    bang_bang_at,
    brute_force_hamiltonian_max,
    costate_from_C,
    hamiltonian_value,
    matched_divergence_field,
    mp_certificate,
    total_flux_functional,
)
from riemopt.evolution import (  # noqa: E402
    EvolutionProblem,
    adjoint_residual,
    duality_flux_divergence,
    evolve_metric,
    path_independence_check,
)
from riemopt.fieldexpr import differentiate, evaluate, mul, parse, to_string  # noqa: E402
from riemopt.geometry import christoffel_from_metric, cic_residual  # noqa: E402
from riemopt.grid import (  # noqa: E402
    ConnectionField,
    CostateField,
    Domain,
    GridSpec,
    MetricField,
    constant_field,
    make_grid,
    sample_field,
)
from riemopt.solutions import (  # noqa: E402
    PipeFlow,
    conformal_pair,
    pipe_mesh,
    pipe_optimal_metric,
    rank_one_pair,
    round_trip_error,
    verify_closed_form,
)


def unit(n, m):
    return make_grid(Domain.unit(n), GridSpec((m,) * n))


def report(number, title, passed, detail, capsys=None):
    line = f"{'PASS' if passed else 'FAIL'} criterion {number:>2} ({title}): {detail}"
    if capsys is not None:
        with capsys.disabled():
            print("\n" + line)
    else:
        print(line)
    return passed


# --------------------------------------------------------------------------
# 1. conformal soliton


def check_conformal_solitons():
    worst = worst_values = 0.0
    count = 0
    for n in (1, 2, 3):
        g = unit(n, 17)
        for eps in itertools.product((-1, 0, 1), repeat=n):
            for K in (0.5, 1.0, 2.0):
                pair = conformal_pair(g, eps, K)
                worst = max(worst, verify_closed_form(pair))
                # the sampled tensor must be the closed form itself
                ref = conformal_inverse_metric_values(g, eps, K)
                worst_values = max(worst_values, float(np.abs(pair.inverse_metric.values - ref).max() / np.abs(ref).max()))
                count += 1
    ok = worst < 1e-12 and worst_values < 1e-14
    return ok, f"{count} pairs, max residual {worst:.2e} (< 1e-12), closed-form mismatch {worst_values:.1e}"


# --------------------------------------------------------------------------
# 2. rank-one soliton and the sign of the intermediate equation


def check_rank_one():
    rng = np.random.default_rng(2024)
    worst_pde, least_remark = 0.0, math.inf
    for n in (2, 3):
        g = unit(n, 17)
        for eps in itertools.product((-1, 1), repeat=n):
            alphas = rng.normal(size=n)
            alphas -= alphas.mean()
            alphas[-1] = -math.fsum(alphas[:-1])
            pair = rank_one_pair(g, eps, 1.0, alphas)
            assert np.allclose(pair.inverse_metric.values, rank_one_values(g, eps, 1.0, alphas), rtol=1e-13)
            worst_pde = max(worst_pde, verify_closed_form(pair, "pde"))
            least_remark = min(least_remark, verify_closed_form(pair, "remark"))
    ok = worst_pde < 1e-12 and least_remark > 1
    return ok, f"derived sign residual {worst_pde:.2e} (< 1e-12); plus-sign residual {least_remark:.3f} (> 1)"


# --------------------------------------------------------------------------
# 3. evolution against the closed form


def _evolution_error(m):
    g = unit(2, m)
    pair = conformal_pair(g, (1, 1), 1.0)
    out = evolve_metric(EvolutionProblem(g, pair.connection, np.eye(2), "dual"))
    X, Y = g.coords()
    exact = np.exp(-2 * (X + Y))
    err = np.abs(out.values - exact[..., None, None] * np.eye(2)).max(axis=(-1, -2)) / exact
    return float(err.max())


def check_evolution():
    e33, e65 = _evolution_error(33), _evolution_error(65)
    ratio = e33 / e65
    ok = e33 < 1e-5 and ratio >= 12
    return ok, f"max relative error {e33:.2e} at m=33 (< 1e-5), ratio {ratio:.1f} at m=65 (>= 12)"


# --------------------------------------------------------------------------
# 4. Levi-Civita oracle


def check_levi_civita():
    # symbolic path: the closed-form metric
    g = unit(2, 17)
    pair = conformal_pair(g, (1, 1), 1.0)
    sym = float(np.abs(christoffel_from_metric(pair.metric).values - pair.connection.values).max())
    # grid path: RK4 primal metric, then second-order differences
    g = unit(2, 1537)
    pair = conformal_pair(g, (1, 1), 1.0)
    evolved = evolve_metric(EvolutionProblem(g, pair.connection, np.eye(2), "primal"))
    grid = float(np.abs(christoffel_from_metric(evolved).values - pair.connection.values).max())
    ok = sym < 1e-10 and grid < 1e-6
    return ok, f"symbolic {sym:.1e} (< 1e-10), grid differences at m=1537 {grid:.2e} (< 1e-6)"


# --------------------------------------------------------------------------
# 5. integrability


def check_integrability():
    g = unit(2, 33)
    pair = conformal_pair(g, (1, 1), 1.0)
    cic_good = cic_residual(pair.metric, pair.connection)
    path_good = path_independence_check(EvolutionProblem(g, pair.connection, np.eye(2), "dual"))
    bad = sample_field(g, [[["x2", "0"], ["0", "0"]], [["0", "0"], ["0", "0"]]], "udd", ConnectionField)
    evolved = evolve_metric(EvolutionProblem(g, bad, np.eye(2), "primal"))
    cic_bad = cic_residual(evolved, bad)
    path_bad = path_independence_check(EvolutionProblem(g, bad, np.eye(2), "primal"))
    ok = cic_good < 1e-8 and path_good < 1e-6 and cic_bad > 0.1 and path_bad > 1e-2
    return ok, (
        f"conformal cic {cic_good:.1e}, path {path_good:.1e}; "
        f"Gamma^1_11 = x2 cic {cic_bad:.2f}, path {path_bad:.2f}"
    )


# --------------------------------------------------------------------------
# 6. bang-bang optimality


def _enumerate(C):
    n = len(C)
    idx = [(k, i, j) for k in range(n) for i in range(n) for j in range(i, n)]
    best = -math.inf
    for vals in itertools.product((-1.0, 0.0, 1.0), repeat=len(idx)):
        G = np.zeros((n, n, n))
        for (k, i, j), v in zip(idx, vals):
            G[k, i, j] = G[k, j, i] = v
        best = max(best, -math.fsum(C[k] * G[s, k, s] for k in range(n) for s in range(n)))
    return best


def check_bang_bang():
    rng = np.random.default_rng(6)
    mismatches = 0
    worst_gap = math.inf
    scale_changes = 0
    oracle_checked = 0
    for t in range(100):
        n = 1 + t % 2
        C = rng.normal(size=n)
        if t % 10 == 0:
            C[rng.integers(n)] = 0.0
        G, _, _ = bang_bang_at(C)
        value = hamiltonian_value(C, G)
        best, _ = brute_force_hamiltonian_max(C, n)
        mismatches += value != best
        if t < 10:
            mismatches += value != _enumerate(C)
            oracle_checked += 1
        for s in (0.1, 3.0, 1e6):
            G2, _, _ = bang_bang_at(s * C)
            scale_changes += not np.array_equal(G, G2)
        if n == 2:
            raw = rng.uniform(-1, 1, size=(1000, 2, 2, 2))
            sym = 0.5 * (raw + np.swapaxes(raw, -1, -2))  # symmetric and still in the box
            H = -np.einsum("k,psks->p", C, sym)
            worst_gap = min(worst_gap, float((value - H).min()))
    ok = mismatches == 0 and worst_gap >= -1e-12 and scale_changes == 0
    return ok, (
        f"100 C vectors, {mismatches} mismatches vs brute force ({oracle_checked} also vs enumeration), "
        f"min gap over random controls {worst_gap:.3f} (>= -1e-12), {scale_changes} argmax changes under scaling"
    )


# --------------------------------------------------------------------------
# 7. divergence theorem


def _flux(m):
    g = unit(2, m)
    pair = conformal_pair(g, (1, 1), 1.0)
    X = constant_field(g, [1.0, 0.0], "u")
    return total_flux_functional(BolzaSpec("divergence", X), pair.metric)


def check_divergence_theorem():
    exact = (math.e ** 2 - 1) ** 2 / 2
    i33, b33 = _flux(33)
    i65, b65 = _flux(65)
    rel = abs(i33 - b33) / abs(b33)
    ratio = abs(b33 - exact) / abs(b65 - exact)
    g = unit(2, 9)
    eye = constant_field(g, np.eye(2), "dd", MetricField)
    lin = sample_field(g, ["3*x1 - x2", "x1 + 2*x2"], "u")
    fi, fb = total_flux_functional(BolzaSpec("divergence", lin), eye)
    ok = rel < 1e-4 and 12 <= ratio <= 20 and abs(fi - fb) < 1e-12 and abs(fb - 5.0) < 1e-12
    return ok, (
        f"|interior - boundary|/|boundary| {rel:.1e} (< 1e-4), convergence ratio {ratio:.1f} in [12, 20], "
        f"flat linear mismatch {abs(fi - fb):.0e}"
    )


# --------------------------------------------------------------------------
# 8. adjoint and duality


def check_adjoint_duality():
    g = unit(2, 33)
    pair = conformal_pair(g, (1, 1), 1.0)
    Cv = np.array([0.7, -1.3])
    C = constant_field(g, Cv, "u")
    p = costate_from_C(C, pair.metric)
    adj = adjoint_residual(p, pair.connection)
    table = [[[mul(C.exprs[k], pair.inverse_metric.exprs[i, j]) for k in range(2)] for j in range(2)] for i in range(2)]
    pu = sample_field(g, table, "uuu", CostateField, variant="upper-sym")
    S = np.einsum("...ij,...ijk->...k", pair.metric.values, pu.values)
    s_err = float(np.abs(S - 2 * Cv).max())
    dual = duality_flux_divergence(pair.metric, pu)
    ok = adj < 1e-8 and dual < 1e-12 and s_err < 1e-12
    return ok, f"adjoint residual {adj:.1e} (< 1e-8), S^k - n C^k {s_err:.1e}, flux divergence {dual:.1e} (< 1e-12)"


# --------------------------------------------------------------------------
# 9. maximum principle certificate


def check_certificate():
    g = unit(2, 17)
    pair = conformal_pair(g, (1, 1), 1.0)
    Cv = np.array([-1.0, -0.5])
    C = constant_field(g, Cv, "u")
    p = costate_from_C(C, pair.metric)
    spec = BolzaSpec("divergence", matched_divergence_field(C, pair.metric))
    good = mp_certificate(pair.inverse_metric, pair.connection, p, spec, C, samples=1000, seed=0)
    G = np.array(pair.connection.values)
    G[..., 0, 0, 1] *= -1  # Gamma^1_12, a bang component with coefficient -C^2
    G[..., 0, 1, 0] *= -1
    flipped = ConnectionField(g, G, box_constrained=True)
    bad = mp_certificate(pair.inverse_metric, flipped, p, spec, C, samples=1000, seed=0)
    gap = bad.clauses["hamiltonian_max"].residual
    need = 2 * np.abs(Cv).min() - 1e-9
    ok = good.passed and not bad.clauses["hamiltonian_max"].passed and gap >= need
    return ok, f"matched pair passes all {len(good.clauses)} clauses; flipped gap {gap:.3f} (>= {need:.3f})"


# --------------------------------------------------------------------------
# 10. pipe


def check_pipe():
    th, z = np.meshgrid(np.linspace(0, 2 * np.pi, 25), np.linspace(0, 1, 9), indexing="ij")
    rho = np.linspace(0.05, 1, 25)[:, None] * np.ones_like(z)
    radial = pipe_optimal_metric(PipeFlow.cartesian("x", "y", "0"))
    axial = pipe_optimal_metric(PipeFlow.cartesian("0", "0", "1"))
    s_rad = bool(np.all(radial.sign(th, z) == 1))
    f_err = float(np.abs(radial.conformal_factor(rho, th, z) / np.exp(2 * rho) - 1).max())
    s_ax = bool(np.all(axial.sign(th, z) == 0))
    flows = [
        PipeFlow.cartesian("x", "y", "0"),
        PipeFlow.cartesian("0", "0", "1"),
        PipeFlow.cartesian("x*z - y", "y^2 + 1", "sin(x)"),
        PipeFlow.cylindrical("rho^2", "cos(theta)", "z"),
    ]
    rt = max(round_trip_error(F) for F in flows)
    mesh = pipe_mesh(PipeFlow.cartesian("1", "0", "z"), 0.2, (32, 5))
    S, r = mesh.S.ravel(), mesh.radius.ravel()
    order = np.argsort(S, kind="stable")
    monotone = bool(np.all(np.diff(r[order]) >= 0)) and len(set(S)) == 3
    ok = s_rad and f_err < 1e-14 and s_ax and rt < 1e-12 and monotone
    return ok, (
        f"radial S = +1: {s_rad}, factor error {f_err:.0e}; axial S = 0: {s_ax}; "
        f"round trip {rt:.1e} (< 1e-12); radius monotone in S: {monotone}"
    )


# --------------------------------------------------------------------------
# 11. parser

# (source, n, point, value, variable, derivative text, derivative value); derived by hand
GOLDENS = [
    ("x1^2 + x2", 2, (3.0, 4.0), 13.0, 1, "2*x1", 6.0),
    ("exp(-2*(x1+x2))", 2, (0.25, 0.25), math.exp(-1.0), 2, "-2*exp(-2*(x1+x2))", -2 * math.exp(-1.0)),
    ("2^3^2", 1, (0.0,), 512.0, 1, "0", 0.0),
    ("-2^2", 1, (0.0,), -4.0, 1, "0", 0.0),
    ("sin(x1)*cos(x2)", 2, (0.5, 0.0), math.sin(0.5), 1, "cos(x1)*cos(x2)", math.cos(0.5)),
    ("x1/x2", 2, (1.0, 2.0), 0.5, 2, "-x1/x2^2", -0.25),
    ("log(x1)", 1, (1.0,), 0.0, 1, "1/x1", 1.0),
    ("sqrt(x1)", 1, (4.0,), 2.0, 1, "1/(2*sqrt(x1))", 0.25),
    ("x1^3 - 3*x1", 1, (2.0,), 2.0, 1, "3*x1^2-3", 9.0),
    ("abs(x1 - 1)", 1, (3.0,), 2.0, 1, "sgn(x1-1)", 1.0),
    ("sgn(x1)*x2", 2, (-2.0, 5.0), -5.0, 1, "0", 0.0),
    ("atan2(x2, x1)", 2, (1.0, 1.0), math.pi / 4, 1, "-x2/(x2^2+x1^2)", -0.5),
    ("x1^x2", 2, (2.0, 3.0), 8.0, 2, "x1^x2*log(x1)", 8 * math.log(2.0)),
    ("pi*x1", 1, (2.0,), 2 * math.pi, 1, "3.141592653589793", math.pi),
    ("(x1 + 1)*(x1 - 1)", 1, (3.0,), 8.0, 1, "x1-1+(x1+1)", 6.0),
    ("exp(x1)^2", 1, (0.0,), 1.0, 1, "2*exp(x1)*exp(x1)", 2.0),
    ("1/x1", 1, (2.0,), 0.5, 1, "-1/x1^2", -0.25),
    ("x1*x2*x3", 3, (1.0, 2.0, 3.0), 6.0, 3, "x1*x2", 2.0),
    ("-(x1 - x2)", 2, (1.0, 4.0), 3.0, 2, "1", 1.0),
    ("x2 - (x1 - x3)", 3, (1.0, 2.0, 3.0), 4.0, 1, "-1", -1.0),
]


def check_parser():
    failures = []
    for src, n, pt, val, k, dtext, dval in GOLDENS:
        e = parse(src, n)
        d = differentiate(e, k)
        if evaluate(e, pt) != val or to_string(d) != dtext or evaluate(d, pt) != dval:
            failures.append(src)
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 4))
        e = parse(random_smooth_expr(rng, n), n)
        x = rng.uniform(0.2, 0.8, n)
        for k in range(1, n + 1):
            sym = evaluate(differentiate(e, k), x)
            fd = central_difference(e, x, k, 1e-5)
            worst = max(worst, abs(sym - fd) / max(1.0, abs(sym)))
    ok = not failures and worst < 1e-6
    return ok, f"{len(GOLDENS) - len(failures)}/{len(GOLDENS)} goldens exact; symbolic vs differences {worst:.1e} (< 1e-6)"


CRITERIA = [
    (1, "conformal soliton", check_conformal_solitons),
    (2, "rank-one soliton", check_rank_one),
    (3, "evolution vs closed form", check_evolution),
    (4, "Levi-Civita oracle", check_levi_civita),
    (5, "integrability", check_integrability),
    (6, "bang-bang optimality", check_bang_bang),
    (7, "divergence theorem", check_divergence_theorem),
    (8, "adjoint and duality", check_adjoint_duality),
    (9, "certificate", check_certificate),
    (10, "pipe", check_pipe),
    (11, "parser", check_parser),
]


@pytest.mark.parametrize("number, title, check", CRITERIA, ids=[f"criterion_{c[0]:02d}" for c in CRITERIA])
def test_criterion(number, title, check, capsys):
    passed, detail = check()
    assert report(number, title, passed, detail, capsys), detail


if __name__ == "__main__":
    results = [report(num, title, *check()) for num, title, check in CRITERIA]
    sys.exit(0 if all(results) else 1)
