import itertools

import numpy as np
import pytest

from riemopt.evolution import (
    EvolutionError,
    EvolutionProblem,
    adjoint_defect,
    adjoint_residual,
    compat_residual,
    compat_rhs,
    duality_flux_divergence,
    evolve_metric,
    max_relative_error,
    path_independence_check,
)
from riemopt.fieldexpr import mul
from riemopt.grid import (
    ConnectionField,
    CostateField,
    Domain,
    GridSpec,
    TensorField,
    constant_field,
    make_grid,
    sample_field,
)
from riemopt.solutions import conformal_pair

from helpers import conformal_inverse_metric_values


def loop_rhs(g, G, k, mode):
    n = g.shape[0]
    out = np.zeros((n, n))
    for i, j, s in itertools.product(range(n), repeat=3):
        if mode == "primal":
            out[i, j] += g[i, s] * G[s, j, k] + g[j, s] * G[s, i, k]
        else:
            out[i, j] -= g[i, s] * G[j, s, k] + g[j, s] * G[i, s, k]
    return out


@pytest.mark.parametrize("mode", ["primal", "dual"])
def test_rhs_matches_index_loops(mode):
    rng = np.random.default_rng(3)
    for n in (1, 2, 3):
        a = rng.normal(size=(n, n))
        g = a + a.T
        G = rng.normal(size=(n, n, n))
        G = G + np.swapaxes(G, 1, 2)
        for k in range(n):
            np.testing.assert_allclose(compat_rhs(g, G, k, mode), loop_rhs(g, G, k, mode), atol=1e-13)


def test_problem_validation():
    g = make_grid(Domain.unit(2), GridSpec((5, 5)))
    gamma = constant_field(g, np.zeros((2, 2, 2)), "udd", ConnectionField)
    with pytest.raises(EvolutionError):
        EvolutionProblem(g, gamma, np.eye(3))
    with pytest.raises(EvolutionError):
        EvolutionProblem(g, gamma, [[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(EvolutionError):
        EvolutionProblem(g, gamma, np.eye(2), "sideways")


def test_dual_conformal_matches_closed_form():
    g = make_grid(Domain.unit(2), GridSpec((33, 33)))
    pair = conformal_pair(g, (1, 1), 1.0)
    out = evolve_metric(EvolutionProblem(g, pair.connection, np.eye(2), "dual"))
    exact = TensorField(g, conformal_inverse_metric_values(g, (1, 1), 1.0), "uu")
    assert max_relative_error(out, exact) < 1e-5


def test_primal_conformal_3d():
    g = make_grid(Domain.unit(3), GridSpec((9, 9, 9)))
    pair = conformal_pair(g, (1, -1, 0), 2.0)
    out = evolve_metric(EvolutionProblem(g, pair.connection, np.eye(3) / 2.0, "primal"))
    assert max_relative_error(out, pair.metric) < 1e-4


def test_rk4_order():
    errs = []
    for m in (33, 65):
        g = make_grid(Domain.unit(1), GridSpec((m,)))
        gamma = sample_field(g, [[["sin(3*x1)"]]], "udd", ConnectionField)
        out = evolve_metric(EvolutionProblem(g, gamma, [[1.0]], "primal"))
        x = g.axes[0]
        exact = np.exp(2 * (1 - np.cos(3 * x)) / 3)
        errs.append(np.abs(out.values[:, 0, 0] - exact).max())
    assert 13 < errs[0] / errs[1] < 20


def test_sweep_orders_agree_for_compatible_pair():
    g = make_grid(Domain.unit(2), GridSpec((17, 17)))
    pair = conformal_pair(g, (1, -1), 1.0)
    prob = EvolutionProblem(g, pair.connection, np.eye(2), "dual")
    assert path_independence_check(prob) < 1e-10
    with pytest.raises(EvolutionError):
        evolve_metric(prob, order=(0, 0))


def test_sweep_orders_disagree_without_integrability():
    g = make_grid(Domain.unit(2), GridSpec((17, 17)))
    gamma = sample_field(g, [[["x2", "0"], ["0", "0"]], [["0", "0"], ["0", "0"]]], "udd", ConnectionField)
    prob = EvolutionProblem(g, gamma, np.eye(2), "primal")
    assert path_independence_check(prob) > 1e-2


def test_blow_up_names_point():
    g = make_grid(Domain((0.0,), (200.0,)), GridSpec((201,)))
    gamma = constant_field(g, [[[1.0]]], "udd", ConnectionField)
    with pytest.raises(EvolutionError, match=r"blow-up .* at \(1"):
        evolve_metric(EvolutionProblem(g, gamma, [[1.0]], "primal"))


def test_compat_residual_of_closed_form_is_zero():
    g = make_grid(Domain.unit(2), GridSpec((9, 9)))
    pair = conformal_pair(g, (0, 1), 0.5)
    assert compat_residual(pair.inverse_metric, pair.connection) < 1e-13
    assert compat_residual(pair.metric, pair.connection) < 1e-13


class TestAdjoint:
    @pytest.fixture
    def pair(self):
        g = make_grid(Domain.unit(2), GridSpec((9, 9)))
        return conformal_pair(g, (1, -1), 1.0)

    def _upper(self, pair, C):
        n = pair.connection.n
        table = [[[mul(C.exprs[k], pair.inverse_metric.exprs[i, j]) for k in range(n)]
                  for j in range(n)] for i in range(n)]
        return sample_field(pair.connection.grid, table, "uuu", CostateField, variant="upper-sym")

    def _lower(self, pair, C):
        n = pair.connection.n
        table = [[[mul(C.exprs[k], pair.metric.exprs[i, j]) for j in range(n)]
                  for i in range(n)] for k in range(n)]
        return sample_field(pair.connection.grid, table, "udd", CostateField, variant="lower")

    def test_lower_costate_with_solenoidal_C(self, pair):
        C = sample_field(pair.connection.grid, ["sin(x2)", "cos(x1)"], "u")
        p = self._lower(pair, C)
        assert adjoint_residual(p, pair.connection) < 1e-12

    def test_upper_costate_with_solenoidal_C(self, pair):
        C = sample_field(pair.connection.grid, ["x2^2", "x1"], "u")
        p = self._upper(pair, C)
        assert adjoint_residual(p, pair.connection, "upper-sym") < 1e-12
        with pytest.raises(EvolutionError):
            adjoint_residual(p, pair.connection, "lower")

    def test_divergent_C_fails(self, pair):
        C = sample_field(pair.connection.grid, ["x1", "0"], "u")
        defect = adjoint_defect(self._lower(pair, C), pair.connection)
        # the defect is exactly (div C) g_ij
        np.testing.assert_allclose(defect, pair.metric.values, atol=1e-12)

    def test_duality_flux(self, pair):
        C = sample_field(pair.connection.grid, ["sin(x2)", "cos(x1)"], "u")
        p = self._upper(pair, C)
        assert duality_flux_divergence(pair.metric, p) < 1e-12
        # same check through grid differences
        raw = CostateField(p.grid, p.values, "upper-sym")
        assert duality_flux_divergence(pair.metric.with_values(pair.metric.values), raw) < 1e-2

    def test_duality_needs_upper(self, pair):
        C = constant_field(pair.connection.grid, [1.0, 0.0], "u")
        with pytest.raises(EvolutionError):
            duality_flux_divergence(pair.metric, self._lower(pair, C))
