import io
import math

import numpy as np
import pytest

from riemopt.fieldexpr import EvalError, to_string
from riemopt.grid import Domain, GridSpec, make_grid
from riemopt.solutions import (
    PipeFlow,
    SolitonParams,
    conformal_connection,
    conformal_pair,
    field_transform,
    pipe_mesh,
    pipe_optimal_metric,
    rank_one_pair,
    round_trip_error,
    verify_closed_form,
)

from helpers import conformal_inverse_metric_values, rank_one_values


def grid(n, m=5):
    return make_grid(Domain.unit(n), GridSpec((m,) * n))


class TestConformal:
    def test_connection_formula(self):
        G = conformal_connection((1, -1))
        # Gamma^k_ij = d^k_i e_j + d^k_j e_i - d_ij e^k
        assert G[0, 0, 0] == 1 and G[0, 0, 1] == -1 and G[0, 1, 1] == -1
        assert G[1, 0, 0] == 1 and G[1, 0, 1] == 1 and G[1, 1, 1] == -1

    def test_values_match_independent_formula(self):
        g = grid(3)
        pair = conformal_pair(g, (1, 0, -1), 2.0)
        np.testing.assert_allclose(
            pair.inverse_metric.values, conformal_inverse_metric_values(g, (1, 0, -1), 2.0), rtol=1e-15
        )
        prod = np.einsum("...ij,...jk->...ik", pair.metric.values, pair.inverse_metric.values)
        np.testing.assert_allclose(prod, np.broadcast_to(np.eye(3), prod.shape), atol=1e-14)

    def test_residual(self):
        assert verify_closed_form(conformal_pair(grid(2), (1, 1), 0.5)) < 1e-12

    def test_bad_parameters(self):
        with pytest.raises(ValueError):
            conformal_pair(grid(2), (1, 1), -1.0)
        with pytest.raises(ValueError):
            conformal_pair(grid(2), (1, 1, 1), 1.0)
        with pytest.raises(ValueError, match="sign vector"):
            conformal_pair(grid(2), (1, 2), 1.0)


class TestRankOne:
    def test_values_match_independent_formula(self):
        g = grid(2)
        pair = rank_one_pair(g, (1, -1), 1.0, (0.25, -0.25))
        np.testing.assert_allclose(
            pair.inverse_metric.values, rank_one_values(g, (1, -1), 1.0, (0.25, -0.25)), rtol=1e-14
        )
        assert pair.semi_riemannian_candidate
        assert pair.inverse_metric.semi_riemannian_candidate

    def test_sign_of_the_intermediate_equation(self):
        pair = rank_one_pair(grid(3), (1, 1, -1), 1.0, (0.5, -0.2, -0.3))
        assert verify_closed_form(pair, "pde") < 1e-12
        assert verify_closed_form(pair, "remark") > 1.0

    def test_alphas_must_sum_to_zero(self):
        with pytest.raises(ValueError, match="sum to zero"):
            rank_one_pair(grid(2), (1, 1), 1.0, (0.5, 0.4))
        with pytest.raises(ValueError):
            SolitonParams("rank-one", (1, 1), alphas=(0.0,))

    def test_zero_entry_warns(self):
        with pytest.warns(RuntimeWarning, match="nonzero"):
            rank_one_pair(grid(2), (1, 0), 1.0, (0.0, 0.0))

    def test_unknown_convention(self):
        with pytest.raises(ValueError):
            verify_closed_form(conformal_pair(grid(1), (1,), 1.0), "other")


class TestTransforms:
    def test_radial_flow_components(self):
        F = field_transform(PipeFlow.cartesian("x", "y", "0"), "cylindrical")
        pts = (np.array([0.3, 0.9]), np.array([0.4, 2.5]), np.array([0.1, 0.7]))
        vals = F.evaluate(*pts)
        np.testing.assert_allclose(vals[:, 0], pts[0], atol=1e-15)
        np.testing.assert_allclose(vals[:, 1:], 0.0, atol=1e-15)

    def test_rotation_has_unit_angular_rate(self):
        F = field_transform(PipeFlow.cartesian("-y", "x", "1"), "cylindrical")
        vals = F.evaluate(np.array([0.2, 0.7]), np.array([1.0, -2.0]), np.array([0.5, 0.5]))
        np.testing.assert_allclose(vals, [[0, 1, 1], [0, 1, 1]], atol=1e-15)

    def test_inverse_transform(self):
        F = field_transform(PipeFlow.cylindrical("1", "0", "0"), "cartesian")
        x, y = np.array([0.3]), np.array([0.4])
        np.testing.assert_allclose(F.evaluate(x, y, np.array([0.0]))[0], [0.6, 0.8, 0.0], atol=1e-15)

    @pytest.mark.parametrize(
        "F",
        [
            PipeFlow.cartesian("x", "y", "0"),
            PipeFlow.cartesian("x*z - y", "y^2 + 1", "sin(x)"),
            PipeFlow.cylindrical("rho^2", "cos(theta)", "z"),
            PipeFlow.cylindrical("1", "theta", "0"),
        ],
    )
    def test_round_trip(self, F):
        assert round_trip_error(F) < 1e-12

    def test_cylindrical_needs_positive_radius(self):
        with pytest.raises(EvalError):
            PipeFlow.cylindrical("1", "0", "0").evaluate(0.0, 0.0, 0.0)

    def test_aliases(self):
        F = PipeFlow.cylindrical("rho*z", "theta", "1")
        assert to_string(F.components[0]) == "x1*x3"
        with pytest.raises(ValueError):
            PipeFlow("polar", ("1", "0", "0"))


class TestPipeMetric:
    def test_radial_outflow(self):
        m = pipe_optimal_metric(PipeFlow.cartesian("x", "y", "0"))
        th = np.linspace(0, 2 * np.pi, 13)
        z = np.linspace(0, 1, 13)
        assert np.all(m.sign(th, z) == 1)
        assert np.all(m.sign_cartesian(th, z) == 1)
        rho = np.linspace(0.1, 1, 13)
        np.testing.assert_allclose(m.conformal_factor(rho, th, z), np.exp(2 * rho), rtol=1e-15)
        cyl = m.cylindrical(rho, th, z)
        np.testing.assert_allclose(cyl[:, 1, 1], np.exp(2 * rho))

    def test_axial_flow(self):
        m = pipe_optimal_metric(PipeFlow.cartesian("0", "0", "1"))
        th = np.linspace(0, 2 * np.pi, 7)
        assert np.all(m.sign(th, 0.5) == 0)
        np.testing.assert_allclose(m.conformal_factor(0.5, th, 0.5), 1.0)

    def test_mixed_flow(self):
        m = pipe_optimal_metric(PipeFlow.cartesian("1", "0", "0"), K=2.0)
        assert m.sign(0.0, 0.0) == 1 and m.sign(math.pi, 0.0) == -1 and m.sign(math.pi / 2, 0.0) == 0
        np.testing.assert_array_equal(m.sign(np.array([0.3, 2.0]), 0.0), m.sign_cartesian(np.array([0.3, 2.0]), 0.0))
        g = m.cartesian(np.array([0.5, -0.5]), np.array([0.0, 0.0]), np.array([0.0, 0.0]))
        np.testing.assert_allclose(g[0], 2 * math.e * np.diag([1, 0.25, 1]))
        np.testing.assert_allclose(g[1], 2 / math.e * np.diag([1, 0.25, 1]))


class TestMesh:
    def test_radius_follows_sign(self):
        mesh = pipe_mesh(PipeFlow.cartesian("1", "0", "0"), 0.2, (16, 4))
        order = np.argsort(mesh.S.ravel(), kind="stable")
        r = mesh.radius.ravel()[order]
        assert np.all(np.diff(r) >= 0)
        np.testing.assert_allclose(np.unique(mesh.radius), np.exp([-0.2, 0.0, 0.2]))

    def test_topology(self):
        mesh = pipe_mesh(PipeFlow.cartesian("x", "y", "0"), 0.2, (12, 5))
        assert mesh.vertices.shape == (60, 3)
        assert mesh.faces.shape == (2 * 12 * 4, 3)
        # an open tube: only the two end rings are boundary edges
        assert len(mesh.boundary_edges()) == 24
        np.testing.assert_allclose(np.hypot(mesh.vertices[:, 0], mesh.vertices[:, 1]), math.exp(0.2))

    def test_obj_and_csv(self):
        mesh = pipe_mesh(PipeFlow.cartesian("0", "0", "1"), 0.2, (4, 2))
        buf = io.StringIO()
        mesh.to_obj(buf)
        lines = buf.getvalue().splitlines()
        assert sum(l.startswith("v ") for l in lines) == 8
        faces = [l for l in lines if l.startswith("f ")]
        assert len(faces) == 8
        idx = [int(t) for l in faces for t in l.split()[1:]]
        assert min(idx) == 1 and max(idx) == 8
        buf = io.StringIO()
        mesh.to_csv(buf)
        rows = buf.getvalue().splitlines()
        assert rows[0] == "theta,z,S,r" and len(rows) == 9

    def test_amplitude_range(self):
        with pytest.raises(ValueError):
            pipe_mesh(PipeFlow.cartesian("x", "y", "0"), 0.0)
        with pytest.raises(ValueError):
            pipe_mesh(PipeFlow.cartesian("x", "y", "0"), 0.2, (2, 2))
