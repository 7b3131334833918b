import itertools

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from madelung_strain import framestrain as fs
from madelung_strain import grid as g
from madelung_strain import metricstrain as ms
from madelung_strain.cli import verify
from madelung_strain.errors import ConfigurationError
from madelung_strain.grid import Grid, MatrixField, sample

COORDS = sp.symbols("t x y z")
ETA = sp.diag(1, -1, -1, -1)


def symbolic_einstein(metric: sp.Matrix) -> sp.Matrix:
    """Brute-force Einstein tensor, no simplification (evaluated numerically)."""
    ginv = metric.inv()
    n = 4
    gam = [[[sum(ginv[l, a] * (sp.diff(metric[a, m], COORDS[k]) + sp.diff(metric[a, k], COORDS[m])
                               - sp.diff(metric[m, k], COORDS[a])) for a in range(n)) / 2
             for k in range(n)] for m in range(n)] for l in range(n)]

    def riem(r, s, m, k):
        out = sp.diff(gam[r][k][s], COORDS[m]) - sp.diff(gam[r][m][s], COORDS[k])
        out += sum(gam[r][m][l] * gam[l][k][s] - gam[r][k][l] * gam[l][m][s] for l in range(n))
        return out

    ric = sp.Matrix(n, n, lambda s, k: sum(riem(r, s, r, k) for r in range(n)))
    scal = sum(ginv[a, b] * ric[a, b] for a in range(n) for b in range(n))
    return ric - scal / 2 * metric


@pytest.fixture(scope="module")
def conformal_oracle():
    t, x, y, z = COORDS
    w = verify.PHI_WIDTHS
    phi = verify.PHI_AMPLITUDE * sp.exp(-(w[0] * x**2 + w[1] * y**2 + w[2] * z**2)) * (1 + x / 2)
    return sp.lambdify(COORDS, symbolic_einstein(sp.exp(2 * phi) * ETA), "numpy")


@pytest.fixture(scope="module")
def grid4():
    return Grid.lorentzian((7, 9, 9, 9), 0.15, (0.0, -0.6, -0.6, -0.6))


def strain_field(grid, E):
    return ms.MetricStrainField(MatrixField(grid, np.broadcast_to(E, grid.shape + (4, 4)).copy(), symmetry="symmetric"))


class TestStrain:
    def test_metric_roundtrip(self, grid4):
        E = np.diag([0.1, 0.0, -0.05, 0.02])
        m = strain_field(grid4, E)
        np.testing.assert_allclose(m.g_lower.values[0, 0, 0, 0], np.diag([1.1, -1.0, -1.05, -0.98]))
        back = ms.strain_from_metric(m.g_lower)
        np.testing.assert_allclose(back.E_lower.values, m.E_lower.values)

    def test_needs_lorentzian(self):
        G = Grid.euclidean((5, 5, 5, 5), 0.1)
        with pytest.raises(ConfigurationError):
            ms.MetricStrainField(MatrixField(G, np.zeros(G.shape + (4, 4))))

    def test_singular_points_masked(self, grid4):
        E = np.zeros(grid4.shape + (4, 4))
        E[3, 4, 4, 4, 0, 0] = -1.0
        m = ms.MetricStrainField(MatrixField(grid4, E, symmetry="symmetric"))
        assert m.singular.sum() == 1 and not m.mask[3, 4, 4, 4]

    @pytest.mark.parametrize("E", [np.zeros((4, 4)), np.diag([0.05, -0.02, 0.03, 0.01]) + 0.01 * (1 - np.eye(4))])
    def test_constant_strain_is_flat(self, grid4, E):
        m = strain_field(grid4, E)
        assert g.sup_norm(ms.connection_from_strain(m)) == 0.0
        st_ = ms.curvature_stack(m)
        assert max(g.sup_norm(f) for f in (st_.riemann, st_.ricci, st_.scalar, st_.einstein)) == 0.0


class TestInverseStrain:
    @settings(max_examples=15, deadline=None)
    @given(st.floats(-0.3, 0.3))
    def test_exact_relation(self, eps):
        G = Grid.lorentzian((5, 5, 5, 5), 0.1)
        E = np.diag([eps, 0.5 * eps, 0.0, -eps])
        E[0, 1] = E[1, 0] = 0.1 * eps
        assert ms.inverse_strain_pair(strain_field(G, E)).residual < 1e-12

    def test_first_order_error_quadratic(self, grid4):
        eps = np.array([1e-1, 1e-2, 1e-3])
        errs = [ms.inverse_strain_pair(strain_field(grid4, np.diag([e, 0, 0, 0]))).first_order_error for e in eps]
        slope = np.polyfit(np.log(eps), np.log(errs), 1)[0]
        assert slope == pytest.approx(2.0, abs=0.1)
        # E^00 = 1/(1 + eps) - 1, so the gap is eps^2 / (1 + eps)
        assert errs[1] == pytest.approx(1e-4 / 1.01, rel=1e-8)


class TestCurvature:
    def test_routes_agree(self, grid4):
        x0, x, y, z = grid4.mesh()
        E = np.zeros(grid4.shape + (4, 4))
        E[..., 0, 0] = -0.02 * np.exp(-(x * x + y * y + z * z))
        E[..., 1, 2] = E[..., 2, 1] = 0.01 * np.sin(x0 + y)
        m = ms.MetricStrainField(MatrixField(grid4, E, symmetry="symmetric"))
        gam = ms.connection_from_strain(m)
        other = ms.levi_civita(m.g_lower)
        np.testing.assert_allclose(gam.values[gam.mask], other.values[gam.mask], atol=1e-14)

    def test_conformal_einstein_matches_sympy(self, conformal_oracle):
        grid = Grid.lorentzian((5, 13, 13, 13), 0.1, (0.0, -0.6, -0.6, -0.6))
        ex = verify.conformal_einstein(grid)
        for idx in [(2, 6, 6, 6), (1, 3, 8, 10), (4, 11, 2, 5)]:
            point = [c[i] for c, i in zip(grid.coords(), idx)]
            np.testing.assert_allclose(ex[idx], np.array(conformal_oracle(*point), dtype=float), atol=1e-12)

    def test_conformal_einstein_numeric(self, conformal_oracle):
        grid = Grid.lorentzian((9, 13, 13, 13), 0.1, (0.0, -0.6, -0.6, -0.6))
        phi, _, _ = verify.conformal_phi_derivatives(grid)
        E = (np.exp(2 * phi) - 1)[..., None, None] * grid.eta
        stack = ms.curvature_stack(ms.MetricStrainField(MatrixField(grid, E, symmetry="symmetric")))
        idx = (4, 6, 6, 6)
        point = [c[i] for c, i in zip(grid.coords(), idx)]
        exact = np.array(conformal_oracle(*point), dtype=float)
        assert np.max(np.abs(stack.einstein.values[idx] - exact)) <= 5 * grid.h**2 * np.max(np.abs(exact))
        assert stack.first_bianchi < 1e-12
        # the discrete Ricci tensor is symmetric only to truncation order
        assert stack.einstein_asymmetry <= 10 * grid.h**2 * g.sup_norm(stack.einstein)

    def test_einstein_divergence_small(self):
        grid = Grid.lorentzian((9, 13, 13, 13), 0.1, (0.0, -0.6, -0.6, -0.6))
        phi, _, _ = verify.conformal_phi_derivatives(grid)
        E = (np.exp(2 * phi) - 1)[..., None, None] * grid.eta
        stack = ms.curvature_stack(ms.MetricStrainField(MatrixField(grid, E, symmetry="symmetric")))
        assert g.sup_norm(ms.einstein_divergence(stack)) <= 10 * grid.h**2


class TestVierbein:
    def test_identity_gives_flat(self, grid4):
        v = ms.VierbeinField(MatrixField(grid4, np.broadcast_to(np.eye(4), grid4.shape + (4, 4)).copy()))
        np.testing.assert_allclose(ms.vierbein_metric(v).values, np.broadcast_to(grid4.eta, grid4.shape + (4, 4)))

    def test_scaled_identity(self, grid4):
        v = ms.VierbeinField(MatrixField(grid4, np.broadcast_to(2 * np.eye(4), grid4.shape + (4, 4)).copy()))
        np.testing.assert_allclose(ms.vierbein_metric(v).values[0, 0, 0, 0], 4 * grid4.eta)

    @pytest.mark.parametrize("rapidity, axis", [(0.3, 1), (-1.2, 2), (2.0, 3)])
    def test_boost_preserves_eta(self, grid4, rapidity, axis):
        L = ms.boost(rapidity, axis)
        v = ms.VierbeinField(MatrixField(grid4, np.broadcast_to(L, grid4.shape + (4, 4)).copy()))
        np.testing.assert_allclose(ms.vierbein_metric(v).values[1, 2, 3, 4], grid4.eta, atol=1e-12)

    def test_matches_conformal_deformation(self, grid4):
        c = fs.ConformalDeformation(sample(grid4, lambda t, x, y, z: np.exp(0.2 * x * y - 0.1 * t)))
        v = ms.VierbeinField(c.coframe().h)
        np.testing.assert_allclose(ms.vierbein_metric(v).values, c.metric().values, rtol=1e-12, atol=1e-12)

    def test_singular_rejected(self, grid4):
        h = np.broadcast_to(np.diag([1.0, 1.0, 1.0, 0.0]), grid4.shape + (4, 4)).copy()
        with pytest.raises(ConfigurationError):
            ms.VierbeinField(MatrixField(grid4, h))


def test_riemann_pair_antisymmetry(grid4):
    x0, x, y, z = grid4.mesh()
    E = np.zeros(grid4.shape + (4, 4))
    for a, b in itertools.combinations_with_replacement(range(4), 2):
        E[..., a, b] = E[..., b, a] = 0.01 * np.cos(a * x + b * y + z)
    st_ = ms.curvature_stack(ms.MetricStrainField(MatrixField(grid4, E, symmetry="symmetric")))
    assert st_.pair_antisymmetry < 1e-15
